//! Tabular choice data: loading, validation, standardization, and splitting.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature matrix with named columns and a 1-based ordinal label per row.
///
/// Features are stored row-major. Every label lies in `1..=K` and every
/// feature value is finite; both are checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    features: Vec<f64>,
    labels: Vec<u32>,
    n_categories: usize,
    category_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        features: Vec<f64>,
        labels: Vec<u32>,
        n_categories: usize,
    ) -> Result<Self> {
        if n_categories == 0 {
            return Err(Error::config("number of categories must be positive"));
        }
        let p = feature_names.len();
        if features.len() != p * labels.len() {
            return Err(Error::DimensionMismatch {
                what: "feature values",
                expected: p * labels.len(),
                got: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "features",
                index: if p == 0 { 0 } else { i / p },
            });
        }
        for (row, &y) in labels.iter().enumerate() {
            if y == 0 || y as usize > n_categories {
                return Err(Error::LabelOutOfRange {
                    row,
                    label: y.to_string(),
                    k: n_categories,
                });
            }
        }
        Ok(Self {
            feature_names,
            features,
            labels,
            n_categories,
            category_names: None,
        })
    }

    pub fn from_rows(
        feature_names: Vec<String>,
        rows: &[Vec<f64>],
        labels: Vec<u32>,
        n_categories: usize,
    ) -> Result<Self> {
        let p = feature_names.len();
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "rows",
                expected: labels.len(),
                got: rows.len(),
            });
        }
        let mut features = Vec::with_capacity(rows.len() * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    what: "row width",
                    expected: p,
                    got: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        Self::new(feature_names, features, labels, n_categories)
    }

    pub fn with_category_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_categories {
            return Err(Error::DimensionMismatch {
                what: "category names",
                expected: self.n_categories,
                got: names.len(),
            });
        }
        self.category_names = Some(names);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn category_names(&self) -> Option<&[String]> {
        self.category_names.as_deref()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.features[i * p..(i + 1) * p]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row(i)[j]).collect()
    }

    pub fn category_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_categories];
        for &y in &self.labels {
            counts[y as usize - 1] += 1;
        }
        counts
    }

    /// Fitting requires every category to be observed at least once.
    pub fn ensure_all_categories(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        match self.category_counts().iter().position(|&c| c == 0) {
            Some(k) => Err(Error::MissingCategory(k as u32 + 1)),
            None => Ok(()),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let p = self.n_features();
        let mut features = Vec::with_capacity(indices.len() * p);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            feature_names: self.feature_names.clone(),
            features,
            labels,
            n_categories: self.n_categories,
            category_names: self.category_names.clone(),
        }
    }

    /// Keep only the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::UnknownColumn(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        let mut features = Vec::with_capacity(self.n_rows() * idx.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            features.extend(idx.iter().map(|&j| row[j]));
        }
        Ok(Dataset {
            feature_names: names.to_vec(),
            features,
            labels: self.labels.clone(),
            n_categories: self.n_categories,
            category_names: self.category_names.clone(),
        })
    }

    /// Stack `self` on top of `other` (same schema).
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_names != other.feature_names || self.n_categories != other.n_categories {
            return Err(Error::config("datasets do not share a schema"));
        }
        let mut out = self.clone();
        out.features.extend_from_slice(&other.features);
        out.labels.extend_from_slice(&other.labels);
        Ok(out)
    }

    fn map_columns(&self, f: impl Fn(usize, f64) -> f64) -> Dataset {
        let p = self.n_features();
        let features = self
            .features
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % p, v))
            .collect();
        Dataset {
            features,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    /// One coefficient vector shared by every category.
    #[default]
    Generic,
    /// A coefficient vector per category.
    AlternativeSpecific,
}

/// A coefficient held at zero for one (column, category) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub column: String,
    pub category: u32,
}

/// Maps data columns onto model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub feature_columns: Vec<String>,
    pub label_column: String,
    #[serde(default)]
    pub coefficient_mode: CoefficientMode,
    #[serde(default)]
    pub standardize_columns: Vec<String>,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
}

impl DesignSpec {
    pub fn generic(feature_columns: Vec<String>, label_column: impl Into<String>) -> Self {
        Self {
            feature_columns,
            label_column: label_column.into(),
            coefficient_mode: CoefficientMode::Generic,
            standardize_columns: Vec::new(),
            exclusions: Vec::new(),
        }
    }

    pub fn with_mode(mut self, mode: CoefficientMode) -> Self {
        self.coefficient_mode = mode;
        self
    }

    pub fn with_standardized(mut self, columns: Vec<String>) -> Self {
        self.standardize_columns = columns;
        self
    }

    pub fn with_exclusions(mut self, exclusions: Vec<Exclusion>) -> Self {
        self.exclusions = exclusions;
        self
    }

    /// Check the spec against the columns and category count of a dataset.
    pub fn validate(&self, available: &[String], n_categories: usize) -> Result<()> {
        if self.feature_columns.is_empty() {
            return Err(Error::config("feature_columns must not be empty"));
        }
        for (i, c) in self.feature_columns.iter().enumerate() {
            if self.feature_columns[..i].contains(c) {
                return Err(Error::config(format!("duplicate feature column {c:?}")));
            }
            if !available.contains(c) {
                return Err(Error::UnknownColumn(c.clone()));
            }
        }
        for c in &self.standardize_columns {
            if !self.feature_columns.contains(c) {
                return Err(Error::UnknownColumn(c.clone()));
            }
        }
        for ex in &self.exclusions {
            if !self.feature_columns.contains(&ex.column) {
                return Err(Error::UnknownColumn(ex.column.clone()));
            }
            if ex.category == 0 || ex.category as usize > n_categories {
                return Err(Error::config(format!(
                    "exclusion category {} outside 1..={n_categories}",
                    ex.category
                )));
            }
        }
        if !self.exclusions.is_empty() && self.coefficient_mode == CoefficientMode::Generic {
            return Err(Error::config(
                "per-category exclusions require alternative_specific coefficients",
            ));
        }
        Ok(())
    }

    pub fn is_excluded(&self, column: &str, category: u32) -> bool {
        self.exclusions
            .iter()
            .any(|e| e.column == column && e.category == category)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub column: String,
    pub mean: f64,
    pub std_dev: f64,
}

/// Per-column z-scoring statistics from the training set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub columns: Vec<ColumnScaling>,
}

impl ScalingParams {
    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Resolve the scaled columns against a column ordering.
    pub fn bind(&self, names: &[String]) -> Result<BoundScaling> {
        let mut entries = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            let j = names
                .iter()
                .position(|n| *n == c.column)
                .ok_or_else(|| Error::UnknownColumn(c.column.clone()))?;
            entries.push((j, c.mean, c.std_dev));
        }
        Ok(BoundScaling { entries })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let bound = self.bind(ds.feature_names())?;
        let (mean, sd) = bound.dense(ds.n_features());
        Ok(ds.map_columns(|j, v| (v - mean[j]) / sd[j]))
    }

    pub fn invert(&self, ds: &Dataset) -> Result<Dataset> {
        let bound = self.bind(ds.feature_names())?;
        let (mean, sd) = bound.dense(ds.n_features());
        Ok(ds.map_columns(|j, v| v * sd[j] + mean[j]))
    }
}

/// [`ScalingParams`] resolved to column indices.
#[derive(Debug, Clone, Default)]
pub struct BoundScaling {
    entries: Vec<(usize, f64, f64)>,
}

impl BoundScaling {
    #[inline]
    pub fn transform(&self, row: &mut [f64]) {
        for &(j, mean, sd) in &self.entries {
            row[j] = (row[j] - mean) / sd;
        }
    }

    /// Derivative of the scaled value with respect to the raw value of column `j`.
    pub fn slope(&self, j: usize) -> f64 {
        self.entries
            .iter()
            .find(|e| e.0 == j)
            .map_or(1.0, |e| 1.0 / e.2)
    }

    fn dense(&self, p: usize) -> (Vec<f64>, Vec<f64>) {
        let mut mean = vec![0.0; p];
        let mut sd = vec![1.0; p];
        for &(j, m, s) in &self.entries {
            mean[j] = m;
            sd[j] = s;
        }
        (mean, sd)
    }
}

/// Z-score the columns flagged in `spec` using population statistics.
///
/// Columns not present in `ds` are an error; an empty flag list returns the
/// data unchanged with empty [`ScalingParams`].
pub fn standardize(ds: &Dataset, spec: &DesignSpec) -> Result<(Dataset, ScalingParams)> {
    let mut params = ScalingParams::default();
    let n = ds.n_rows();
    if n == 0 && !spec.standardize_columns.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for name in &spec.standardize_columns {
        let j = ds
            .column_index(name)
            .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
        let col = ds.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let std_dev = var.sqrt();
        if !(std_dev > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::ZeroVariance(name.clone()));
        }
        params.columns.push(ColumnScaling {
            column: name.clone(),
            mean,
            std_dev,
        });
    }
    let scaled = params.apply(ds)?;
    Ok((scaled, params))
}

/// Row indices of a seeded train/validation split, each sorted ascending.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train_fraction must lie in (0, 1)"));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::EmptyPartition {
            n_train,
            n_val: n.saturating_sub(n_train),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, val) = split_indices(ds.n_rows(), train_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&val)))
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub label_column: String,
    pub n_categories: usize,
    /// Named categories, e.g. `{"low": 1, "medium": 2, "high": 3}`.
    pub label_map: Option<BTreeMap<String, u32>>,
    /// Drop rows with missing cells instead of rejecting the file.
    pub lenient: bool,
}

impl LoadOptions {
    pub fn new(label_column: impl Into<String>, n_categories: usize) -> Self {
        Self {
            label_column: label_column.into(),
            n_categories,
            label_map: None,
            lenient: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

pub fn load_label_map(path: &Path) -> Result<BTreeMap<String, u32>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(serde_json::from_reader(File::open(path)?)?)
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na")
}

/// Read a header-first CSV; every column except the label is a feature.
pub fn load_csv(path: &Path, opts: &LoadOptions) -> Result<Loaded> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let label_idx = headers
        .iter()
        .position(|h| *h == opts.label_column)
        .ok_or_else(|| Error::UnknownColumn(opts.label_column.clone()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dropped_rows = 0;
    let mut row_buf = Vec::with_capacity(feature_names.len());
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if let Some(j) = record.iter().position(is_missing) {
            if opts.lenient {
                dropped_rows += 1;
                continue;
            }
            return Err(Error::MissingValue {
                row,
                column: headers[j].clone(),
            });
        }
        row_buf.clear();
        let mut label = None;
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                label = Some(parse_label(cell, row, opts)?);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column: headers[j].clone(),
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric {
                    row,
                    column: headers[j].clone(),
                    value: cell.to_owned(),
                });
            }
            row_buf.push(v);
        }
        features.extend_from_slice(&row_buf);
        labels.push(label.expect("label column present in every record"));
    }
    if opts.lenient && dropped_rows > 0 {
        log::warn!("dropped {dropped_rows} rows with missing values from {}", path.display());
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut dataset = Dataset::new(feature_names, features, labels, opts.n_categories)?;
    if let Some(map) = &opts.label_map {
        let mut names = vec![String::new(); opts.n_categories];
        for (name, &k) in map {
            if k >= 1 && (k as usize) <= opts.n_categories {
                names[k as usize - 1] = name.clone();
            }
        }
        dataset = dataset.with_category_names(names)?;
    }
    Ok(Loaded {
        dataset,
        dropped_rows,
    })
}

fn parse_label(cell: &str, row: usize, opts: &LoadOptions) -> Result<u32> {
    let out_of_range = || Error::LabelOutOfRange {
        row,
        label: cell.to_owned(),
        k: opts.n_categories,
    };
    let k = match opts.label_map.as_ref().and_then(|m| m.get(cell)) {
        Some(&k) => k,
        None => cell.parse::<u32>().map_err(|_| out_of_range())?,
    };
    if k == 0 || k as usize > opts.n_categories {
        return Err(out_of_range());
    }
    Ok(k)
}

/// Write features then the label column; labels are written as integers.
pub fn write_csv<W: std::io::Write>(ds: &Dataset, label_column: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..ds.n_rows() {
        record.clear();
        record.extend(ds.row(i).iter().map(|v| v.to_string()));
        record.push(ds.labels()[i].to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn loads_three_row_csv() {
        let f = write_tmp("density,female,wait_cat\n20.5,1,1\n18,0,2\n30.25,1,3\n");
        let ds = load_csv(f.path(), &LoadOptions::new("wait_cat", 3)).unwrap().dataset;
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.n_categories(), 3);
        assert_eq!(ds.feature_names(), &names(&["density", "female"])[..]);
        assert_eq!(ds.row(2), &[30.25, 1.0]);
        assert_eq!(ds.labels(), &[1, 2, 3]);
    }

    #[test]
    fn rejects_label_out_of_range() {
        let f = write_tmp("x,y\n1,1\n2,4\n");
        let err = load_csv(f.path(), &LoadOptions::new("y", 3)).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { row: 1, .. }));
        assert!(err.to_string().contains("label out of range"));
    }

    #[test]
    fn one_row_per_category_is_accepted() {
        let f = write_tmp("x,y\n0.1,1\n0.2,2\n0.3,3\n0.4,4\n0.5,5\n");
        let ds = load_csv(f.path(), &LoadOptions::new("y", 5)).unwrap().dataset;
        ds.ensure_all_categories().unwrap();
        assert_eq!(ds.category_counts(), vec![1; 5]);
    }

    #[test]
    fn load_errors() {
        let missing = load_csv(Path::new("/nonexistent/file.csv"), &LoadOptions::new("y", 2));
        assert!(matches!(missing, Err(Error::MissingFile(_))));

        let f = write_tmp("x,y\nabc,1\n");
        assert!(matches!(
            load_csv(f.path(), &LoadOptions::new("y", 2)),
            Err(Error::NonNumeric { .. })
        ));

        let f = write_tmp("x,y\n");
        assert!(matches!(
            load_csv(f.path(), &LoadOptions::new("y", 2)),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn missing_values_strict_and_lenient() {
        let f = write_tmp("x,z,y\n1,,1\n2,3,2\nNA,4,1\n");
        let strict = load_csv(f.path(), &LoadOptions::new("y", 2));
        assert!(matches!(strict, Err(Error::MissingValue { row: 0, .. })));
        let mut opts = LoadOptions::new("y", 2);
        opts.lenient = true;
        let loaded = load_csv(f.path(), &opts).unwrap();
        assert_eq!(loaded.dropped_rows, 2);
        assert_eq!(loaded.dataset.n_rows(), 1);
    }

    #[test]
    fn named_labels_via_dictionary() {
        let f = write_tmp("x,level\n1,low\n2,high\n3,medium\n");
        let mut opts = LoadOptions::new("level", 3);
        opts.label_map = Some(
            [("low", 1), ("medium", 2), ("high", 3)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        );
        let ds = load_csv(f.path(), &opts).unwrap().dataset;
        assert_eq!(ds.labels(), &[1, 3, 2]);
        assert_eq!(ds.category_names().unwrap()[2], "high");
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (tr, va) = split_indices(100, 0.7, 1).unwrap();
        assert_eq!((tr.len(), va.len()), (70, 30));
        let a = split_indices(10, 0.5, 7).unwrap();
        let b = split_indices(10, 0.5, 7).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.0.iter().chain(&a.1).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(matches!(
            split_indices(2, 0.99, 0),
            Err(Error::EmptyPartition { .. })
        ));
    }

    #[test]
    fn standardize_population_convention() {
        let ds = Dataset::from_rows(names(&["a", "b"]), &[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]], vec![1, 2, 1], 2).unwrap();
        let spec = DesignSpec::generic(names(&["a", "b"]), "y").with_standardized(names(&["a"]));
        let (scaled, params) = standardize(&ds, &spec).unwrap();
        assert!((params.columns[0].mean - 2.0).abs() < 1e-15);
        assert!((params.columns[0].std_dev - 0.816_496_580_927_726).abs() < 1e-12);
        let col = scaled.column(0);
        for (got, want) in col.iter().zip([-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(scaled.column(1), vec![5.0; 3]);

        let none = DesignSpec::generic(names(&["a", "b"]), "y");
        let (same, params) = standardize(&ds, &none).unwrap();
        assert_eq!(same, ds);
        assert!(params.is_empty());

        let constant = DesignSpec::generic(names(&["a", "b"]), "y").with_standardized(names(&["b"]));
        assert!(matches!(standardize(&ds, &constant), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn design_spec_validation() {
        let cols = names(&["a", "b"]);
        assert!(DesignSpec::generic(vec![], "y").validate(&cols, 3).is_err());
        assert!(DesignSpec::generic(names(&["a", "a"]), "y").validate(&cols, 3).is_err());
        assert!(DesignSpec::generic(names(&["c"]), "y").validate(&cols, 3).is_err());
        let bad_cat = DesignSpec::generic(names(&["a"]), "y")
            .with_mode(CoefficientMode::AlternativeSpecific)
            .with_exclusions(vec![Exclusion { column: "a".into(), category: 4 }]);
        assert!(bad_cat.validate(&cols, 3).is_err());
        let ok = DesignSpec::generic(names(&["a"]), "y")
            .with_mode(CoefficientMode::AlternativeSpecific)
            .with_exclusions(vec![Exclusion { column: "a".into(), category: 3 }]);
        ok.validate(&cols, 3).unwrap();
        assert!(ok.is_excluded("a", 3) && !ok.is_excluded("a", 2));
    }

    proptest! {
        #[test]
        fn standardize_inverts(values in prop::collection::vec(-1e3f64..1e3, 3..40)) {
            let n = values.len();
            let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - values.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let ds = Dataset::new(names(&["v"]), values.clone(), vec![1; n], 1).unwrap();
            let spec = DesignSpec::generic(names(&["v"]), "y").with_standardized(names(&["v"]));
            let (scaled, params) = standardize(&ds, &spec).unwrap();
            let back = params.invert(&scaled).unwrap();
            for (a, b) in back.features().iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn csv_round_trip(rows in prop::collection::vec((-1e6f64..1e6, 0u32..2, 1u32..4), 1..30)) {
            let feats: Vec<f64> = rows.iter().flat_map(|r| [r.0, r.1 as f64]).collect();
            let labels: Vec<u32> = rows.iter().map(|r| r.2).collect();
            let ds = Dataset::new(names(&["x", "flag"]), feats, labels, 3).unwrap();
            let mut buf = Vec::new();
            write_csv(&ds, "y", &mut buf).unwrap();
            let f = write_tmp(std::str::from_utf8(&buf).unwrap());
            let back = load_csv(f.path(), &LoadOptions::new("y", 3)).unwrap().dataset;
            prop_assert_eq!(back, ds);
        }
    }
}
