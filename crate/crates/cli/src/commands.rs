use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ochoice::data::{load_csv, load_label_map, split, write_csv, LoadOptions};
use ochoice::discretize::{assign_categories, category_summary, check_thresholds, jenks_breaks};
use ochoice::econ::{
    binary_effect, elasticity, linear_grid, market_share, representatives, substitution_curve, EconReport,
    TOP_CATEGORY_NOTE,
};
use ochoice::evaluation::fit_report;
use ochoice::report::{render, Report, ReportFormat, TableOptions};
use ochoice::reslogit::{self, select_alpha};
use ochoice::synth::{generate, GenSpec};
use ochoice::{fit_ordered_logit, Dataset, DesignSpec, Error, FittedModel, Result};
use serde::Serialize;

use crate::args::{DiscretizeArgs, EvaluateArgs, ModelChoice, ScopeArg, SimulateArgs};
use crate::config::{read_json, AnalyzeConfig, FitConfig};
use crate::output::{sibling_manifest, Run};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

pub fn simulate(args: &SimulateArgs, threads: usize) -> Result<()> {
    let mut run = Run::new("simulate", threads);
    run.input(&args.spec)?;
    let mut spec: GenSpec = read_json(&args.spec)?;
    if let Some(n) = args.n_obs {
        spec.n_obs = n;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if spec.feature_names().contains(&args.label_column) {
        return Err(invalid(format!("label column {:?} clashes with a feature name", args.label_column)));
    }
    let data = generate(&spec)?;
    let mut csv = Vec::new();
    write_csv(&data, &args.label_column, &mut csv)?;
    run.stage(args.out.clone(), csv);

    #[derive(Serialize)]
    struct Resolved<'a> {
        spec: &'a GenSpec,
        label_column: &'a str,
        out: &'a Path,
    }
    let resolved = Resolved { spec: &spec, label_column: &args.label_column, out: &args.out };
    run.finish(&sibling_manifest(&args.out), &resolved, Some(spec.seed))?;
    log::info!("wrote {} observations to {}", data.n_rows(), args.out.display());
    Ok(())
}

pub fn discretize(args: &DiscretizeArgs, threads: usize) -> Result<()> {
    let mut run = Run::new("discretize", threads);
    run.input(&args.input)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&args.input)?;
    let headers = reader.headers()?.clone();
    let j = headers
        .iter()
        .position(|h| h == args.column)
        .ok_or_else(|| Error::UnknownColumn(args.column.clone()))?;
    if headers.iter().any(|h| h == args.label_column) {
        return Err(invalid(format!("column {:?} already exists", args.label_column)));
    }
    let records = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let values = records
        .iter()
        .enumerate()
        .map(|(row, r)| {
            let cell = &r[j];
            if cell.is_empty() {
                return Err(Error::MissingValue { row, column: args.column.clone() });
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonNumeric { row, column: args.column.clone(), value: cell.to_owned() }),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let breaks = match (&args.thresholds, args.classes) {
        (Some(t), _) => {
            check_thresholds(t)?;
            let mut b = category_summary(&assign_categories(&values, t), t)?;
            b.lower_bound = values.iter().copied().reduce(f64::min);
            b.upper_bound = values.iter().copied().reduce(f64::max);
            b
        }
        (None, Some(k)) => jenks_breaks(&values, k)?,
        (None, None) => return Err(invalid("give --classes or --thresholds")),
    };
    let labels = assign_categories(&values, &breaks.thresholds);

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = headers.iter().collect();
    header.push(&args.label_column);
    writer.write_record(&header)?;
    for (record, label) in records.iter().zip(&labels) {
        let label = label.to_string();
        writer.write_record(record.iter().chain(std::iter::once(label.as_str())))?;
    }
    let csv = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let breaks_path = args
        .breaks
        .clone()
        .unwrap_or_else(|| args.out.with_extension("breaks.json"));
    run.stage(args.out.clone(), csv);
    run.stage(breaks_path.clone(), serde_json::to_string_pretty(&breaks)? + "\n");

    #[derive(Serialize)]
    struct Resolved<'a> {
        input: &'a Path,
        column: &'a str,
        classes: usize,
        manual_thresholds: Option<&'a [f64]>,
        label_column: &'a str,
        out: &'a Path,
        breaks: &'a Path,
    }
    let resolved = Resolved {
        input: &args.input,
        column: &args.column,
        classes: breaks.n_categories(),
        manual_thresholds: args.thresholds.as_deref(),
        label_column: &args.label_column,
        out: &args.out,
        breaks: &breaks_path,
    };
    run.finish(&sibling_manifest(&args.out), &resolved, None)?;
    Ok(())
}

/// Largest integer label across the files, or the largest rank of a label map.
fn infer_categories(
    paths: &[&Path],
    label_column: &str,
    label_map: Option<&BTreeMap<String, u32>>,
) -> Result<usize> {
    if let Some(map) = label_map {
        return map
            .values()
            .max()
            .map(|&k| k as usize)
            .ok_or_else(|| invalid("label map is empty"));
    }
    let mut k = 0u32;
    for path in paths {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let j = reader
            .headers()?
            .iter()
            .position(|h| h == label_column)
            .ok_or_else(|| Error::UnknownColumn(label_column.to_owned()))?;
        for (row, record) in reader.records().enumerate() {
            let cell = &record?[j];
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                continue;
            }
            let y: u32 = cell.parse().map_err(|_| {
                invalid(format!(
                    "cannot infer the number of categories: label {cell:?} at row {row} is not an integer; \
                     pass --categories or --label-map"
                ))
            })?;
            k = k.max(y);
        }
    }
    if k == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(k as usize)
}

pub fn fit(cfg: FitConfig, config_path: Option<&Path>, out: &Path, threads: usize) -> Result<()> {
    let mut cfg = cfg;
    let mut run = Run::new("fit", threads);
    let train_path = cfg.train.clone().expect("resolved config has a training file");
    for p in [Some(train_path.as_path()), cfg.val.as_deref(), config_path, cfg.label_map.as_deref()]
        .into_iter()
        .flatten()
    {
        run.input(p)?;
    }
    let label_map = cfg.label_map.as_deref().map(load_label_map).transpose()?;
    let k = match cfg.categories {
        Some(k) => k,
        None => {
            let mut paths = vec![train_path.as_path()];
            paths.extend(cfg.val.as_deref());
            infer_categories(&paths, &cfg.label_column, label_map.as_ref())?
        }
    };
    cfg.categories = Some(k);
    let opts = LoadOptions {
        label_column: cfg.label_column.clone(),
        n_categories: k,
        label_map,
        lenient: cfg.lenient,
    };
    let all = load_csv(&train_path, &opts)?.dataset;
    let (train, val) = match &cfg.val {
        Some(v) => (all, load_csv(v, &opts)?.dataset),
        None => split(&all, cfg.split_fraction, cfg.split_seed())?,
    };
    let features = cfg.features.clone().unwrap_or_else(|| train.feature_names().to_vec());
    if cfg.standardize.iter().any(|c| c == "all") {
        cfg.standardize = features.clone();
    }
    cfg.features = Some(features.clone());
    if cfg.val.is_none() {
        cfg.split_seed = Some(cfg.split_seed());
    }
    let spec = DesignSpec::generic(features, cfg.label_column.clone())
        .with_mode(cfg.coefficient_mode)
        .with_standardized(cfg.standardize.clone())
        .with_exclusions(cfg.exclusions.clone());

    let model = match cfg.model {
        ModelChoice::Ordered => FittedModel::OrderedLogit(fit_ordered_logit(&train, &spec, &cfg.ordered_logit)?),
        ModelChoice::Reslogit => {
            let mut fit = reslogit::fit(&train, &val, &spec, &cfg.training)?;
            let alpha = select_alpha(&mut fit, &val, &cfg.training.alpha_grid)?;
            log::info!(
                "kept epoch {} of {}; alpha {alpha}",
                fit.best_epoch,
                fit.history.len()
            );
            if fit.violation_count > 0 {
                log::warn!("{} observations have non-monotone exceedance probabilities", fit.violation_count);
            }
            FittedModel::OrdinalReslogit(fit)
        }
    };
    let mut json = model.to_json()?;
    json.push('\n');
    run.stage(out.to_path_buf(), json);

    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        config: &'a FitConfig,
        out: &'a Path,
        n_train: usize,
        n_val: usize,
    }
    let resolved = Resolved { config: &cfg, out, n_train: train.n_rows(), n_val: val.n_rows() };
    run.finish(&sibling_manifest(out), &resolved, Some(cfg.training.seed))?;
    Ok(())
}

fn load_model(path: &Path) -> Result<FittedModel> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    FittedModel::from_json(&std::fs::read_to_string(path)?)
}

fn model_load_options(model: &FittedModel, label_map: Option<&Path>, lenient: bool) -> Result<LoadOptions> {
    Ok(LoadOptions {
        label_column: model.design().label_column.clone(),
        n_categories: model.as_model().n_categories(),
        label_map: label_map.map(load_label_map).transpose()?,
        lenient,
    })
}

fn dedup(formats: &[ReportFormat]) -> Vec<ReportFormat> {
    let mut out: Vec<ReportFormat> = Vec::new();
    for f in formats {
        if !out.contains(f) {
            out.push(*f);
        }
    }
    out
}

pub fn evaluate(args: &EvaluateArgs, threads: usize) -> Result<()> {
    let mut run = Run::new("evaluate", threads);
    for p in [Some(args.model.as_path()), Some(args.train.as_path()), args.val.as_deref(), args.data.label_map.as_deref()]
        .into_iter()
        .flatten()
    {
        run.input(p)?;
    }
    let model = load_model(&args.model)?;
    let opts = model_load_options(&model, args.data.label_map.as_deref(), args.data.lenient)?;
    let all = load_csv(&args.train, &opts)?.dataset;
    let default_seed = match &model {
        FittedModel::OrdinalReslogit(f) => f.config.seed,
        FittedModel::OrderedLogit(_) => 0,
    };
    let split_seed = args.split.map(|_| args.split_seed.unwrap_or(default_seed));
    let (train, val): (Dataset, Option<Dataset>) = match (&args.val, args.split) {
        (Some(v), _) => (all, Some(load_csv(v, &opts)?.dataset)),
        (None, Some(f)) => {
            let (t, v) = split(&all, f, split_seed.expect("set with split"))?;
            (t, Some(v))
        }
        (None, None) => (all, None),
    };
    let report = fit_report(&model, &train, val.as_ref(), args.bhhh.into())?;
    let formats = dedup(&args.format);
    let table = TableOptions { absolute_log_likelihood: args.abs_ll };
    for format in &formats {
        for r in render(Report::Fit(&report), *format, table)? {
            if *format == ReportFormat::Text {
                print!("{}", r.contents);
            }
            run.stage(args.out.join(&r.file_name), r.contents);
        }
    }

    #[derive(Serialize)]
    struct Resolved<'a> {
        model: &'a Path,
        train: &'a Path,
        val: Option<&'a Path>,
        split: Option<f64>,
        split_seed: Option<u64>,
        label_map: Option<&'a Path>,
        lenient: bool,
        bhhh: &'static str,
        formats: &'a [ReportFormat],
        absolute_log_likelihood: bool,
        out: &'a Path,
    }
    let resolved = Resolved {
        model: &args.model,
        train: &args.train,
        val: args.val.as_deref(),
        split: args.split,
        split_seed,
        label_map: args.data.label_map.as_deref(),
        lenient: args.data.lenient,
        bhhh: match args.bhhh {
            ScopeArg::Beta => "beta",
            ScopeArg::Full => "full",
        },
        formats: &formats,
        absolute_log_likelihood: args.abs_ll,
        out: &args.out,
    };
    run.finish(&args.out.join("manifest.json"), &resolved, split_seed)?;
    Ok(())
}

pub fn analyze(cfg: &AnalyzeConfig, config_path: Option<&Path>, out: &Path, threads: usize) -> Result<()> {
    let mut run = Run::new("analyze", threads);
    let model_path: PathBuf = cfg.model.clone().expect("resolved config has a model");
    let data_path: PathBuf = cfg.data.clone().expect("resolved config has data");
    for p in [Some(model_path.as_path()), Some(data_path.as_path()), config_path, cfg.label_map.as_deref()]
        .into_iter()
        .flatten()
    {
        run.input(p)?;
    }
    let model = load_model(&model_path)?;
    let opts = model_load_options(&model, cfg.label_map.as_deref(), cfg.lenient)?;
    let data = load_csv(&data_path, &opts)?.dataset;
    let m = model.as_model();
    let k = m.n_categories();

    let mut report = EconReport::default();
    let reps = match (&cfg.representatives, &cfg.intervals) {
        (Some(r), _) => Some(r.clone()),
        (None, Some(edges)) => {
            let (&lower, thresholds) = edges
                .split_first()
                .ok_or_else(|| invalid("intervals need a lower bound"))?;
            if cfg.upper.is_none() {
                report.notes.push(TOP_CATEGORY_NOTE.to_owned());
            }
            Some(representatives(lower, thresholds, cfg.upper)?)
        }
        (None, None) => None,
    };
    if let Some(r) = &reps {
        if r.len() != k {
            return Err(Error::DimensionMismatch { what: "representatives", expected: k, got: r.len() });
        }
    }
    report.representatives = reps.clone();
    if let Some(mode) = cfg.market_share {
        report.market_shares = Some(market_share(m, &data, mode)?);
    }
    for c in &cfg.substitution {
        let grid = linear_grid(c.lo, c.hi, c.points);
        report.substitution_curves.push(substitution_curve(m, &data, &c.variable, &grid)?);
    }
    for v in &cfg.elasticity {
        report.elasticities.push(elasticity(m, &data, v)?);
    }
    for v in &cfg.binary_effect {
        report.binary_effects.push(binary_effect(m, &data, v, reps.as_deref())?);
    }

    for format in dedup(&cfg.formats) {
        if format == ReportFormat::Svg && report.substitution_curves.is_empty() && !cfg.svg_required {
            continue;
        }
        for r in render(Report::Econ(&report), format, TableOptions::default())? {
            if format == ReportFormat::Text {
                print!("{}", r.contents);
            }
            run.stage(out.join(&r.file_name), r.contents);
        }
    }

    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        config: &'a AnalyzeConfig,
        out: &'a Path,
    }
    run.finish(&out.join("manifest.json"), &Resolved { config: cfg, out }, None)?;
    Ok(())
}
