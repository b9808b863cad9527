//! Post-estimation analysis: market shares, substitution curves,
//! elasticities, binary-variable effects and expected ordinal values.
//!
//! Every counterfactual edits raw variable values and passes them through
//! the model's stored scaling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ChoiceModel, ModelInputs};

/// Observations whose category probability falls below this are left out of
/// aggregate elasticities.
pub const MIN_ELASTICITY_PROB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareMode {
    /// Fraction of observations predicted in each category.
    #[default]
    Hard,
    /// Mean predicted probability of each category.
    Soft,
}

impl std::str::FromStr for ShareMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(ShareMode::Hard),
            "soft" => Ok(ShareMode::Soft),
            other => Err(Error::config(format!("unknown market share mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketShares {
    pub mode: ShareMode,
    pub shares: Vec<f64>,
}

fn mean_probs(inputs: &ModelInputs, edit: impl Fn(usize) -> Option<(usize, f64)> + Sync) -> Vec<f64> {
    let k = inputs.model.n_categories();
    let rows: Vec<Vec<f64>> = (0..inputs.n_rows())
        .into_par_iter()
        .map(|i| inputs.probs(i, edit(i)).probs)
        .collect();
    let mut acc = vec![0.0; k];
    for p in &rows {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    let n = inputs.n_rows() as f64;
    acc.iter().map(|a| a / n).collect()
}

pub fn market_share(model: &dyn ChoiceModel, data: &Dataset, mode: ShareMode) -> Result<MarketShares> {
    let inputs = ModelInputs::new(model, data)?;
    if inputs.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let shares = match mode {
        ShareMode::Soft => mean_probs(&inputs, |_| None),
        ShareMode::Hard => {
            let preds: Vec<u32> = (0..inputs.n_rows())
                .into_par_iter()
                .map(|i| {
                    let mut buf = Vec::new();
                    inputs.row_into(i, None, &mut buf);
                    model.predict(&buf)
                })
                .collect();
            let mut counts = vec![0usize; model.n_categories()];
            for p in preds {
                counts[p as usize - 1] += 1;
            }
            let n = inputs.n_rows() as f64;
            counts.iter().map(|&c| c as f64 / n).collect()
        }
    };
    Ok(MarketShares { mode, shares })
}

/// Point where the curves of two categories intersect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub first: u32,
    pub second: u32,
    /// Linearly interpolated variable value.
    pub value: f64,
}

/// Mean category probabilities as one variable sweeps a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionCurve {
    pub variable: String,
    pub grid: Vec<f64>,
    /// `probs[g][k]`: mean probability of category `k+1` at `grid[g]`.
    pub probs: Vec<Vec<f64>>,
    pub crossings: Vec<Crossing>,
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn crossings(grid: &[f64], probs: &[Vec<f64>]) -> Vec<Crossing> {
    let k = probs.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let diff: Vec<f64> = probs.iter().map(|p| p[a] - p[b]).collect();
            for g in 0..diff.len() {
                let here = diff[g];
                if here == 0.0 {
                    let prev_nonzero = g > 0 && diff[g - 1] != 0.0;
                    if g == 0 || prev_nonzero {
                        out.push(Crossing { first: a as u32 + 1, second: b as u32 + 1, value: grid[g] });
                    }
                } else if g > 0 && diff[g - 1] != 0.0 && (diff[g - 1] < 0.0) != (here < 0.0) {
                    let t = diff[g - 1] / (diff[g - 1] - here);
                    let value = grid[g - 1] + t * (grid[g] - grid[g - 1]);
                    out.push(Crossing { first: a as u32 + 1, second: b as u32 + 1, value });
                }
            }
        }
    }
    out.sort_by(|x, y| x.value.total_cmp(&y.value));
    out
}

/// Set `variable` to each grid value for every observation and average the
/// resulting category probabilities.
pub fn substitution_curve(model: &dyn ChoiceModel, data: &Dataset, variable: &str, grid: &[f64]) -> Result<SubstitutionCurve> {
    let inputs = ModelInputs::new(model, data)?;
    let j = inputs.feature_index(variable)?;
    if inputs.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if let Some(i) = grid.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "grid", index: i });
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::config("substitution grid must be sorted"));
    }
    let probs: Vec<Vec<f64>> = grid.iter().map(|&v| mean_probs(&inputs, |_| Some((j, v)))).collect();
    Ok(SubstitutionCurve {
        variable: variable.to_owned(),
        grid: grid.to_vec(),
        crossings: crossings(grid, &probs),
        probs,
    })
}

fn is_binary(values: &[f64]) -> bool {
    values.iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Aggregate elasticities of each category's probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elasticity {
    pub variable: String,
    /// Probability-weighted mean of the observation-level elasticities.
    pub aggregate: Vec<f64>,
    /// Observations left out per category for negligible probability.
    pub excluded: Vec<usize>,
}

fn fd_step(x: f64) -> f64 {
    if x == 0.0 {
        1e-6
    } else {
        1e-4 * x.abs()
    }
}

fn aggregate(k: usize, rows: &[(Vec<f64>, Vec<f64>)]) -> (Vec<f64>, Vec<usize>) {
    let mut num = vec![0.0; k];
    let mut den = vec![0.0; k];
    let mut excluded = vec![0usize; k];
    for (p, e) in rows {
        for c in 0..k {
            if p[c] < MIN_ELASTICITY_PROB {
                excluded[c] += 1;
            } else {
                num[c] += p[c] * e[c];
                den[c] += p[c];
            }
        }
    }
    let agg = num.iter().zip(&den).map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 }).collect();
    (agg, excluded)
}

/// Observation-level elasticities `(∂P/∂x)·x/P` by central differences on the
/// raw variable, one vector per row alongside the probabilities.
fn elasticity_rows(inputs: &ModelInputs, j: usize, analytic: bool) -> Option<Vec<(Vec<f64>, Vec<f64>)>> {
    let model = inputs.model;
    let rows: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..inputs.n_rows())
        .into_par_iter()
        .map(|i| {
            let x = inputs.raw().row(i)[j];
            let p = inputs.probs(i, None).probs;
            let dp = if analytic {
                let mut buf = Vec::new();
                inputs.row_into(i, None, &mut buf);
                let slope = inputs.scaled_slope(j);
                model.prob_gradient(&buf, j)?.iter().map(|d| d * slope).collect::<Vec<f64>>()
            } else {
                let h = fd_step(x);
                let up = inputs.probs(i, Some((j, x + h))).probs;
                let down = inputs.probs(i, Some((j, x - h))).probs;
                up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect()
            };
            let e = dp
                .iter()
                .zip(&p)
                .map(|(d, pc)| if *pc < MIN_ELASTICITY_PROB { 0.0 } else { d * x / pc })
                .collect();
            Some((p, e))
        })
        .collect();
    rows.into_iter().collect()
}

fn elasticity_impl(model: &dyn ChoiceModel, data: &Dataset, variable: &str, analytic: bool) -> Result<Option<Elasticity>> {
    let inputs = ModelInputs::new(model, data)?;
    let j = inputs.feature_index(variable)?;
    if inputs.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if is_binary(&inputs.raw().column(j)) {
        return Err(Error::BinaryVariable(variable.to_owned()));
    }
    let Some(rows) = elasticity_rows(&inputs, j, analytic) else {
        return Ok(None);
    };
    let (aggregate, excluded) = aggregate(model.n_categories(), &rows);
    Ok(Some(Elasticity {
        variable: variable.to_owned(),
        aggregate,
        excluded,
    }))
}

/// Aggregate elasticity of every category with respect to a continuous
/// variable, by central finite differences (relative step `1e-4`, absolute
/// `1e-6` at zero).
pub fn elasticity(model: &dyn ChoiceModel, data: &Dataset, variable: &str) -> Result<Elasticity> {
    Ok(elasticity_impl(model, data, variable, false)?.expect("finite differences always apply"))
}

/// The same aggregate computed from the model's analytic probability
/// derivatives, if it provides them for every observation.
pub fn elasticity_analytic(model: &dyn ChoiceModel, data: &Dataset, variable: &str) -> Result<Option<Elasticity>> {
    elasticity_impl(model, data, variable, true)
}

/// Effect of flipping a 0/1 variable for every observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryEffect {
    pub variable: String,
    /// Mean change in each category's probability over all observations.
    pub mean_change: Vec<f64>,
    /// Mean change among observations that start at 0 (switched to 1).
    pub from_zero: Option<Vec<f64>>,
    /// Mean change among observations that start at 1 (switched to 0).
    pub from_one: Option<Vec<f64>>,
    pub n_from_zero: usize,
    pub n_from_one: usize,
    /// Change in the mean expected value, when representatives are given.
    pub expected_value_change: Option<f64>,
    pub expected_value_before: Option<f64>,
}

pub fn binary_effect(model: &dyn ChoiceModel, data: &Dataset, variable: &str, representatives: Option<&[f64]>) -> Result<BinaryEffect> {
    let inputs = ModelInputs::new(model, data)?;
    let j = inputs.feature_index(variable)?;
    let k = model.n_categories();
    if inputs.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let column = inputs.raw().column(j);
    if !is_binary(&column) {
        return Err(Error::NotBinary(variable.to_owned()));
    }
    if let Some(c) = representatives {
        if c.len() != k {
            return Err(Error::DimensionMismatch { what: "representatives", expected: k, got: c.len() });
        }
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..inputs.n_rows())
        .into_par_iter()
        .map(|i| {
            let before = inputs.probs(i, None).probs;
            let after = inputs.probs(i, Some((j, 1.0 - column[i]))).probs;
            (before, after)
        })
        .collect();

    let mut all = vec![0.0; k];
    let mut zero = vec![0.0; k];
    let mut one = vec![0.0; k];
    let (mut n0, mut n1) = (0usize, 0usize);
    let (mut ev_before, mut ev_after) = (0.0, 0.0);
    for (i, (before, after)) in rows.iter().enumerate() {
        let group = if column[i] == 0.0 {
            n0 += 1;
            &mut zero
        } else {
            n1 += 1;
            &mut one
        };
        for c in 0..k {
            let d = after[c] - before[c];
            all[c] += d;
            group[c] += d;
        }
        if let Some(reps) = representatives {
            ev_before += expected_value(before, reps)?;
            ev_after += expected_value(after, reps)?;
        }
    }
    let n = rows.len() as f64;
    let mean = |v: Vec<f64>, m: usize| (m > 0).then(|| v.iter().map(|x| x / m as f64).collect());
    Ok(BinaryEffect {
        variable: variable.to_owned(),
        mean_change: all.iter().map(|x| x / n).collect(),
        from_zero: mean(zero, n0),
        from_one: mean(one, n1),
        n_from_zero: n0,
        n_from_one: n1,
        expected_value_change: representatives.map(|_| (ev_after - ev_before) / n),
        expected_value_before: representatives.map(|_| ev_before / n),
    })
}

/// `Σ C_j P_j`.
pub fn expected_value(probs: &[f64], representatives: &[f64]) -> Result<f64> {
    if probs.len() != representatives.len() {
        return Err(Error::DimensionMismatch {
            what: "representatives",
            expected: probs.len(),
            got: representatives.len(),
        });
    }
    Ok(probs.iter().zip(representatives).map(|(p, c)| p * c).sum())
}

/// Representative values of each category from its interval: midpoints of
/// the closed intervals, and for the open top category either the midpoint
/// up to `upper` or the last threshold plus half the previous width.
pub fn representatives(lower: f64, thresholds: &[f64], upper: Option<f64>) -> Result<Vec<f64>> {
    let mut edges = Vec::with_capacity(thresholds.len() + 1);
    edges.push(lower);
    edges.extend_from_slice(thresholds);
    if edges.iter().any(|v| !v.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::NonMonotoneThresholds);
    }
    let last = *edges.last().unwrap();
    let top = match upper {
        Some(u) if u > last => (last + u) / 2.0,
        Some(_) => return Err(Error::NonMonotoneThresholds),
        None if edges.len() >= 2 => last + (last - edges[edges.len() - 2]) / 2.0,
        None => return Err(Error::config("need at least one threshold or an upper bound")),
    };
    let mut out: Vec<f64> = edges.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    out.push(top);
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EconReport {
    pub market_shares: Option<MarketShares>,
    pub substitution_curves: Vec<SubstitutionCurve>,
    pub elasticities: Vec<Elasticity>,
    pub binary_effects: Vec<BinaryEffect>,
    pub representatives: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

/// Note attached whenever the open top category's representative is
/// extrapolated rather than given.
pub const TOP_CATEGORY_NOTE: &str = "The top category is open-ended; its representative value is \
     extrapolated as the last threshold plus half the previous interval width.";
