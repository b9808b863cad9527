//! Ground-truth data generators and brute-force oracles.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::discretize::{assign_categories, category_summary, Breaks, TIE_TOLERANCE};
use crate::error::{Error, Result};
use crate::math::{logit, sigmoid};
use crate::model::{argmax_rank, FittedModel};
use crate::ordered_logit::log_likelihood;
use crate::reslogit::{loss, ReslogitParams};

/// Largest input accepted by [`brute_force_jenks`].
pub const BRUTE_FORCE_LIMIT: usize = 14;

/// Deviation of the latent utility from the plain linear index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Heterogeneity {
    #[default]
    None,
    /// Adds `Σ γ·x_a·x_b`; the products are not exposed as features.
    Interaction {
        pairs: Vec<(usize, usize)>,
        strengths: Vec<f64>,
    },
    /// One coefficient vector per threshold; the label is the length of the
    /// leading run of exceeded thresholds.
    CategorySpecific { betas: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n_obs: usize,
    pub n_features: usize,
    pub beta_true: Vec<f64>,
    pub deltas_true: Vec<f64>,
    /// Columns drawn as Bernoulli(0.5) instead of standard normal.
    #[serde(default)]
    pub binary_features: Vec<usize>,
    #[serde(default)]
    pub heterogeneity: Heterogeneity,
    pub seed: u64,
}

impl GenSpec {
    pub fn ordered_logit(n_obs: usize, beta_true: Vec<f64>, deltas_true: Vec<f64>, seed: u64) -> Self {
        Self {
            n_obs,
            n_features: beta_true.len(),
            beta_true,
            deltas_true,
            binary_features: Vec::new(),
            heterogeneity: Heterogeneity::None,
            seed,
        }
    }

    pub fn with_heterogeneity(mut self, h: Heterogeneity) -> Self {
        self.heterogeneity = h;
        self
    }

    pub fn with_binary(mut self, columns: Vec<usize>) -> Self {
        self.binary_features = columns;
        self
    }

    pub fn n_categories(&self) -> usize {
        self.deltas_true.len() + 1
    }

    pub fn feature_names(&self) -> Vec<String> {
        (1..=self.n_features).map(|j| format!("x{j}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.n_features;
        if self.n_obs == 0 {
            return Err(Error::config("n_obs must be at least 1"));
        }
        if self.beta_true.len() != p {
            return Err(Error::DimensionMismatch { what: "beta_true", expected: p, got: self.beta_true.len() });
        }
        if self.deltas_true.is_empty() {
            return Err(Error::config("need at least one threshold"));
        }
        crate::discretize::check_thresholds(&self.deltas_true)?;
        if let Some(&j) = self.binary_features.iter().find(|&&j| j >= p) {
            return Err(Error::config(format!("binary feature index {j} out of range")));
        }
        if self.beta_true.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite { context: "beta_true", index: 0 });
        }
        match &self.heterogeneity {
            Heterogeneity::None => {}
            Heterogeneity::Interaction { pairs, strengths } => {
                if pairs.len() != strengths.len() {
                    return Err(Error::DimensionMismatch {
                        what: "interaction strengths",
                        expected: pairs.len(),
                        got: strengths.len(),
                    });
                }
                if let Some((a, b)) = pairs.iter().find(|(a, b)| *a >= p || *b >= p) {
                    return Err(Error::config(format!("interaction pair ({a}, {b}) out of range")));
                }
            }
            Heterogeneity::CategorySpecific { betas } => {
                let k1 = self.deltas_true.len();
                if betas.len() != k1 {
                    return Err(Error::DimensionMismatch { what: "category betas", expected: k1, got: betas.len() });
                }
                if let Some(b) = betas.iter().find(|b| b.len() != p) {
                    return Err(Error::DimensionMismatch { what: "category beta", expected: p, got: b.len() });
                }
            }
        }
        Ok(())
    }

    /// Deterministic part of the latent utility for one row.
    fn latent_index(&self, x: &[f64]) -> f64 {
        let mut u: f64 = self.beta_true.iter().zip(x).map(|(b, x)| b * x).sum();
        if let Heterogeneity::Interaction { pairs, strengths } = &self.heterogeneity {
            for (&(a, b), g) in pairs.iter().zip(strengths) {
                u += g * x[a] * x[b];
            }
        }
        u
    }

    /// True `P(y > k)` for `k = 1..K−1`.
    pub fn true_exceedance(&self, x: &[f64]) -> Vec<f64> {
        match &self.heterogeneity {
            Heterogeneity::CategorySpecific { betas } => {
                let mut running = 1.0f64;
                betas
                    .iter()
                    .zip(&self.deltas_true)
                    .map(|(b, d)| {
                        let idx: f64 = b.iter().zip(x).map(|(b, x)| b * x).sum();
                        running = running.min(sigmoid(idx - d));
                        running
                    })
                    .collect()
            }
            _ => {
                let u = self.latent_index(x);
                self.deltas_true.iter().map(|d| sigmoid(u - d)).collect()
            }
        }
    }

    /// True category probabilities for one row.
    pub fn true_choice_probs(&self, x: &[f64]) -> Vec<f64> {
        let e = self.true_exceedance(x);
        let k = e.len() + 1;
        (0..k)
            .map(|c| {
                let upper = if c == 0 { 1.0 } else { e[c - 1] };
                let lower = if c == k - 1 { 0.0 } else { e[c] };
                upper - lower
            })
            .collect()
    }
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

fn generate_unchecked(spec: &GenSpec) -> Result<Dataset> {
    let p = spec.n_features;
    let mut features = Vec::with_capacity(spec.n_obs * p);
    let mut labels = Vec::with_capacity(spec.n_obs);
    let mut binary = vec![false; p];
    for &j in &spec.binary_features {
        binary[j] = true;
    }
    for row in 0..spec.n_obs {
        let mut rng = row_rng(spec.seed, row);
        let start = features.len();
        for &is_binary in &binary {
            let v = if is_binary {
                if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 }
            } else {
                rng.sample::<f64, _>(StandardNormal)
            };
            features.push(v);
        }
        let x = &features[start..];
        let eta = logit(rng.sample::<f64, _>(Open01));
        let y = match &spec.heterogeneity {
            Heterogeneity::CategorySpecific { betas } => {
                let run = betas
                    .iter()
                    .zip(&spec.deltas_true)
                    .take_while(|(b, d)| {
                        let idx: f64 = b.iter().zip(x).map(|(b, x)| b * x).sum();
                        idx + eta > **d
                    })
                    .count();
                run as u32 + 1
            }
            _ => {
                let u = spec.latent_index(x) + eta;
                spec.deltas_true.iter().filter(|&&d| u > d).count() as u32 + 1
            }
        };
        labels.push(y);
    }
    Dataset::new(spec.feature_names(), features, labels, spec.n_categories())
}

/// Sample from the ordered logit `U* = β·x + η` with logistic `η`.
///
/// Each row draws from its own stream of a ChaCha8 generator seeded by
/// `spec.seed`: features first, then the noise by inverse CDF.
pub fn gen_ordered_logit(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    if spec.heterogeneity != Heterogeneity::None {
        return Err(Error::config("gen_ordered_logit requires no heterogeneity"));
    }
    generate_unchecked(spec)
}

/// Sample from a misspecified variant of the ordered logit.
pub fn gen_heterogeneous(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    if spec.heterogeneity == Heterogeneity::None {
        return Err(Error::config("gen_heterogeneous requires a heterogeneity variant"));
    }
    generate_unchecked(spec)
}

/// Dispatch on the heterogeneity variant.
pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    generate_unchecked(spec)
}

/// Accuracy of predicting the most likely category under the true model.
pub fn bayes_accuracy(spec: &GenSpec, data: &Dataset) -> Result<f64> {
    if data.n_features() != spec.n_features {
        return Err(Error::DimensionMismatch { what: "features", expected: spec.n_features, got: data.n_features() });
    }
    if data.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let hits = (0..data.n_rows())
        .filter(|&i| argmax_rank(&spec.true_choice_probs(data.row(i))) == data.labels()[i])
        .count();
    Ok(hits as f64 / data.n_rows() as f64)
}

fn two_pass_ssd(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Exhaustive Jenks classification for small inputs.
///
/// Every way of cutting the sorted values into `k` contiguous nonempty
/// classes without separating equal values is scored; ties within a
/// relative `1e-9` go to the lexicographically smallest thresholds.
pub fn brute_force_jenks(values: &[f64], k: usize) -> Result<Breaks> {
    if values.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { n: values.len(), limit: BRUTE_FORCE_LIMIT });
    }
    if k == 0 {
        return Err(Error::config("number of classes must be positive"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "values", index: i });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // positions where a cut may go: between unequal neighbours
    let slots: Vec<usize> = (1..sorted.len()).filter(|&i| sorted[i] != sorted[i - 1]).collect();
    let distinct = slots.len() + usize::from(!sorted.is_empty());
    if distinct < k {
        return Err(Error::TooFewDistinct { k, found: distinct });
    }

    let mut candidates: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut chosen: Vec<usize> = Vec::with_capacity(k - 1);
    enumerate(&slots, k - 1, 0, &mut chosen, &mut |cuts| {
        let mut bounds = vec![0];
        bounds.extend_from_slice(cuts);
        bounds.push(sorted.len());
        let cost: f64 = bounds.windows(2).map(|w| two_pass_ssd(&sorted[w[0]..w[1]])).sum();
        let thresholds = cuts.iter().map(|&c| sorted[c - 1]).collect();
        candidates.push((thresholds, cost));
    });

    let best = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let scale = two_pass_ssd(&sorted).max(1.0);
    // candidates were produced in lexicographic order of cut positions
    let (thresholds, objective) = candidates
        .into_iter()
        .find(|(_, c)| (c - best).abs() <= TIE_TOLERANCE * scale)
        .expect("at least one partition");
    let labels = assign_categories(values, &thresholds);
    let mut breaks = category_summary(&labels, &thresholds)?;
    breaks.lower_bound = sorted.first().copied();
    breaks.upper_bound = sorted.last().copied();
    breaks.objective = Some(objective);
    Ok(breaks)
}

fn enumerate(slots: &[usize], need: usize, from: usize, chosen: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if chosen.len() == need {
        visit(chosen);
        return;
    }
    for s in from..slots.len() {
        if slots.len() - s < need - chosen.len() {
            break;
        }
        chosen.push(slots[s]);
        enumerate(slots, need, s + 1, chosen, visit);
        chosen.pop();
    }
}

/// Central difference `(f(x+h) − f(x−h)) / 2h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Central-difference gradient, one coordinate at a time.
pub fn central_difference_gradient(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], step: f64) -> Vec<f64> {
    let mut work = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            work[i] = theta[i] + step;
            let up = f(&work);
            work[i] = theta[i] - step;
            let down = f(&work);
            work[i] = theta[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Numeric gradient of the residual-model loss over the trainable vector.
pub fn reslogit_loss_gradient(params: &ReslogitParams, data: &Dataset, step: f64) -> Result<Vec<f64>> {
    loss(params, data)?;
    let mut work = params.clone();
    Ok(central_difference_gradient(
        |theta| {
            work.assign_trainable(theta);
            loss(&work, data).unwrap_or(f64::NAN)
        },
        &params.trainable_to_vec(),
        step,
    ))
}

/// What [`finite_diff_oracle`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdTarget<'a> {
    /// The training objective with respect to every estimated parameter:
    /// the residual model's loss, or the ordered logit's negative
    /// log-likelihood over `(β, δ)`. Data must be in model space.
    LossGradient,
    /// Observation-level elasticities of each category with respect to a
    /// raw variable. Data is raw.
    Elasticity(&'a str),
}

/// Central-difference derivatives, computed independently of the analysis
/// routines they check. Returns one row per parameter vector (loss
/// gradient) or one row per observation (elasticities).
pub fn finite_diff_oracle(model: &FittedModel, data: &Dataset, target: FdTarget, step: f64) -> Result<Vec<Vec<f64>>> {
    if !(step > 0.0) {
        return Err(Error::config("step must be positive"));
    }
    match target {
        FdTarget::LossGradient => match model {
            FittedModel::OrdinalReslogit(fit) => Ok(vec![reslogit_loss_gradient(&fit.params, data, step)?]),
            FittedModel::OrderedLogit(fit) => {
                let p = fit.beta.len();
                let mut theta = fit.beta.clone();
                theta.extend_from_slice(&fit.deltas);
                Ok(vec![central_difference_gradient(
                    |t| -log_likelihood(&t[..p], &t[p..], data).unwrap_or(f64::NAN),
                    &theta,
                    step,
                )])
            }
        },
        FdTarget::Elasticity(variable) => {
            let m = model.as_model();
            let names = m.feature_names();
            let j = names
                .iter()
                .position(|n| n == variable)
                .ok_or_else(|| Error::UnknownColumn(variable.to_owned()))?;
            let raw = data.select_columns(names)?;
            let scaling = m.scaling().bind(names)?;
            let probs_at = |row: &[f64], v: f64| {
                let mut x = row.to_vec();
                x[j] = v;
                scaling.transform(&mut x);
                m.choice_probs(&x).probs
            };
            Ok((0..raw.n_rows())
                .map(|i| {
                    let row = raw.row(i);
                    let x = row[j];
                    let h = if x == 0.0 { step } else { step * x.abs() };
                    let p = probs_at(row, x);
                    let up = probs_at(row, x + h);
                    let down = probs_at(row, x - h);
                    (0..p.len())
                        .map(|c| (up[c] - down[c]) / (2.0 * h) * x / p[c])
                        .collect()
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism_and_single_row() {
        let spec = GenSpec::ordered_logit(50, vec![1.0, -0.5], vec![-1.0, 1.0], 9);
        assert_eq!(gen_ordered_logit(&spec).unwrap(), gen_ordered_logit(&spec).unwrap());
        let one = GenSpec { n_obs: 1, ..spec.clone() };
        let d = gen_ordered_logit(&one).unwrap();
        assert_eq!(d.n_rows(), 1);
        assert!((1..=3).contains(&d.labels()[0]));
        // row streams are independent of the total size
        assert_eq!(d.row(0), gen_ordered_logit(&spec).unwrap().row(0));
    }

    #[test]
    fn zero_interaction_is_bitwise_plain() {
        let plain = GenSpec::ordered_logit(500, vec![0.7, 0.3, -1.1], vec![-0.5, 0.5, 2.0], 4);
        let het = plain.clone().with_heterogeneity(Heterogeneity::Interaction {
            pairs: vec![(0, 1)],
            strengths: vec![0.0],
        });
        assert_eq!(gen_ordered_logit(&plain).unwrap(), gen_heterogeneous(&het).unwrap());
    }

    #[test]
    fn spec_validation() {
        let bad = GenSpec::ordered_logit(10, vec![1.0], vec![1.0, 0.0], 0);
        assert!(bad.validate().is_err());
        let bad = GenSpec::ordered_logit(10, vec![1.0], vec![0.0], 0).with_heterogeneity(
            Heterogeneity::Interaction { pairs: vec![(0, 3)], strengths: vec![1.0] },
        );
        assert!(gen_heterogeneous(&bad).is_err());
        let bad = GenSpec::ordered_logit(0, vec![1.0], vec![0.0], 0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn binary_columns_are_zero_one() {
        let spec = GenSpec::ordered_logit(200, vec![1.0, 1.0], vec![0.0], 3).with_binary(vec![1]);
        let d = gen_ordered_logit(&spec).unwrap();
        let col = d.column(1);
        assert!(col.iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(col.iter().any(|&v| v == 0.0) && col.iter().any(|&v| v == 1.0));
    }

    #[test]
    fn category_specific_exceedance_is_monotone() {
        let spec = GenSpec::ordered_logit(10, vec![0.0, 0.0], vec![-1.0, 0.0, 1.0], 0).with_heterogeneity(
            Heterogeneity::CategorySpecific { betas: vec![vec![1.0, 0.0], vec![-2.0, 1.0], vec![3.0, -1.0]] },
        );
        for x in [[0.5, -1.0], [-2.0, 0.3], [1.5, 1.5]] {
            let e = spec.true_exceedance(&x);
            assert!(e.windows(2).all(|w| w[0] >= w[1]));
            let p = spec.true_choice_probs(&x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        gen_heterogeneous(&spec).unwrap();
    }

    #[test]
    fn brute_force_examples() {
        let b = brute_force_jenks(&[1.0, 2.0, 10.0, 11.0], 2).unwrap();
        assert_eq!(b.thresholds, vec![2.0]);
        let b = brute_force_jenks(&[4.0, 1.0, 3.0], 3).unwrap();
        assert_eq!(b.thresholds, vec![1.0, 3.0]);
        assert_eq!(b.objective, Some(0.0));
        assert!(matches!(brute_force_jenks(&[0.0; 15], 2), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn finite_differences() {
        let d = central_difference(|t| t * t, 3.0, 1e-5);
        assert!((d - 6.0).abs() < 1e-9);
        // error of a central difference shrinks by ~4 when the step halves
        let f = |t: f64| t.sin();
        let exact = 1.0f64.cos();
        let e1 = (central_difference(f, 1.0, 1e-2) - exact).abs();
        let e2 = (central_difference(f, 1.0, 5e-3) - exact).abs();
        assert!((e1 / e2 - 4.0).abs() < 0.05);
    }
}
