//! Minibatch RMSprop training with early stopping and decision-threshold
//! selection.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, Dataset, DesignSpec, ScalingParams};
use crate::error::{Error, Result};
use crate::math::{ln_sigmoid_diff, log_sigmoid, logit, sigmoid, softplus, softplus_inv};
use crate::model::{ChoiceModel, ChoiceProbs};

use super::network::{choice_prob_input_gradient, choice_probs_from_exceedance, predict_rank, Workspace};
use super::params::{ReslogitGradient, ReslogitParams};

/// Threshold used for validation error while training.
pub const TRAINING_ALPHA: f64 = 0.5;

/// Validation quantity that decides early stopping and the kept epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopMetric {
    /// Misclassification rate at `α = 0.5`.
    #[default]
    ValidationError,
    /// Mean training objective on the validation data.
    ValidationLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub layers: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub early_stop_metric: EarlyStopMetric,
    pub seed: u64,
    pub alpha_grid: Vec<f64>,
    /// Keep the biases non-increasing by construction.
    pub strict_bias_order: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layers: 16,
            batch_size: 64,
            learning_rate: 1e-3,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            max_epochs: 500,
            early_stop_patience: 10,
            early_stop_metric: EarlyStopMetric::ValidationError,
            seed: 0,
            alpha_grid: alpha_grid(0.30, 0.60, 0.05),
            strict_bias_order: false,
        }
    }
}

/// Evenly spaced thresholds from `lo` to `hi` inclusive.
pub fn alpha_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || hi < lo {
        return vec![lo];
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| {
            let a = lo + i as f64 * step;
            (a * 1e12).round() / 1e12
        })
        .collect()
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("rmsprop_decay", self.rmsprop_decay),
            ("rmsprop_epsilon", self.rmsprop_epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive and finite")));
            }
        }
        if self.rmsprop_decay >= 1.0 {
            return Err(Error::config("rmsprop_decay must be below 1"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return Err(Error::config(
                "batch_size, max_epochs and early_stop_patience must be positive",
            ));
        }
        if self.early_stop_patience >= self.max_epochs {
            return Err(Error::config("early_stop_patience must be below max_epochs"));
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::config("alpha grid must be nonempty with values in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-observation training loss over the epoch's batches.
    pub train_loss: f64,
    /// Mean per-observation validation loss after the epoch.
    pub val_loss: f64,
    pub val_mpe: f64,
    /// Validation error of the best epoch so far.
    pub best_val_mpe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReslogitFit {
    pub design: DesignSpec,
    pub feature_names: Vec<String>,
    pub scaling: ScalingParams,
    pub config: TrainConfig,
    pub params: ReslogitParams,
    pub history: Vec<EpochRecord>,
    /// One-based epoch whose parameters were kept; 0 means the initial point.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Observations in the training and validation data whose exceedance
    /// probabilities were not monotone under the final parameters.
    pub violation_count: usize,
    pub n_params: usize,
}

impl ReslogitFit {
    pub fn exceedance(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = Workspace::new(&self.params);
        let z = ws.forward(&self.params, x);
        self.params.coral_biases.iter().map(|&b| sigmoid(z + b)).collect()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.params.trainable_names(&self.feature_names)
    }
}

impl ChoiceModel for ReslogitFit {
    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn scaling(&self) -> &ScalingParams {
        &self.scaling
    }

    fn n_categories(&self) -> usize {
        self.params.n_categories
    }

    fn choice_probs(&self, x: &[f64]) -> ChoiceProbs {
        choice_probs_from_exceedance(&self.exceedance(x))
    }

    fn predict(&self, x: &[f64]) -> u32 {
        predict_rank(&self.exceedance(x), self.params.alpha)
    }

    fn ln_choice_prob(&self, x: &[f64], category: u32) -> (f64, bool) {
        let b = &self.params.coral_biases;
        if !self.params.biases_ordered() || b.windows(2).any(|w| w[0] == w[1]) {
            let cp = self.choice_probs(x);
            return (cp.probs[category as usize - 1].ln(), cp.clamped);
        }
        let mut ws = Workspace::new(&self.params);
        let z = ws.forward(&self.params, x);
        let c = category as usize;
        let k = self.params.n_categories;
        let lp = if c == 1 {
            log_sigmoid(-(z + b[0]))
        } else if c == k {
            log_sigmoid(z + b[k - 2])
        } else {
            ln_sigmoid_diff(z + b[c - 2], z + b[c - 1])
        };
        (lp, false)
    }

    fn prob_gradient(&self, x: &[f64], feature: usize) -> Option<Vec<f64>> {
        choice_prob_input_gradient(&self.params, x, feature)
    }
}

/// Maps between the network parameters and the optimizer's vector, which
/// holds `θ` with `b₁ = θ₁`, `b_k = b_{k−1} − softplus(θ_k)` in strict mode.
struct Parameterization {
    strict: bool,
    bias_offset: usize,
}

impl Parameterization {
    fn new(params: &ReslogitParams, strict: bool) -> Self {
        Self {
            strict,
            bias_offset: params.n_trainable() - params.coral_biases.len(),
        }
    }

    fn to_raw(&self, params: &ReslogitParams) -> Vec<f64> {
        let mut v = params.trainable_to_vec();
        if self.strict {
            let b = &params.coral_biases;
            for k in 1..b.len() {
                v[self.bias_offset + k] = softplus_inv((b[k - 1] - b[k]).max(1e-6));
            }
        }
        v
    }

    fn assign(&self, raw: &[f64], params: &mut ReslogitParams) {
        params.assign_trainable(raw);
        if self.strict {
            let theta = &raw[self.bias_offset..];
            let b = &mut params.coral_biases;
            b[0] = theta[0];
            for k in 1..b.len() {
                b[k] = b[k - 1] - softplus(theta[k]);
            }
        }
    }

    fn raw_gradient(&self, grad: &ReslogitGradient, params: &ReslogitParams, raw: &[f64]) -> Vec<f64> {
        let mut g = grad.to_vec(params);
        if self.strict {
            let theta = &raw[self.bias_offset..];
            let gb = &grad.coral_biases;
            let n = gb.len();
            let mut tail = 0.0;
            for k in (0..n).rev() {
                tail += gb[k];
                g[self.bias_offset + k] = if k == 0 { tail } else { -sigmoid(theta[k]) * tail };
            }
        }
        g
    }
}

/// Initial parameters: zero residual weights, `β ~ U(−0.1, 0.1)`,
/// `w = 1/K` and biases at the logits of the empirical exceedance shares.
fn initial_params(data: &Dataset, spec: &DesignSpec, layers: usize, rng: &mut ChaCha8Rng) -> ReslogitParams {
    let k = data.n_categories();
    let mut params = ReslogitParams::for_design(spec, k, layers);
    for (b, &m) in params.beta.iter_mut().zip(&params.beta_mask) {
        if m {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let n = data.n_rows() as f64;
    // centre the biases on the initial index so the start matches the shares
    let mut ws = Workspace::new(&params);
    let z_mean = (0..data.n_rows()).map(|i| ws.forward(&params, data.row(i))).sum::<f64>() / n;
    let counts = data.category_counts();
    let floor = 0.5 / n;
    let mut above = n;
    for c in 0..k - 1 {
        above -= counts[c] as f64;
        let share = (above / n).clamp(floor, 1.0 - floor);
        params.coral_biases[c] = logit(share) - z_mean;
    }
    params
}

/// Fraction of rows whose predicted rank at `alpha` differs from the label.
fn error_rate(params: &ReslogitParams, data: &Dataset, alpha: f64, ws: &mut Workspace) -> (f64, f64) {
    let mut wrong = 0usize;
    let mut total_loss = 0.0;
    for i in 0..data.n_rows() {
        let z = ws.forward(params, data.row(i));
        let y = data.labels()[i];
        total_loss += ws.loss(params, y);
        let votes = params.coral_biases.iter().filter(|&&b| sigmoid(z + b) > alpha).count();
        if votes as u32 + 1 != y {
            wrong += 1;
        }
    }
    let n = data.n_rows() as f64;
    (wrong as f64 / n, total_loss / n)
}

/// Train on `train`, early-stop and choose `α` on `val`.
///
/// Both datasets are raw; the columns listed for standardization are scaled
/// with statistics from `train` and the scaling is stored in the fit.
pub fn fit(train: &Dataset, val: &Dataset, spec: &DesignSpec, config: &TrainConfig) -> Result<ReslogitFit> {
    config.validate()?;
    let k = train.n_categories();
    if k < 2 {
        return Err(Error::config("ordinal models need at least two categories"));
    }
    if val.n_categories() != k {
        return Err(Error::DimensionMismatch {
            what: "categories",
            expected: k,
            got: val.n_categories(),
        });
    }
    spec.validate(train.feature_names(), k)?;
    if train.n_rows() == 0 || val.n_rows() == 0 {
        return Err(Error::EmptyPartition {
            n_train: train.n_rows(),
            n_val: val.n_rows(),
        });
    }
    let (train_x, scaling) = standardize(&train.select_columns(&spec.feature_columns)?, spec)?;
    let val_x = scaling.apply(&val.select_columns(&spec.feature_columns)?)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = initial_params(&train_x, spec, config.layers, &mut rng);
    let map = Parameterization::new(&params, config.strict_bias_order);
    let mut raw = map.to_raw(&params);
    map.assign(&raw, &mut params);

    let mut ws = Workspace::new(&params);
    let mut grad = ReslogitGradient::zeros_like(&params);
    let mut sq = vec![0.0; raw.len()];
    let mut order: Vec<usize> = (0..train_x.n_rows()).collect();

    let (mut best_mpe, mut best_loss) = error_rate(&params, &val_x, TRAINING_ALPHA, &mut ws);
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut history = Vec::new();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            grad.clear();
            let mut batch_loss = 0.0;
            for &i in rows {
                let x = train_x.row(i);
                let y = train_x.labels()[i];
                ws.forward(&params, x);
                batch_loss += ws.loss(&params, y);
                ws.backward(&params, x, y, &mut grad);
            }
            let diverged = Error::Divergence { epoch, batch: batch + 1 };
            if !batch_loss.is_finite() {
                return Err(diverged);
            }
            epoch_loss += batch_loss;
            let g = map.raw_gradient(&grad, &params, &raw);
            let scale = 1.0 / rows.len() as f64;
            let rho = config.rmsprop_decay;
            for ((theta, s), gi) in raw.iter_mut().zip(sq.iter_mut()).zip(&g) {
                let gi = gi * scale;
                *s = rho * *s + (1.0 - rho) * gi * gi;
                *theta -= config.learning_rate * gi / (s.sqrt() + config.rmsprop_epsilon);
            }
            if raw.iter().any(|v| !v.is_finite()) {
                return Err(diverged);
            }
            map.assign(&raw, &mut params);
        }

        let (val_mpe, val_loss) = error_rate(&params, &val_x, TRAINING_ALPHA, &mut ws);
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        let improved = match config.early_stop_metric {
            EarlyStopMetric::ValidationError => val_mpe < best_mpe,
            EarlyStopMetric::ValidationLoss => val_loss < best_loss,
        };
        if improved {
            best_mpe = val_mpe;
            best_loss = val_loss;
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_x.n_rows() as f64,
            val_loss,
            val_mpe,
            best_val_mpe: best_mpe,
        });
        log::debug!("epoch {epoch}: train loss {epoch_loss:.6}, val mpe {val_mpe:.4}");
        if since_best >= config.early_stop_patience {
            stopped_early = true;
            break;
        }
    }

    let mut fit = ReslogitFit {
        design: spec.clone(),
        feature_names: spec.feature_columns.clone(),
        scaling,
        config: config.clone(),
        n_params: best.n_trainable(),
        params: best,
        history,
        best_epoch,
        stopped_early,
        violation_count: 0,
    };
    fit.params.alpha = select_alpha_scaled(&fit.params, &val_x, &config.alpha_grid);
    fit.violation_count = count_violations(&fit.params, &train_x) + count_violations(&fit.params, &val_x);
    Ok(fit)
}

fn count_violations(params: &ReslogitParams, data: &Dataset) -> usize {
    let mut ws = Workspace::new(params);
    (0..data.n_rows())
        .filter(|&i| {
            let z = ws.forward(params, data.row(i));
            let e: Vec<f64> = params.coral_biases.iter().map(|&b| sigmoid(z + b)).collect();
            choice_probs_from_exceedance(&e).clamped
        })
        .count()
}

fn select_alpha_scaled(params: &ReslogitParams, data: &Dataset, grid: &[f64]) -> f64 {
    let mut ws = Workspace::new(params);
    let exceedances: Vec<Vec<f64>> = (0..data.n_rows())
        .map(|i| {
            let z = ws.forward(params, data.row(i));
            params.coral_biases.iter().map(|&b| sigmoid(z + b)).collect()
        })
        .collect();
    best_alpha(&exceedances, data.labels(), grid)
}

/// Grid value with the fewest misclassifications; ties go to the smallest.
pub fn best_alpha(exceedances: &[Vec<f64>], labels: &[u32], grid: &[f64]) -> f64 {
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (usize::MAX, sorted[0]);
    for &alpha in &sorted {
        let wrong = exceedances
            .iter()
            .zip(labels)
            .filter(|(e, &y)| predict_rank(e, alpha) != y)
            .count();
        if wrong < best.0 {
            best = (wrong, alpha);
        }
    }
    best.1
}

/// Choose `α` from `grid` by validation error on raw data `val` and store it.
pub fn select_alpha(fit: &mut ReslogitFit, val: &Dataset, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() || grid.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::config("alpha grid must be nonempty with values in (0, 1)"));
    }
    let x = fit.scaling.apply(&val.select_columns(&fit.feature_names)?)?;
    if x.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let alpha = select_alpha_scaled(&fit.params, &x, grid);
    fit.params.alpha = alpha;
    Ok(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid() {
        assert_eq!(
            TrainConfig::default().alpha_grid,
            vec![0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6]
        );
        assert_eq!(alpha_grid(0.5, 0.5, 0.1), vec![0.5]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { learning_rate: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { early_stop_patience: 600, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { alpha_grid: vec![1.2], ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn alpha_ties_go_to_smallest() {
        let ex = vec![vec![0.45, 0.42], vec![0.48, 0.41]];
        let labels = [1, 1];
        assert_eq!(best_alpha(&ex, &labels, &[0.5]), 0.5);
        // every α in the gap gives the same predictions
        assert_eq!(best_alpha(&ex, &labels, &[0.55, 0.5, 0.6]), 0.5);
        assert_eq!(best_alpha(&ex, &[3, 3], &[0.3, 0.35, 0.4, 0.5]), 0.3);
    }

    #[test]
    fn strict_bias_parameterization_round_trips() {
        let mut p = ReslogitParams::zeros(1, 4, 0, crate::data::CoefficientMode::Generic);
        p.coral_biases = vec![1.0, 0.2, -1.5];
        let map = Parameterization::new(&p, true);
        let raw = map.to_raw(&p);
        let mut q = p.clone();
        map.assign(&raw, &mut q);
        for (a, b) in p.coral_biases.iter().zip(&q.coral_biases) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
