use serde::{Deserialize, Serialize};

use crate::data::{CoefficientMode, DesignSpec};
use crate::error::{Error, Result};

/// Trainable and fixed parameters of the residual-utility CORAL network.
///
/// `beta` holds one shared vector of length `p` in generic mode, or `K`
/// vectors laid out category-major (`beta[k * p + j]`) in alternative-specific
/// mode. Entries whose `beta_mask` is false are fixed at zero. Each residual
/// matrix is `K×K`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReslogitParams {
    pub n_categories: usize,
    pub n_features: usize,
    pub mode: CoefficientMode,
    pub beta: Vec<f64>,
    pub beta_mask: Vec<bool>,
    pub residual_weights: Vec<Vec<f64>>,
    pub coral_weights: Vec<f64>,
    pub coral_biases: Vec<f64>,
    pub alpha: f64,
    pub task_weights: Vec<f64>,
}

impl ReslogitParams {
    /// All-zero parameters with `w = 1/K`, unit task weights and `α = 0.5`.
    pub fn zeros(n_features: usize, n_categories: usize, depth: usize, mode: CoefficientMode) -> Self {
        let k = n_categories;
        let n_beta = match mode {
            CoefficientMode::Generic => n_features,
            CoefficientMode::AlternativeSpecific => k * n_features,
        };
        Self {
            n_categories: k,
            n_features,
            mode,
            beta: vec![0.0; n_beta],
            beta_mask: vec![true; n_beta],
            residual_weights: vec![vec![0.0; k * k]; depth],
            coral_weights: vec![1.0 / k as f64; k],
            coral_biases: vec![0.0; k.saturating_sub(1)],
            alpha: 0.5,
            task_weights: vec![1.0; k.saturating_sub(1)],
        }
    }

    /// Zero parameters shaped by a design spec, with its exclusions masked.
    pub fn for_design(spec: &DesignSpec, n_categories: usize, depth: usize) -> Self {
        let p = spec.feature_columns.len();
        let mut params = Self::zeros(p, n_categories, depth, spec.coefficient_mode);
        if spec.coefficient_mode == CoefficientMode::AlternativeSpecific {
            for k in 0..n_categories {
                for (j, col) in spec.feature_columns.iter().enumerate() {
                    if spec.is_excluded(col, k as u32 + 1) {
                        params.beta_mask[k * p + j] = false;
                    }
                }
            }
        }
        params
    }

    pub fn depth(&self) -> usize {
        self.residual_weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_categories;
        if k < 2 {
            return Err(Error::config("need at least two categories"));
        }
        let n_beta = match self.mode {
            CoefficientMode::Generic => self.n_features,
            CoefficientMode::AlternativeSpecific => k * self.n_features,
        };
        let shape = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { what, expected, got })
            }
        };
        shape("beta", n_beta, self.beta.len())?;
        shape("beta mask", n_beta, self.beta_mask.len())?;
        shape("coral weights", k, self.coral_weights.len())?;
        shape("coral biases", k - 1, self.coral_biases.len())?;
        shape("task weights", k - 1, self.task_weights.len())?;
        for w in &self.residual_weights {
            shape("residual matrix", k * k, w.len())?;
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha must lie in (0, 1)"));
        }
        if self.task_weights.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::config("task weights must be positive"));
        }
        let all = self
            .beta
            .iter()
            .chain(self.residual_weights.iter().flatten())
            .chain(&self.coral_weights)
            .chain(&self.coral_biases);
        if let Some(i) = all.clone().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "parameters", index: i });
        }
        Ok(())
    }

    /// Number of trainable scalars: free β entries, `M·K²`, `K` and `K−1`.
    pub fn n_trainable(&self) -> usize {
        let k = self.n_categories;
        self.beta_mask.iter().filter(|&&m| m).count() + self.depth() * k * k + k + (k - 1)
    }

    /// Trainable entries in a fixed order: free β, residual matrices, w, b.
    pub fn trainable_to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_trainable());
        out.extend(
            self.beta
                .iter()
                .zip(&self.beta_mask)
                .filter(|(_, &m)| m)
                .map(|(b, _)| *b),
        );
        for w in &self.residual_weights {
            out.extend_from_slice(w);
        }
        out.extend_from_slice(&self.coral_weights);
        out.extend_from_slice(&self.coral_biases);
        out
    }

    /// Inverse of [`trainable_to_vec`](Self::trainable_to_vec).
    pub fn assign_trainable(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.n_trainable(), "trainable vector length");
        let mut it = values.iter().copied();
        for (b, &m) in self.beta.iter_mut().zip(&self.beta_mask) {
            *b = if m { it.next().unwrap() } else { 0.0 };
        }
        for w in &mut self.residual_weights {
            for v in w.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        for v in self.coral_weights.iter_mut().chain(self.coral_biases.iter_mut()) {
            *v = it.next().unwrap();
        }
    }

    /// Human-readable names for the trainable entries, in vector order.
    pub fn trainable_names(&self, feature_names: &[String]) -> Vec<String> {
        let k = self.n_categories;
        let p = self.n_features;
        let mut out = Vec::with_capacity(self.n_trainable());
        for (i, &m) in self.beta_mask.iter().enumerate() {
            if !m {
                continue;
            }
            out.push(match self.mode {
                CoefficientMode::Generic => feature_names[i].clone(),
                CoefficientMode::AlternativeSpecific => {
                    format!("{}[{}]", feature_names[i % p], i / p + 1)
                }
            });
        }
        for m in 0..self.depth() {
            for r in 0..k {
                for c in 0..k {
                    out.push(format!("W{}[{},{}]", m + 1, r + 1, c + 1));
                }
            }
        }
        out.extend((1..=k).map(|j| format!("w[{j}]")));
        out.extend((1..k).map(|j| format!("Bias{j}")));
        out
    }

    /// Category (1-based) that a β entry belongs to, if alternative-specific.
    pub fn beta_category(&self, index: usize) -> Option<u32> {
        match self.mode {
            CoefficientMode::Generic => None,
            CoefficientMode::AlternativeSpecific => Some((index / self.n_features) as u32 + 1),
        }
    }

    /// Whether the biases are non-increasing, which makes the exceedance
    /// probabilities non-increasing for every observation.
    pub fn biases_ordered(&self) -> bool {
        self.coral_biases.windows(2).all(|w| w[0] >= w[1])
    }
}

/// Gradient with the same block layout as [`ReslogitParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReslogitGradient {
    pub beta: Vec<f64>,
    pub residual_weights: Vec<Vec<f64>>,
    pub coral_weights: Vec<f64>,
    pub coral_biases: Vec<f64>,
}

impl ReslogitGradient {
    pub fn zeros_like(params: &ReslogitParams) -> Self {
        Self {
            beta: vec![0.0; params.beta.len()],
            residual_weights: params.residual_weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            coral_weights: vec![0.0; params.coral_weights.len()],
            coral_biases: vec![0.0; params.coral_biases.len()],
        }
    }

    pub fn clear(&mut self) {
        self.beta.fill(0.0);
        for w in &mut self.residual_weights {
            w.fill(0.0);
        }
        self.coral_weights.fill(0.0);
        self.coral_biases.fill(0.0);
    }

    /// Flatten in [`ReslogitParams::trainable_to_vec`] order.
    pub fn to_vec(&self, params: &ReslogitParams) -> Vec<f64> {
        let mut out = Vec::with_capacity(params.n_trainable());
        out.extend(
            self.beta
                .iter()
                .zip(&params.beta_mask)
                .filter(|(_, &m)| m)
                .map(|(g, _)| *g),
        );
        for w in &self.residual_weights {
            out.extend_from_slice(w);
        }
        out.extend_from_slice(&self.coral_weights);
        out.extend_from_slice(&self.coral_biases);
        out
    }
}
