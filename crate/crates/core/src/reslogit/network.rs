//! Forward pass, loss and exact reverse-mode gradients of the residual
//! CORAL network.

use crate::data::{CoefficientMode, Dataset};
use crate::error::{Error, Result};
use crate::math::{log_sigmoid, sigmoid, softplus};
use crate::model::ChoiceProbs;

use super::params::{ReslogitGradient, ReslogitParams};

/// Every intermediate quantity of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `V⁰ … Vᴹ`, each of length `K`.
    pub v_layers: Vec<Vec<f64>>,
    pub z: f64,
    pub exceedance: Vec<f64>,
}

/// Deterministic utilities `V⁰`: `β·x` replicated `K` times in generic
/// mode, `(β₁·x, …, β_K·x)` in alternative-specific mode.
pub fn deterministic_utilities(params: &ReslogitParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != params.n_features {
        return Err(Error::DimensionMismatch {
            what: "features",
            expected: params.n_features,
            got: x.len(),
        });
    }
    let mut out = vec![0.0; params.n_categories];
    utilities_into(params, x, &mut out);
    Ok(out)
}

fn utilities_into(params: &ReslogitParams, x: &[f64], out: &mut [f64]) {
    let p = params.n_features;
    match params.mode {
        CoefficientMode::Generic => {
            let v: f64 = params.beta.iter().zip(x).map(|(b, x)| b * x).sum();
            out.fill(v);
        }
        CoefficientMode::AlternativeSpecific => {
            for (k, o) in out.iter_mut().enumerate() {
                let row = &params.beta[k * p..(k + 1) * p];
                let mask = &params.beta_mask[k * p..(k + 1) * p];
                *o = row
                    .iter()
                    .zip(mask)
                    .zip(x)
                    .filter(|((_, &m), _)| m)
                    .map(|((b, _), x)| b * x)
                    .sum();
            }
        }
    }
}

/// Apply `V ← V − softplus(W·V)` once per residual matrix.
pub fn forward_utilities(v0: &[f64], residual_weights: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = v0.len();
    let mut layers = Vec::with_capacity(residual_weights.len() + 1);
    layers.push(v0.to_vec());
    for w in residual_weights {
        let prev = layers.last().unwrap();
        let next = (0..k)
            .map(|i| {
                let a: f64 = (0..k).map(|j| w[i * k + j] * prev[j]).sum();
                prev[i] - softplus(a)
            })
            .collect();
        layers.push(next);
    }
    layers
}

/// `σ(w·Vᴹ + b_k)` for each of the `K−1` binary classifiers.
pub fn coral_exceedance(vm: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let z: f64 = w.iter().zip(vm).map(|(w, v)| w * v).sum();
    b.iter().map(|&bk| sigmoid(z + bk)).collect()
}

/// Category probabilities `P(y > k−1) − P(y > k)`.
///
/// Negative differences are clamped to zero and the rest renormalized; if
/// nothing survives the result is uniform and flagged degenerate.
pub fn choice_probs_from_exceedance(p: &[f64]) -> ChoiceProbs {
    let k = p.len() + 1;
    let upper = |c: usize| if c == 0 { 1.0 } else { p[c - 1] };
    let lower = |c: usize| if c == k - 1 { 0.0 } else { p[c] };
    let mut probs: Vec<f64> = (0..k).map(|c| upper(c) - lower(c)).collect();
    let clamped = probs.iter().any(|&v| v < 0.0);
    if !clamped {
        return ChoiceProbs { probs, clamped, degenerate: false };
    }
    for v in probs.iter_mut() {
        *v = v.max(0.0);
    }
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        for v in probs.iter_mut() {
            *v /= total;
        }
        ChoiceProbs { probs, clamped, degenerate: false }
    } else {
        ChoiceProbs {
            probs: vec![1.0 / k as f64; k],
            clamped,
            degenerate: true,
        }
    }
}

/// `1 + #{k : p_k > α}`.
pub fn predict_rank(p: &[f64], alpha: f64) -> u32 {
    1 + p.iter().filter(|&&pk| pk > alpha).count() as u32
}

/// Full forward pass for one observation.
pub fn forward(params: &ReslogitParams, x: &[f64]) -> Result<ForwardTrace> {
    let v0 = deterministic_utilities(params, x)?;
    let v_layers = forward_utilities(&v0, &params.residual_weights);
    let vm = v_layers.last().unwrap();
    let z: f64 = params.coral_weights.iter().zip(vm).map(|(w, v)| w * v).sum();
    let exceedance = params.coral_biases.iter().map(|&b| sigmoid(z + b)).collect();
    Ok(ForwardTrace { v_layers, z, exceedance })
}

/// Reusable buffers for allocation-free forward and backward passes.
pub(crate) struct Workspace {
    v: Vec<Vec<f64>>,
    /// `σ(Wᵐ·Vᵐ⁻¹)`, the derivative of each softplus.
    s: Vec<Vec<f64>>,
    g: Vec<f64>,
    u: Vec<f64>,
    z: f64,
}

impl Workspace {
    pub(crate) fn new(params: &ReslogitParams) -> Self {
        let k = params.n_categories;
        let m = params.depth();
        Self {
            v: vec![vec![0.0; k]; m + 1],
            s: vec![vec![0.0; k]; m],
            g: vec![0.0; k],
            u: vec![0.0; k],
            z: 0.0,
        }
    }

    /// Run the network and return `z`; layers stay cached for `backward`.
    pub(crate) fn forward(&mut self, params: &ReslogitParams, x: &[f64]) -> f64 {
        let k = params.n_categories;
        utilities_into(params, x, &mut self.v[0]);
        for (m, w) in params.residual_weights.iter().enumerate() {
            let (done, rest) = self.v.split_at_mut(m + 1);
            let prev = &done[m];
            let next = &mut rest[0];
            for i in 0..k {
                let row = &w[i * k..(i + 1) * k];
                let a: f64 = row.iter().zip(prev).map(|(w, v)| w * v).sum();
                self.s[m][i] = sigmoid(a);
                next[i] = prev[i] - softplus(a);
            }
        }
        let vm = &self.v[params.depth()];
        self.z = params.coral_weights.iter().zip(vm).map(|(w, v)| w * v).sum();
        self.z
    }

    /// Loss of the cached pass for label `y`.
    pub(crate) fn loss(&self, params: &ReslogitParams, y: u32) -> f64 {
        params
            .coral_biases
            .iter()
            .zip(&params.task_weights)
            .enumerate()
            .map(|(k, (&b, &lambda))| {
                let t = self.z + b;
                let ll = if y as usize > k + 1 { log_sigmoid(t) } else { log_sigmoid(-t) };
                -lambda * ll
            })
            .sum()
    }

    /// Propagate `∂L/∂z` back through the cached pass, adding into `grad`.
    fn backprop_z(&mut self, params: &ReslogitParams, x: &[f64], dz: f64, grad: &mut ReslogitGradient) {
        let k = params.n_categories;
        let depth = params.depth();
        for (gw, v) in grad.coral_weights.iter_mut().zip(&self.v[depth]) {
            *gw += dz * v;
        }
        for (g, w) in self.g.iter_mut().zip(&params.coral_weights) {
            *g = dz * w;
        }
        for m in (0..depth).rev() {
            let w = &params.residual_weights[m];
            let prev = &self.v[m];
            let gw = &mut grad.residual_weights[m];
            for i in 0..k {
                self.u[i] = self.g[i] * self.s[m][i];
            }
            for i in 0..k {
                let ui = self.u[i];
                for j in 0..k {
                    gw[i * k + j] -= ui * prev[j];
                }
            }
            for j in 0..k {
                let back: f64 = (0..k).map(|i| w[i * k + j] * self.u[i]).sum();
                self.g[j] -= back;
            }
        }
        let p = params.n_features;
        match params.mode {
            CoefficientMode::Generic => {
                let total: f64 = self.g.iter().sum();
                for (gb, xj) in grad.beta.iter_mut().zip(x) {
                    *gb += total * xj;
                }
            }
            CoefficientMode::AlternativeSpecific => {
                for c in 0..k {
                    for j in 0..p {
                        if params.beta_mask[c * p + j] {
                            grad.beta[c * p + j] += self.g[c] * x[j];
                        }
                    }
                }
            }
        }
    }

    /// Loss gradient of the cached pass for label `y`, added into `grad`.
    pub(crate) fn backward(&mut self, params: &ReslogitParams, x: &[f64], y: u32, grad: &mut ReslogitGradient) {
        let mut dz = 0.0;
        for (k, (&b, &lambda)) in params.coral_biases.iter().zip(&params.task_weights).enumerate() {
            let target = if y as usize > k + 1 { 1.0 } else { 0.0 };
            let dt = lambda * (sigmoid(self.z + b) - target);
            grad.coral_biases[k] += dt;
            dz += dt;
        }
        self.backprop_z(params, x, dz, grad);
    }

    /// `∂z/∂V⁰` of the cached pass, left in `self.g`.
    fn utility_sensitivity(&mut self, params: &ReslogitParams) -> &[f64] {
        let k = params.n_categories;
        for (g, w) in self.g.iter_mut().zip(&params.coral_weights) {
            *g = *w;
        }
        for m in (0..params.depth()).rev() {
            let w = &params.residual_weights[m];
            for i in 0..k {
                self.u[i] = self.g[i] * self.s[m][i];
            }
            for j in 0..k {
                let back: f64 = (0..k).map(|i| w[i * k + j] * self.u[i]).sum();
                self.g[j] -= back;
            }
        }
        &self.g
    }
}

fn check_batch(params: &ReslogitParams, data: &Dataset) -> Result<()> {
    if data.n_features() != params.n_features {
        return Err(Error::DimensionMismatch {
            what: "features",
            expected: params.n_features,
            got: data.n_features(),
        });
    }
    if data.n_categories() != params.n_categories {
        return Err(Error::DimensionMismatch {
            what: "categories",
            expected: params.n_categories,
            got: data.n_categories(),
        });
    }
    Ok(())
}

/// Total weighted cross-entropy over the rows `indices` of `data`.
pub fn batch_loss(params: &ReslogitParams, data: &Dataset, indices: &[usize]) -> Result<f64> {
    check_batch(params, data)?;
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ws = Workspace::new(params);
    let mut total = 0.0;
    for &i in indices {
        ws.forward(params, data.row(i));
        let l = ws.loss(params, data.labels()[i]);
        if !l.is_finite() {
            return Err(Error::NonFinite { context: "loss", index: i });
        }
        total += l;
    }
    Ok(total)
}

/// Total weighted cross-entropy over every row of `data`.
pub fn loss(params: &ReslogitParams, data: &Dataset) -> Result<f64> {
    let all: Vec<usize> = (0..data.n_rows()).collect();
    batch_loss(params, data, &all)
}

/// Exact gradient of [`batch_loss`].
pub fn batch_gradient(params: &ReslogitParams, data: &Dataset, indices: &[usize]) -> Result<ReslogitGradient> {
    check_batch(params, data)?;
    let mut ws = Workspace::new(params);
    let mut grad = ReslogitGradient::zeros_like(params);
    for &i in indices {
        let x = data.row(i);
        ws.forward(params, x);
        ws.backward(params, x, data.labels()[i], &mut grad);
    }
    Ok(grad)
}

/// Exact gradient of [`loss`].
pub fn gradient(params: &ReslogitParams, data: &Dataset) -> Result<ReslogitGradient> {
    let all: Vec<usize> = (0..data.n_rows()).collect();
    batch_gradient(params, data, &all)
}

/// Loss gradient of a single observation, flattened in trainable order.
pub fn observation_gradient(params: &ReslogitParams, x: &[f64], y: u32) -> Vec<f64> {
    let mut ws = Workspace::new(params);
    let mut grad = ReslogitGradient::zeros_like(params);
    ws.forward(params, x);
    ws.backward(params, x, y, &mut grad);
    grad.to_vec(params)
}

/// `∂P(y = c)/∂x_feature` for every category, or `None` when the
/// probabilities had to be clamped and are not differentiable.
pub fn choice_prob_input_gradient(params: &ReslogitParams, x: &[f64], feature: usize) -> Option<Vec<f64>> {
    let mut ws = Workspace::new(params);
    let z = ws.forward(params, x);
    let e: Vec<f64> = params.coral_biases.iter().map(|&b| sigmoid(z + b)).collect();
    if choice_probs_from_exceedance(&e).clamped {
        return None;
    }
    let p = params.n_features;
    let sens = ws.utility_sensitivity(params);
    let dz = match params.mode {
        CoefficientMode::Generic => sens.iter().sum::<f64>() * params.beta[feature],
        CoefficientMode::AlternativeSpecific => sens
            .iter()
            .enumerate()
            .map(|(c, s)| s * params.beta[c * p + feature])
            .sum(),
    };
    let de: Vec<f64> = e.iter().map(|&ek| ek * (1.0 - ek) * dz).collect();
    let k = params.n_categories;
    Some(
        (0..k)
            .map(|c| {
                let upper = if c == 0 { 0.0 } else { de[c - 1] };
                let lower = if c == k - 1 { 0.0 } else { de[c] };
                upper - lower
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn params_with(z_bias: &[f64], k: usize) -> ReslogitParams {
        let mut p = ReslogitParams::zeros(1, k, 0, CoefficientMode::Generic);
        p.coral_biases = z_bias.to_vec();
        p
    }

    #[test]
    fn utilities_in_both_modes() {
        let mut g = ReslogitParams::zeros(2, 3, 0, CoefficientMode::Generic);
        g.beta = vec![1.0, 0.25];
        assert_eq!(deterministic_utilities(&g, &[1.0, 2.0]).unwrap(), vec![1.5; 3]);
        assert_eq!(deterministic_utilities(&g, &[0.0, 0.0]).unwrap(), vec![0.0; 3]);

        let mut a = ReslogitParams::zeros(1, 3, 0, CoefficientMode::AlternativeSpecific);
        a.beta = vec![0.2, -0.1, 0.4];
        assert_eq!(deterministic_utilities(&a, &[1.0]).unwrap(), vec![0.2, -0.1, 0.4]);
        a.beta_mask[1] = false;
        assert_eq!(deterministic_utilities(&a, &[1.0]).unwrap(), vec![0.2, 0.0, 0.4]);
        assert!(deterministic_utilities(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn residual_layers() {
        let layers = forward_utilities(&[0.0; 3], &[vec![0.0; 9]]);
        for v in &layers[1] {
            assert!(close(*v, -std::f64::consts::LN_2, 1e-15));
        }
        let layers = forward_utilities(&[1.0, -1.0], &[vec![1.0, 0.0, 0.0, 1.0]]);
        assert!(close(layers[1][0], -0.31326, 1e-5));
        assert!(close(layers[1][1], -1.31326, 1e-5));
        let v0 = [0.3, -2.0];
        assert_eq!(forward_utilities(&v0, &[]), vec![v0.to_vec()]);
    }

    #[test]
    fn coral_head() {
        let p = coral_exceedance(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 0.0]);
        assert!(close(p[0], 0.731_058_578_6, 1e-9) && p[1] == 0.5);
        let p = coral_exceedance(&[1.0, 2.0, 3.0], &[1.0; 3], &[-5.0, -7.0]);
        assert!(close(p[0], 0.731_058_578_6, 1e-9) && close(p[1], 0.268_941_421_4, 1e-9));
        let a = coral_exceedance(&[4.0, -9.0], &[0.0, 0.0], &[0.3, -0.3]);
        let b = coral_exceedance(&[-1.0, 2.0], &[0.0, 0.0], &[0.3, -0.3]);
        assert_eq!(a, b);
    }

    #[test]
    fn choice_probabilities() {
        let cp = choice_probs_from_exceedance(&[0.73106, 0.26894]);
        assert!(!cp.clamped);
        for (a, b) in cp.probs.iter().zip([0.26894, 0.46212, 0.26894]) {
            assert!(close(*a, b, 1e-12));
        }
        assert_eq!(choice_probs_from_exceedance(&[0.5, 0.5]).probs, vec![0.5, 0.0, 0.5]);

        let cp = choice_probs_from_exceedance(&[0.3, 0.6]);
        assert!(cp.clamped && !cp.degenerate);
        assert!(close(cp.probs[0], 0.7 / 1.3, 1e-12));
        assert_eq!(cp.probs[1], 0.0);
        assert!(close(cp.probs[2], 0.6 / 1.3, 1e-12));
    }

    #[test]
    fn rank_prediction() {
        assert_eq!(predict_rank(&[0.9, 0.6, 0.2], 0.5), 3);
        assert_eq!(predict_rank(&[0.45, 0.35], 0.4), 2);
        assert_eq!(predict_rank(&[0.1, 0.05], 0.5), 1);
        assert_eq!(predict_rank(&[0.5], 0.5), 1);
    }

    #[test]
    fn loss_closed_forms() {
        let data = Dataset::new(vec!["x".into()], vec![0.0], vec![3], 3).unwrap();
        let l = loss(&params_with(&[0.0, 0.0], 3), &data).unwrap();
        assert!(close(l, 2.0 * std::f64::consts::LN_2, 1e-12));

        let data = Dataset::new(vec!["x".into()], vec![0.0], vec![2], 3).unwrap();
        let l = loss(&params_with(&[1.0, -1.0], 3), &data).unwrap();
        assert!(close(l, 0.626_523_6, 1e-6));

        let data = Dataset::new(vec!["x".into()], vec![0.0], vec![2], 3).unwrap();
        let l = loss(&params_with(&[60.0, -60.0], 3), &data).unwrap();
        assert!(l < 1e-25);
    }

    #[test]
    fn bias_gradient_closed_form() {
        let data = Dataset::new(vec!["x".into()], vec![0.5, -1.0, 2.0], vec![1, 3, 2], 3).unwrap();
        let mut p = params_with(&[0.4, -0.7], 3);
        p.beta = vec![0.8];
        let g = gradient(&p, &data).unwrap();
        for k in 0..2 {
            let expected: f64 = (0..3)
                .map(|i| {
                    let tr = forward(&p, data.row(i)).unwrap();
                    let y = if data.labels()[i] as usize > k + 1 { 1.0 } else { 0.0 };
                    tr.exceedance[k] - y
                })
                .sum();
            assert!(close(g.coral_biases[k], expected, 1e-14));
        }
    }

    #[test]
    fn workspace_matches_trace() {
        let mut p = ReslogitParams::zeros(2, 3, 2, CoefficientMode::AlternativeSpecific);
        p.beta = vec![0.1, -0.3, 0.5, 0.2, -0.4, 0.7];
        p.residual_weights[0] = (0..9).map(|i| 0.1 * i as f64 - 0.4).collect();
        p.residual_weights[1] = (0..9).map(|i| 0.3 - 0.05 * i as f64).collect();
        p.coral_biases = vec![0.5, -0.5];
        let x = [1.2, -0.7];
        let tr = forward(&p, &x).unwrap();
        let mut ws = Workspace::new(&p);
        assert_eq!(ws.forward(&p, &x), tr.z);
        assert_eq!(tr.v_layers.len(), 3);
    }
}
