//! Proportional-odds (ordered logit) model.
//!
//! The latent propensity is `β·x + η` with standard logistic `η` and no
//! intercept; category `k` is observed when the propensity falls in
//! `(δ_{k-1}, δ_k]`. Fitting maximizes the log-likelihood over `β` and an
//! unconstrained threshold parameterization `δ_1 = t_1`,
//! `δ_k = δ_{k-1} + softplus(t_k)`, so thresholds stay strictly increasing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{standardize, CoefficientMode, Dataset, DesignSpec, ScalingParams};
use crate::discretize::check_thresholds;
use crate::error::{Error, Result};
use crate::math::{ln_sigmoid_diff, log_sigmoid, logit, sigmoid, softplus, softplus_inv};
use crate::model::{argmax_rank, ChoiceModel, ChoiceProbs};

/// `P(U* > δ) = σ(β·x − δ)`.
pub fn exceedance_prob(index: f64, delta: f64) -> f64 {
    sigmoid(index - delta)
}

/// Category probabilities `P(y = k) = P(U* > δ_{k-1}) − P(U* > δ_k)`.
pub fn choice_probs(index: f64, deltas: &[f64]) -> Result<Vec<f64>> {
    check_thresholds(deltas)?;
    Ok(choice_probs_unchecked(index, deltas))
}

fn choice_probs_unchecked(index: f64, deltas: &[f64]) -> Vec<f64> {
    let k = deltas.len() + 1;
    let mut out = Vec::with_capacity(k);
    let mut upper = 1.0;
    for &d in deltas {
        let e = exceedance_prob(index, d);
        out.push(upper - e);
        upper = e;
    }
    out.push(upper);
    out
}

/// Derivatives of `ln P(y)` with respect to `a = η − δ_{y-1}` and
/// `b = η − δ_y`; absent edges carry zeros.
#[derive(Debug, Clone, Copy)]
struct ObsTerms {
    ln_p: f64,
    fa: f64,
    fb: f64,
    faa: f64,
    fab: f64,
    fbb: f64,
}

fn obs_terms(eta: f64, y: u32, deltas: &[f64]) -> ObsTerms {
    let k = deltas.len() + 1;
    let y = y as usize;
    let zero = ObsTerms {
        ln_p: 0.0,
        fa: 0.0,
        fb: 0.0,
        faa: 0.0,
        fab: 0.0,
        fbb: 0.0,
    };
    if y == 1 {
        let b = eta - deltas[0];
        let sb = sigmoid(b);
        ObsTerms {
            ln_p: log_sigmoid(-b),
            fb: -sb,
            fbb: -sb * sigmoid(-b),
            ..zero
        }
    } else if y == k {
        let a = eta - deltas[k - 2];
        let sa = sigmoid(-a);
        ObsTerms {
            ln_p: log_sigmoid(a),
            fa: sa,
            faa: -sa * sigmoid(a),
            ..zero
        }
    } else {
        let a = eta - deltas[y - 2];
        let b = eta - deltas[y - 1];
        let r = 1.0 / (a - b).exp_m1();
        let fa = sigmoid(-a) + r;
        let fb = -sigmoid(b) - r;
        ObsTerms {
            ln_p: ln_sigmoid_diff(a, b),
            fa,
            fb,
            faa: fa * (1.0 - 2.0 * sigmoid(a)) - fa * fa,
            fab: -fa * fb,
            fbb: fb * (1.0 - 2.0 * sigmoid(b)) - fb * fb,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_shapes(beta: &[f64], deltas: &[f64], data: &Dataset) -> Result<()> {
    if beta.len() != data.n_features() {
        return Err(Error::DimensionMismatch {
            what: "beta",
            expected: data.n_features(),
            got: beta.len(),
        });
    }
    if deltas.len() + 1 != data.n_categories() {
        return Err(Error::DimensionMismatch {
            what: "thresholds",
            expected: data.n_categories().saturating_sub(1),
            got: deltas.len(),
        });
    }
    if deltas.is_empty() {
        return Err(Error::config("ordered logit needs at least two categories"));
    }
    check_thresholds(deltas)
}

/// `Σ_n ln P(y_n)` on model-space data, summed in row order.
pub fn log_likelihood(beta: &[f64], deltas: &[f64], data: &Dataset) -> Result<f64> {
    check_shapes(beta, deltas, data)?;
    Ok(ll_unchecked(beta, deltas, data))
}

fn ll_unchecked(beta: &[f64], deltas: &[f64], data: &Dataset) -> f64 {
    (0..data.n_rows())
        .map(|i| obs_terms(dot(beta, data.row(i)), data.labels()[i], deltas).ln_p)
        .sum()
}

/// Log-likelihood and its gradient over `(β, δ)` stacked in that order.
pub fn log_likelihood_gradient(
    beta: &[f64],
    deltas: &[f64],
    data: &Dataset,
) -> Result<(f64, Vec<f64>)> {
    check_shapes(beta, deltas, data)?;
    let (ll, g, _) = derivatives(beta, deltas, data, false);
    Ok((ll, g))
}

/// Observed Hessian of the log-likelihood over `(β, δ)`.
pub fn log_likelihood_hessian(beta: &[f64], deltas: &[f64], data: &Dataset) -> Result<DMatrix<f64>> {
    check_shapes(beta, deltas, data)?;
    Ok(derivatives(beta, deltas, data, true).2.expect("hessian requested"))
}

fn derivatives(
    beta: &[f64],
    deltas: &[f64],
    data: &Dataset,
    hessian: bool,
) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
    let p = beta.len();
    let q = p + deltas.len();
    let k = deltas.len() + 1;
    let mut ll = 0.0;
    let mut g = vec![0.0; q];
    let mut h = if hessian { Some(DMatrix::zeros(q, q)) } else { None };
    for i in 0..data.n_rows() {
        let x = data.row(i);
        let y = data.labels()[i] as usize;
        let t = obs_terms(dot(beta, x), y as u32, deltas);
        ll += t.ln_p;
        let lo = (y >= 2).then(|| p + y - 2);
        let hi = (y < k).then(|| p + y - 1);
        let gb = t.fa + t.fb;
        for (gj, xj) in g[..p].iter_mut().zip(x) {
            *gj += gb * xj;
        }
        if let Some(l) = lo {
            g[l] -= t.fa;
        }
        if let Some(u) = hi {
            g[u] -= t.fb;
        }
        if let Some(h) = h.as_mut() {
            let hbb = t.faa + 2.0 * t.fab + t.fbb;
            for r in 0..p {
                let xr = x[r] * hbb;
                for c in 0..=r {
                    h[(r, c)] += xr * x[c];
                }
            }
            if let Some(l) = lo {
                let c = -(t.faa + t.fab);
                for r in 0..p {
                    h[(l, r)] += c * x[r];
                }
                h[(l, l)] += t.faa;
            }
            if let Some(u) = hi {
                let c = -(t.fab + t.fbb);
                for r in 0..p {
                    h[(u, r)] += c * x[r];
                }
                h[(u, u)] += t.fbb;
            }
            if let (Some(l), Some(u)) = (lo, hi) {
                // u > l, lower triangle
                h[(u, l)] += t.fab;
            }
        }
    }
    if let Some(h) = h.as_mut() {
        for r in 0..q {
            for c in (r + 1)..q {
                h[(r, c)] = h[(c, r)];
            }
        }
    }
    (ll, g, h)
}

/// Thresholds of the intercept-only model: `δ_k = logit(P̂(y ≤ k))`.
pub fn intercept_only_deltas(data: &Dataset) -> Result<Vec<f64>> {
    data.ensure_all_categories()?;
    let n = data.n_rows() as f64;
    let counts = data.category_counts();
    let mut cum = 0usize;
    Ok(counts[..counts.len() - 1]
        .iter()
        .map(|&c| {
            cum += c;
            logit(cum as f64 / n)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrderedLogitOptions {
    pub max_iterations: usize,
    /// Converged once the max-norm of the gradient falls below this.
    pub gradient_tolerance: f64,
    /// Coefficients beyond this magnitude trigger a separation warning.
    pub divergence_bound: f64,
}

impl Default for OrderedLogitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tolerance: 1e-6,
            divergence_bound: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedLogitFit {
    pub design: DesignSpec,
    pub feature_names: Vec<String>,
    pub scaling: ScalingParams,
    pub beta: Vec<f64>,
    pub deltas: Vec<f64>,
    pub log_likelihood: f64,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max_norm: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl OrderedLogitFit {
    pub fn parameter_names(&self) -> Vec<String> {
        self.feature_names
            .iter()
            .cloned()
            .chain((1..=self.deltas.len()).map(|k| format!("Threshold{k}")))
            .collect()
    }

    pub fn index(&self, x: &[f64]) -> f64 {
        dot(&self.beta, x)
    }
}

impl ChoiceModel for OrderedLogitFit {
    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn scaling(&self) -> &ScalingParams {
        &self.scaling
    }

    fn n_categories(&self) -> usize {
        self.deltas.len() + 1
    }

    fn choice_probs(&self, x: &[f64]) -> ChoiceProbs {
        ChoiceProbs {
            probs: choice_probs_unchecked(self.index(x), &self.deltas),
            clamped: false,
            degenerate: false,
        }
    }

    fn predict(&self, x: &[f64]) -> u32 {
        argmax_rank(&self.choice_probs(x).probs)
    }

    fn ln_choice_prob(&self, x: &[f64], category: u32) -> (f64, bool) {
        (obs_terms(self.index(x), category, &self.deltas).ln_p, false)
    }

    fn prob_gradient(&self, x: &[f64], feature: usize) -> Option<Vec<f64>> {
        let eta = self.index(x);
        let dens = |d: f64| {
            let s = sigmoid(eta - d);
            s * (1.0 - s)
        };
        let k = self.deltas.len() + 1;
        let bj = self.beta[feature];
        Some(
            (0..k)
                .map(|c| {
                    let upper = if c == 0 { 0.0 } else { dens(self.deltas[c - 1]) };
                    let lower = if c == k - 1 { 0.0 } else { dens(self.deltas[c]) };
                    bj * (upper - lower)
                })
                .collect(),
        )
    }
}

/// Unconstrained threshold parameters `t` and their Jacobian `∂δ/∂t`.
fn deltas_from_raw(t: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = t[0];
    out.push(acc);
    for &tj in &t[1..] {
        acc += softplus(tj);
        out.push(acc);
    }
    out
}

fn raw_from_deltas(deltas: &[f64]) -> Vec<f64> {
    let mut t = Vec::with_capacity(deltas.len());
    t.push(deltas[0]);
    for w in deltas.windows(2) {
        t.push(softplus_inv(w[1] - w[0]));
    }
    t
}

struct RawPoint {
    ll: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn raw_derivatives(theta: &[f64], p: usize, data: &Dataset) -> RawPoint {
    let (beta, t) = theta.split_at(p);
    let deltas = deltas_from_raw(t);
    let (ll, g, h) = derivatives(beta, &deltas, data, true);
    let h = h.expect("hessian requested");
    let q = theta.len();
    let m = deltas.len();
    let mut jac = DMatrix::<f64>::identity(q, q);
    for k in 0..m {
        for j in 0..=k {
            jac[(p + k, p + j)] = if j == 0 { 1.0 } else { sigmoid(t[j]) };
        }
    }
    let g = DVector::from_vec(g);
    let grad = jac.transpose() * &g;
    let mut hess = jac.transpose() * h * &jac;
    for j in 1..m {
        let tail: f64 = (j..m).map(|k| g[p + k]).sum();
        let s = sigmoid(t[j]);
        hess[(p + j, p + j)] += s * (1.0 - s) * tail;
    }
    RawPoint { ll, grad, hess }
}

/// Maximum-likelihood fit by Newton ascent with Armijo backtracking.
///
/// Starts from `β = 0` and the intercept-only thresholds, so the fitted
/// log-likelihood never falls below the intercept-only value. When the
/// Hessian is not negative definite the step falls back to the gradient.
pub fn fit_ordered_logit(
    train: &Dataset,
    spec: &DesignSpec,
    opts: &OrderedLogitOptions,
) -> Result<OrderedLogitFit> {
    spec.validate(train.feature_names(), train.n_categories())?;
    if train.n_categories() < 2 {
        return Err(Error::config("ordered logit needs at least two categories"));
    }
    if spec.coefficient_mode != CoefficientMode::Generic || !spec.exclusions.is_empty() {
        return Err(Error::config(
            "ordered logit takes one generic coefficient vector without exclusions",
        ));
    }
    let projected = train.select_columns(&spec.feature_columns)?;
    let (data, scaling) = standardize(&projected, spec)?;
    data.ensure_all_categories()?;

    let p = data.n_features();
    let mut theta: Vec<f64> = vec![0.0; p];
    theta.extend(raw_from_deltas(&intercept_only_deltas(&data)?));

    let mut point = raw_derivatives(&theta, p, &data);
    if !point.ll.is_finite() {
        return Err(Error::NonFiniteLikelihood { iteration: 0 });
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        if point.grad.amax() < opts.gradient_tolerance {
            converged = true;
            break;
        }
        let neg_h = -&point.hess;
        let direction = match neg_h.cholesky() {
            Some(ch) => ch.solve(&point.grad),
            None => point.grad.clone(),
        };
        let slope = point.grad.dot(&direction);
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-14 {
            let trial: Vec<f64> = theta
                .iter()
                .zip(direction.iter())
                .map(|(t, d)| t + step * d)
                .collect();
            let (b, t) = trial.split_at(p);
            let ll = ll_unchecked(b, &deltas_from_raw(t), &data);
            // slack for rounding in the summed log-likelihood
            let noise = 64.0 * f64::EPSILON * point.ll.abs();
            if ll.is_finite() && ll >= point.ll + 1e-4 * step * slope - noise {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some(trial) = accepted else {
            // no ascent possible at working precision
            break;
        };
        theta = trial;
        point = raw_derivatives(&theta, p, &data);
        if !point.ll.is_finite() {
            return Err(Error::NonFiniteLikelihood { iteration: iterations });
        }
    }
    let grad_norm = point.grad.amax();
    converged |= grad_norm < opts.gradient_tolerance;

    let (beta, t) = theta.split_at(p);
    let deltas = deltas_from_raw(t);
    let mut warnings = Vec::new();
    if let Some(j) = beta.iter().position(|b| b.abs() > opts.divergence_bound) {
        let msg = format!(
            "coefficient of {:?} is {:.3}; the data may be perfectly separated",
            spec.feature_columns[j], beta[j]
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if !converged {
        warnings.push(format!(
            "not converged after {iterations} iterations (gradient max-norm {grad_norm:.3e})"
        ));
    }
    Ok(OrderedLogitFit {
        design: spec.clone(),
        feature_names: spec.feature_columns.clone(),
        scaling,
        beta: beta.to_vec(),
        n_params: p + deltas.len(),
        deltas,
        log_likelihood: point.ll,
        converged,
        iterations,
        gradient_max_norm: grad_norm,
        warnings,
    })
}
