//! Fit diagnostics shared by both models: prediction error, log-likelihood,
//! AIC, standard errors and coefficient tables.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::compensated_sum;
use crate::model::{to_model_space, ChoiceModel, FittedModel, ModelKind};
use crate::ordered_logit::{log_likelihood_hessian, OrderedLogitFit};
use crate::reslogit::{observation_gradient, ReslogitFit};

/// Caveat attached to every BHHH-based table.
pub const BHHH_CAVEAT: &str = "Standard errors of the residual model use the BHHH outer-product \
     estimator; they are sensitive to the batch size and training path and should be read as \
     indicative.";

/// Fraction of positions where `predicted` and `actual` differ.
pub fn mpe(predicted: &[u32], actual: &[u32]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            what: "predictions",
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let wrong = predicted.iter().zip(actual).filter(|(p, a)| p != a).count();
    Ok(wrong as f64 / actual.len() as f64)
}

/// `−2·LL + 2·B`.
pub fn aic(log_likelihood: f64, n_params: usize) -> f64 {
    -2.0 * log_likelihood + 2.0 * n_params as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub value: f64,
    /// Observations whose probabilities needed clamping.
    pub clamped: usize,
    /// Observations whose observed category had zero probability.
    pub zero_probability: usize,
}

/// Rank predictions for every row of raw `data`.
pub fn predictions(model: &dyn ChoiceModel, data: &Dataset) -> Result<Vec<u32>> {
    let x = to_model_space(model, data)?;
    Ok((0..x.n_rows()).into_par_iter().map(|i| model.predict(x.row(i))).collect())
}

/// Share of rows of raw `data` whose rank is predicted correctly.
pub fn accuracy(model: &dyn ChoiceModel, data: &Dataset) -> Result<f64> {
    Ok(1.0 - mpe(&predictions(model, data)?, data.labels())?)
}

/// `Σ ln P(y_n)` over raw `data`. A zero probability yields `−∞` and is
/// counted rather than raised.
pub fn model_log_likelihood(model: &dyn ChoiceModel, data: &Dataset) -> Result<LogLikelihood> {
    let x = to_model_space(model, data)?;
    if x.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let terms: Vec<(f64, bool)> = (0..x.n_rows())
        .into_par_iter()
        .map(|i| model.ln_choice_prob(x.row(i), x.labels()[i]))
        .collect();
    let zero_probability = terms.iter().filter(|(l, _)| *l == f64::NEG_INFINITY).count();
    let clamped = terms.iter().filter(|(_, c)| *c).count();
    let value = if zero_probability > 0 {
        f64::NEG_INFINITY
    } else {
        compensated_sum(terms.iter().map(|(l, _)| *l))
    };
    Ok(LogLikelihood {
        value,
        clamped,
        zero_probability,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub value: f64,
    /// `None` when the information matrix is singular in this direction or
    /// no standard error was requested.
    pub std_error: Option<f64>,
    pub t_stat: Option<f64>,
}

/// Standard errors from a covariance derived from a symmetric positive
/// semi-definite information matrix. Directions the matrix cannot resolve
/// yield `None`.
pub fn standard_errors(information: &DMatrix<f64>) -> Vec<Option<f64>> {
    let n = information.nrows();
    if n == 0 {
        return Vec::new();
    }
    if let Some(chol) = information.clone().cholesky() {
        let cov = chol.inverse();
        if cov.iter().all(|v| v.is_finite()) {
            return (0..n)
                .map(|i| {
                    let v = cov[(i, i)];
                    (v > 0.0).then(|| v.sqrt())
                })
                .collect();
        }
    }
    let eig = SymmetricEigen::new(information.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = top * n as f64 * f64::EPSILON * 1e3;
    let mut se = vec![0.0; n];
    let mut undefined = vec![top == 0.0; n];
    for (c, &lambda) in eig.eigenvalues.iter().enumerate() {
        let vec = eig.eigenvectors.column(c);
        if lambda > tol {
            for i in 0..n {
                se[i] += vec[i] * vec[i] / lambda;
            }
        } else {
            for i in 0..n {
                if vec[i].abs() > 1e-8 {
                    undefined[i] = true;
                }
            }
        }
    }
    se.iter()
        .zip(&undefined)
        .map(|(&v, &u)| (!u && v > 0.0).then(|| v.sqrt()))
        .collect()
}

fn estimates(names: Vec<String>, values: Vec<f64>, se: Vec<Option<f64>>) -> Vec<ParamEstimate> {
    names
        .into_iter()
        .zip(values)
        .zip(se)
        .map(|((name, value), std_error)| ParamEstimate {
            name,
            value,
            std_error,
            t_stat: std_error.map(|s| value / s),
        })
        .collect()
}

/// Ordered-logit estimates with standard errors from the inverse observed
/// Hessian at the fitted parameters.
pub fn ordered_logit_estimates(fit: &OrderedLogitFit, train: &Dataset) -> Result<Vec<ParamEstimate>> {
    let x = to_model_space(fit, train)?;
    let h = log_likelihood_hessian(&fit.beta, &fit.deltas, &x)?;
    let info = -h;
    let mut values = fit.beta.clone();
    values.extend_from_slice(&fit.deltas);
    Ok(estimates(fit.parameter_names(), values, standard_errors(&info)))
}

/// Which residual-model parameters receive BHHH standard errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BhhhScope {
    /// Only the free β entries; all other parameters are listed without one.
    #[default]
    Beta,
    /// Every trainable parameter.
    Full,
}

/// Residual-model estimates with BHHH standard errors: the covariance is the
/// inverse of the summed outer products of per-observation loss gradients.
pub fn reslogit_estimates(fit: &ReslogitFit, train: &Dataset, scope: BhhhScope) -> Result<Vec<ParamEstimate>> {
    let x = to_model_space(fit, train)?;
    if x.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let params = &fit.params;
    let names = fit.parameter_names();
    let values = params.trainable_to_vec();
    let n_beta = params.beta_mask.iter().filter(|&&m| m).count();
    let dim = match scope {
        BhhhScope::Beta => n_beta,
        BhhhScope::Full => values.len(),
    };
    let grads: Vec<Vec<f64>> = (0..x.n_rows())
        .into_par_iter()
        .map(|i| {
            let mut g = observation_gradient(params, x.row(i), x.labels()[i]);
            g.truncate(dim);
            g
        })
        .collect();
    let mut info = DMatrix::<f64>::zeros(dim, dim);
    for g in &grads {
        for a in 0..dim {
            if g[a] == 0.0 {
                continue;
            }
            for b in 0..=a {
                info[(a, b)] += g[a] * g[b];
            }
        }
    }
    info.fill_upper_triangle_with_lower_triangle();
    let mut se = standard_errors(&info);
    se.resize(values.len(), None);
    let mut out = estimates(names, values, se);
    if scope == BhhhScope::Beta {
        // β rows and the biases; the residual weights and w are omitted
        let bias_start = out.len() - params.coral_biases.len();
        let biases = out.split_off(bias_start);
        out.truncate(n_beta);
        out.extend(biases);
    }
    Ok(out)
}

/// Coefficient table plus goodness-of-fit figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model_kind: ModelKind,
    pub parameters: Vec<ParamEstimate>,
    /// Choice log-likelihood `Σ ln P(y_n)` on the training data.
    pub log_likelihood: f64,
    /// Training objective of the residual model (weighted binary
    /// cross-entropy), when applicable.
    pub training_loss: Option<f64>,
    pub n_params: usize,
    pub aic: f64,
    pub validation_accuracy: Option<f64>,
    pub n_observations: usize,
    pub n_validation: Option<usize>,
    /// Observations with clamped probabilities, over training and validation.
    pub clamped_observations: usize,
    pub caveats: Vec<String>,
}

/// Diagnostics on raw training data and optional raw validation data.
pub fn fit_report(model: &FittedModel, train: &Dataset, val: Option<&Dataset>, scope: BhhhScope) -> Result<FitReport> {
    let ll = model_log_likelihood(model.as_model(), train)?;
    let mut clamped = ll.clamped;
    let mut caveats = Vec::new();
    let (parameters, training_loss) = match model {
        FittedModel::OrderedLogit(fit) => {
            caveats.extend(fit.warnings.iter().cloned());
            (ordered_logit_estimates(fit, train)?, None)
        }
        FittedModel::OrdinalReslogit(fit) => {
            caveats.push(BHHH_CAVEAT.to_owned());
            let x = to_model_space(fit, train)?;
            let loss = crate::reslogit::loss(&fit.params, &x)?;
            (reslogit_estimates(fit, train, scope)?, Some(loss))
        }
    };
    if ll.zero_probability > 0 {
        caveats.push(format!(
            "{} training observations have zero probability for their observed category",
            ll.zero_probability
        ));
    }
    let validation_accuracy = match val {
        Some(v) => {
            let x = to_model_space(model.as_model(), v)?;
            clamped += (0..x.n_rows())
                .filter(|&i| model.as_model().choice_probs(x.row(i)).clamped)
                .count();
            Some(accuracy(model.as_model(), v)?)
        }
        None => None,
    };
    if clamped > 0 {
        caveats.push(format!("{clamped} observations required probability clamping"));
    }
    let n_params = model.n_params();
    Ok(FitReport {
        model_kind: model.kind(),
        parameters,
        log_likelihood: ll.value,
        training_loss,
        n_params,
        aic: aic(ll.value, n_params),
        validation_accuracy,
        n_observations: train.n_rows(),
        n_validation: val.map(Dataset::n_rows),
        clamped_observations: clamped,
        caveats,
    })
}
