//! Python bindings. Datasets cross the boundary as lists of rows; models and
//! reports as JSON strings.

use std::path::Path;

use ochoice::data::{load_csv, split, CoefficientMode, LoadOptions};
use ochoice::discretize::jenks_breaks;
use ochoice::econ::{self, ShareMode};
use ochoice::evaluation::{self, BhhhScope};
use ochoice::model::ModelInputs;
use ochoice::report::{fit_table, TableOptions};
use ochoice::synth::{self, GenSpec};
use ochoice::{reslogit, Dataset, DesignSpec, FittedModel, OrderedLogitOptions, TrainConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// Feature matrix with integer ranks `1..=n_categories`.
#[pyclass(name = "Dataset", module = "pyochoice", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<u32>, n_categories: usize) -> PyResult<Self> {
        let inner = Dataset::from_rows(feature_names, &rows, labels, n_categories).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, n_categories, label_column = "y"))]
    fn from_csv(path: &str, n_categories: usize, label_column: &str) -> PyResult<Self> {
        let loaded = load_csv(Path::new(path), &LoadOptions::new(label_column, n_categories)).map_err(py_err)?;
        Ok(Self { inner: loaded.dataset })
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<u32> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn n_categories(&self) -> usize {
        self.inner.n_categories()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_rows()).map(|i| self.inner.row(i).to_vec()).collect()
    }

    fn split(&self, train_fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (a, b) = split(&self.inner, train_fraction, seed).map_err(py_err)?;
        Ok((Self { inner: a }, Self { inner: b }))
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }
}

/// A fitted ordered logit or Ordinal-ResLogit model.
#[pyclass(name = "Model", module = "pyochoice", frozen)]
struct PyModel {
    inner: FittedModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: FittedModel::from_json(text).map_err(py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> String {
        serde_json::to_value(self.inner.kind()).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    /// Category probabilities for every row of raw data.
    fn predict_proba(&self, data: &PyDataset) -> PyResult<Vec<Vec<f64>>> {
        let inputs = ModelInputs::new(self.inner.as_model(), &data.inner).map_err(py_err)?;
        Ok((0..inputs.n_rows()).map(|i| inputs.probs(i, None).probs).collect())
    }

    fn predict(&self, data: &PyDataset) -> PyResult<Vec<u32>> {
        evaluation::predictions(self.inner.as_model(), &data.inner).map_err(py_err)
    }

    fn accuracy(&self, data: &PyDataset) -> PyResult<f64> {
        evaluation::accuracy(self.inner.as_model(), &data.inner).map_err(py_err)
    }

    fn log_likelihood(&self, data: &PyDataset) -> PyResult<f64> {
        Ok(evaluation::model_log_likelihood(self.inner.as_model(), &data.inner).map_err(py_err)?.value)
    }

    /// Fit report as JSON; `bhhh` is `"beta"` or `"full"`.
    #[pyo3(signature = (train, val = None, bhhh = "beta"))]
    fn report(&self, train: &PyDataset, val: Option<&PyDataset>, bhhh: &str) -> PyResult<String> {
        let scope = match bhhh {
            "beta" => BhhhScope::Beta,
            "full" => BhhhScope::Full,
            other => return Err(py_err(format!("unknown BHHH scope '{other}'"))),
        };
        let report = evaluation::fit_report(&self.inner, &train.inner, val.map(|v| &v.inner), scope).map_err(py_err)?;
        serde_json::to_string_pretty(&report).map_err(py_err)
    }

    /// Plain-text coefficient table.
    #[pyo3(signature = (train, val = None))]
    fn table(&self, train: &PyDataset, val: Option<&PyDataset>) -> PyResult<String> {
        let report =
            evaluation::fit_report(&self.inner, &train.inner, val.map(|v| &v.inner), BhhhScope::Beta).map_err(py_err)?;
        Ok(fit_table(&report, TableOptions::default()))
    }

    #[pyo3(signature = (data, mode = "hard"))]
    fn market_share(&self, data: &PyDataset, mode: &str) -> PyResult<Vec<f64>> {
        let mode: ShareMode = mode.parse().map_err(py_err)?;
        Ok(econ::market_share(self.inner.as_model(), &data.inner, mode).map_err(py_err)?.shares)
    }

    /// Aggregate elasticity of each category's probability.
    fn elasticity(&self, data: &PyDataset, variable: &str) -> PyResult<Vec<f64>> {
        Ok(econ::elasticity(self.inner.as_model(), &data.inner, variable).map_err(py_err)?.aggregate)
    }

    /// Mean change in category probabilities when a binary variable flips.
    fn binary_effect(&self, data: &PyDataset, variable: &str) -> PyResult<Vec<f64>> {
        Ok(econ::binary_effect(self.inner.as_model(), &data.inner, variable, None).map_err(py_err)?.mean_change)
    }

    /// Soft shares along a grid of values for one variable.
    fn substitution_curve(&self, data: &PyDataset, variable: &str, grid: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(econ::substitution_curve(self.inner.as_model(), &data.inner, variable, &grid).map_err(py_err)?.probs)
    }
}

fn design(data: &Dataset, standardize: Option<Vec<String>>, mode: &str) -> PyResult<DesignSpec> {
    let mode = match mode {
        "generic" => CoefficientMode::Generic,
        "alternative_specific" | "alternative-specific" => CoefficientMode::AlternativeSpecific,
        other => return Err(py_err(format!("unknown coefficient mode '{other}'"))),
    };
    Ok(DesignSpec::generic(data.feature_names().to_vec(), "y")
        .with_mode(mode)
        .with_standardized(standardize.unwrap_or_default()))
}

/// Maximum-likelihood ordered logit on every feature of `train`.
#[pyfunction]
#[pyo3(signature = (train, standardize = None))]
fn fit_ordered_logit(train: &PyDataset, standardize: Option<Vec<String>>) -> PyResult<PyModel> {
    let spec = design(&train.inner, standardize, "generic")?;
    let fit = ochoice::fit_ordered_logit(&train.inner, &spec, &OrderedLogitOptions::default()).map_err(py_err)?;
    Ok(PyModel { inner: FittedModel::OrderedLogit(fit) })
}

/// Ordinal-ResLogit; `config` is a JSON training configuration whose missing
/// fields take their defaults. The threshold α is chosen on `val`.
#[pyfunction]
#[pyo3(signature = (train, val, config = None, mode = "generic", standardize = None))]
fn fit_reslogit(
    train: &PyDataset,
    val: &PyDataset,
    config: Option<&str>,
    mode: &str,
    standardize: Option<Vec<String>>,
) -> PyResult<PyModel> {
    let config: TrainConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(py_err)?,
        None => TrainConfig::default(),
    };
    let spec = design(&train.inner, standardize, mode)?;
    let mut fit = reslogit::fit(&train.inner, &val.inner, &spec, &config).map_err(py_err)?;
    reslogit::select_alpha(&mut fit, &val.inner, &config.alpha_grid).map_err(py_err)?;
    Ok(PyModel { inner: FittedModel::OrdinalReslogit(fit) })
}

/// Synthetic data from a JSON generator specification.
#[pyfunction]
fn simulate(spec: &str) -> PyResult<PyDataset> {
    let spec: GenSpec = serde_json::from_str(spec).map_err(py_err)?;
    Ok(PyDataset { inner: synth::generate(&spec).map_err(py_err)? })
}

/// Optimal natural breaks: `(thresholds, within-class sum of squares)`.
#[pyfunction]
fn jenks(values: Vec<f64>, k: usize) -> PyResult<(Vec<f64>, Option<f64>)> {
    let breaks = jenks_breaks(&values, k).map_err(py_err)?;
    Ok((breaks.thresholds, breaks.objective))
}

#[pyfunction]
fn aic(log_likelihood: f64, n_params: usize) -> f64 {
    evaluation::aic(log_likelihood, n_params)
}

#[pymodule]
fn pyochoice(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit_ordered_logit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_reslogit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(jenks, m)?)?;
    m.add_function(wrap_pyfunction!(aic, m)?)?;
    Ok(())
}
