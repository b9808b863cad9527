//! The interface shared by every fitted ordinal model, and its serialized form.

use serde::{Deserialize, Serialize};

use crate::data::{BoundScaling, Dataset, DesignSpec, ScalingParams};
use crate::error::{Error, Result};
use crate::ordered_logit::OrderedLogitFit;
use crate::reslogit::ReslogitFit;

pub const SCHEMA_VERSION: u32 = 1;

/// Category probabilities for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceProbs {
    pub probs: Vec<f64>,
    /// Raw differences were negative and had to be clamped.
    pub clamped: bool,
    /// Nothing survived clamping; `probs` is uniform.
    pub degenerate: bool,
}

/// A fitted model evaluated on model-space (already standardized) features.
pub trait ChoiceModel: Sync {
    fn feature_names(&self) -> &[String];
    fn scaling(&self) -> &ScalingParams;
    fn n_categories(&self) -> usize;
    fn choice_probs(&self, x: &[f64]) -> ChoiceProbs;
    fn predict(&self, x: &[f64]) -> u32;

    /// `ln P(y = category)` and whether clamping was needed.
    fn ln_choice_prob(&self, x: &[f64], category: u32) -> (f64, bool) {
        let cp = self.choice_probs(x);
        (cp.probs[category as usize - 1].ln(), cp.clamped)
    }

    /// `∂P_k/∂x_feature` for every category, when an analytic form exists.
    fn prob_gradient(&self, _x: &[f64], _feature: usize) -> Option<Vec<f64>> {
        None
    }
}

/// Project raw data onto a model's columns and apply its stored scaling.
pub fn to_model_space(model: &dyn ChoiceModel, data: &Dataset) -> Result<Dataset> {
    if data.n_categories() != model.n_categories() {
        return Err(Error::DimensionMismatch {
            what: "categories",
            expected: model.n_categories(),
            got: data.n_categories(),
        });
    }
    model.scaling().apply(&data.select_columns(model.feature_names())?)
}

/// Raw data projected onto a model's columns, ready for counterfactual edits.
pub struct ModelInputs<'a> {
    pub model: &'a dyn ChoiceModel,
    raw: Dataset,
    scaling: BoundScaling,
}

impl<'a> ModelInputs<'a> {
    pub fn new(model: &'a dyn ChoiceModel, data: &Dataset) -> Result<Self> {
        if data.n_categories() != model.n_categories() {
            return Err(Error::DimensionMismatch {
                what: "categories",
                expected: model.n_categories(),
                got: data.n_categories(),
            });
        }
        let raw = data.select_columns(model.feature_names())?;
        let scaling = model.scaling().bind(model.feature_names())?;
        Ok(Self {
            model,
            raw,
            scaling,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.raw.n_rows()
    }

    pub fn raw(&self) -> &Dataset {
        &self.raw
    }

    pub fn labels(&self) -> &[u32] {
        self.raw.labels()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.raw
            .column_index(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    }

    /// Model-space row `i`, optionally with one raw value replaced first.
    pub fn row_into(&self, i: usize, edit: Option<(usize, f64)>, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend_from_slice(self.raw.row(i));
        if let Some((j, v)) = edit {
            buf[j] = v;
        }
        self.scaling.transform(buf);
    }

    pub fn scaled_slope(&self, j: usize) -> f64 {
        self.scaling.slope(j)
    }

    pub fn probs(&self, i: usize, edit: Option<(usize, f64)>) -> ChoiceProbs {
        let mut buf = Vec::with_capacity(self.raw.n_features());
        self.row_into(i, edit, &mut buf);
        self.model.choice_probs(&buf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    OrderedLogit,
    OrdinalReslogit,
}

/// Either fitted model, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    OrderedLogit(OrderedLogitFit),
    OrdinalReslogit(ReslogitFit),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    #[serde(flatten)]
    model: FittedModel,
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::OrderedLogit(_) => ModelKind::OrderedLogit,
            FittedModel::OrdinalReslogit(_) => ModelKind::OrdinalReslogit,
        }
    }

    pub fn as_model(&self) -> &dyn ChoiceModel {
        match self {
            FittedModel::OrderedLogit(m) => m,
            FittedModel::OrdinalReslogit(m) => m,
        }
    }

    pub fn design(&self) -> &DesignSpec {
        match self {
            FittedModel::OrderedLogit(m) => &m.design,
            FittedModel::OrdinalReslogit(m) => &m.design,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            FittedModel::OrderedLogit(m) => m.n_params,
            FittedModel::OrdinalReslogit(m) => m.n_params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            schema_version: SCHEMA_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported model schema version {}",
                file.schema_version
            )));
        }
        Ok(file.model)
    }
}

/// Rank with the highest probability; ties go to the lower category.
pub fn argmax_rank(probs: &[f64]) -> u32 {
    let mut best = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = k;
        }
    }
    best as u32 + 1
}
