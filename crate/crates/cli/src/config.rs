//! Resolved configurations: JSON file values overridden by command-line flags.

use std::path::{Path, PathBuf};

use ochoice::econ::ShareMode;
use ochoice::report::ReportFormat;
use ochoice::reslogit::alpha_grid;
use ochoice::{CoefficientMode, Error, Exclusion, OrderedLogitOptions, Result, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::{AnalyzeArgs, FitArgs, ModelChoice};

pub const DEFAULT_SPLIT: f64 = 0.7;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub model: ModelChoice,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub split_fraction: f64,
    pub split_seed: Option<u64>,
    pub categories: Option<usize>,
    pub label_column: String,
    pub label_map: Option<PathBuf>,
    pub lenient: bool,
    pub features: Option<Vec<String>>,
    pub standardize: Vec<String>,
    pub coefficient_mode: CoefficientMode,
    pub exclusions: Vec<Exclusion>,
    pub training: TrainConfig,
    pub ordered_logit: OrderedLogitOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelChoice::default(),
            train: None,
            val: None,
            split_fraction: DEFAULT_SPLIT,
            split_seed: None,
            categories: None,
            label_column: "y".to_owned(),
            label_map: None,
            lenient: false,
            features: None,
            standardize: Vec::new(),
            coefficient_mode: CoefficientMode::Generic,
            exclusions: Vec::new(),
            training: TrainConfig::default(),
            ordered_logit: OrderedLogitOptions::default(),
        }
    }
}

/// `lo:hi:step`, or a single threshold.
pub fn parse_alpha_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| invalid(format!("bad alpha grid '{s}'")));
    match parts.as_slice() {
        [one] => Ok(vec![num(one)?]),
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if !(step > 0.0) || hi < lo {
                return Err(invalid(format!("bad alpha grid '{s}'")));
            }
            Ok(alpha_grid(lo, hi, step))
        }
        _ => Err(invalid(format!("alpha grid must be lo:hi:step, got '{s}'"))),
    }
}

/// `column:category`.
pub fn parse_exclusion(s: &str) -> Result<Exclusion> {
    let (column, category) = s
        .rsplit_once(':')
        .ok_or_else(|| invalid(format!("exclusion must be column:category, got '{s}'")))?;
    let category = category
        .parse()
        .map_err(|_| invalid(format!("bad category in exclusion '{s}'")))?;
    Ok(Exclusion { column: column.to_owned(), category })
}

impl FitConfig {
    pub fn resolve(args: &FitArgs) -> Result<Self> {
        let mut c: FitConfig = match &args.config {
            Some(p) => read_json(p)?,
            None => FitConfig::default(),
        };
        if let Some(m) = args.model {
            c.model = m;
        }
        if let Some(p) = &args.train {
            c.train = Some(p.clone());
        }
        if let Some(p) = &args.val {
            c.val = Some(p.clone());
        }
        if let Some(f) = args.split {
            c.split_fraction = f;
        }
        if let Some(s) = args.split_seed {
            c.split_seed = Some(s);
        }
        if let Some(k) = args.categories {
            c.categories = Some(k);
        }
        if let Some(l) = &args.label_column {
            c.label_column = l.clone();
        }
        if let Some(p) = &args.label_map {
            c.label_map = Some(p.clone());
        }
        c.lenient |= args.lenient;
        if let Some(f) = &args.features {
            c.features = Some(f.clone());
        }
        if let Some(s) = &args.standardize {
            c.standardize = s.clone();
        }
        if let Some(m) = args.mode {
            c.coefficient_mode = m.into();
        }
        if !args.exclude.is_empty() {
            c.exclusions = args.exclude.iter().map(|s| parse_exclusion(s)).collect::<Result<_>>()?;
        }
        let t = &mut c.training;
        if let Some(v) = args.layers {
            t.layers = v;
        }
        if let Some(v) = args.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = args.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = args.max_epochs {
            t.max_epochs = v;
        }
        if let Some(v) = args.patience {
            t.early_stop_patience = v;
        }
        if let Some(v) = args.early_stop {
            t.early_stop_metric = v.into();
        }
        if let Some(v) = args.seed {
            t.seed = v;
        }
        if let Some(g) = &args.alpha_grid {
            t.alpha_grid = parse_alpha_grid(g)?;
        }
        t.strict_bias_order |= args.strict_bias;
        if let Some(v) = args.max_iterations {
            c.ordered_logit.max_iterations = v;
        }
        if c.train.is_none() {
            return Err(invalid("a training file is required (--train or \"train\" in the config)"));
        }
        if !(c.split_fraction > 0.0 && c.split_fraction < 1.0) {
            return Err(invalid("split fraction must lie in (0, 1)"));
        }
        c.training.validate()?;
        Ok(c)
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.training.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub variable: String,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

/// `VAR=lo:hi:points`.
pub fn parse_curve(s: &str) -> Result<CurveSpec> {
    let bad = || invalid(format!("substitution must be VAR=lo:hi:points, got '{s}'"));
    let (variable, grid) = s.rsplit_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = grid.split(':').collect();
    let [lo, hi, points] = parts.as_slice() else {
        return Err(bad());
    };
    let spec = CurveSpec {
        variable: variable.to_owned(),
        lo: lo.trim().parse().map_err(|_| bad())?,
        hi: hi.trim().parse().map_err(|_| bad())?,
        points: points.trim().parse().map_err(|_| bad())?,
    };
    if spec.points == 0 || !(spec.hi >= spec.lo) {
        return Err(bad());
    }
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub label_map: Option<PathBuf>,
    pub lenient: bool,
    pub market_share: Option<ShareMode>,
    pub substitution: Vec<CurveSpec>,
    pub elasticity: Vec<String>,
    pub binary_effect: Vec<String>,
    pub representatives: Option<Vec<f64>>,
    pub intervals: Option<Vec<f64>>,
    pub upper: Option<f64>,
    pub formats: Vec<ReportFormat>,
    /// Whether SVG output was asked for explicitly.
    pub svg_required: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            model: None,
            data: None,
            label_map: None,
            lenient: false,
            market_share: None,
            substitution: Vec::new(),
            elasticity: Vec::new(),
            binary_effect: Vec::new(),
            representatives: None,
            intervals: None,
            upper: None,
            formats: vec![ReportFormat::Json, ReportFormat::Csv, ReportFormat::Svg],
            svg_required: false,
        }
    }
}

impl AnalyzeConfig {
    pub fn resolve(args: &AnalyzeArgs) -> Result<Self> {
        let mut c: AnalyzeConfig = match &args.config {
            Some(p) => read_json(p)?,
            None => AnalyzeConfig::default(),
        };
        if let Some(p) = &args.model {
            c.model = Some(p.clone());
        }
        if let Some(p) = &args.data {
            c.data = Some(p.clone());
        }
        if let Some(p) = &args.data_opts.label_map {
            c.label_map = Some(p.clone());
        }
        c.lenient |= args.data_opts.lenient;
        if let Some(m) = args.market_share {
            c.market_share = Some(m);
        }
        if !args.substitution.is_empty() {
            c.substitution = args.substitution.iter().map(|s| parse_curve(s)).collect::<Result<_>>()?;
        }
        if !args.elasticity.is_empty() {
            c.elasticity = args.elasticity.clone();
        }
        if !args.binary_effect.is_empty() {
            c.binary_effect = args.binary_effect.clone();
        }
        if let Some(r) = &args.representatives {
            c.representatives = Some(r.clone());
            c.intervals = None;
        }
        if let Some(i) = &args.intervals {
            c.intervals = Some(i.clone());
            c.representatives = None;
        }
        if let Some(u) = args.upper {
            c.upper = Some(u);
        }
        if let Some(f) = &args.format {
            c.formats = f.clone();
            c.svg_required = f.contains(&ReportFormat::Svg);
        }
        if c.model.is_none() || c.data.is_none() {
            return Err(invalid("a model and a data file are required (--model, --data)"));
        }
        if c.representatives.is_some() && c.intervals.is_some() {
            return Err(invalid("give either representatives or intervals, not both"));
        }
        let nothing = c.market_share.is_none()
            && c.substitution.is_empty()
            && c.elasticity.is_empty()
            && c.binary_effect.is_empty();
        if nothing {
            c.market_share = Some(ShareMode::Hard);
        }
        Ok(c)
    }
}
