use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ochoice::econ::ShareMode;
use ochoice::evaluation::BhhhScope;
use ochoice::report::ReportFormat;
use ochoice::reslogit::EarlyStopMetric;
use ochoice::CoefficientMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "ochoice",
    version,
    about = "Ordered discrete choice estimation with ordered logit and Ordinal-ResLogit"
)]
pub struct Cli {
    /// Log verbosity: off, error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ordered-choice dataset.
    Simulate(SimulateArgs),
    /// Cut a continuous column into ordered categories.
    Discretize(DiscretizeArgs),
    /// Estimate an ordered logit or Ordinal-ResLogit model.
    Fit(FitArgs),
    /// Coefficient table, log-likelihood, AIC and validation accuracy.
    Evaluate(EvaluateArgs),
    /// Market shares, substitution curves, elasticities and binary effects.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Generator specification (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Override the number of observations.
    #[arg(long)]
    pub n_obs: Option<usize>,
    /// Override the seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "y")]
    pub label_column: String,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiscretizeArgs {
    /// Input CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Continuous column to discretize.
    #[arg(long)]
    pub column: String,
    /// Number of Jenks classes.
    #[arg(long, required_unless_present = "thresholds")]
    pub classes: Option<usize>,
    /// Manual thresholds, comma separated, replacing the Jenks search.
    #[arg(long, conflicts_with = "classes", value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Name of the appended label column.
    #[arg(long, default_value = "y")]
    pub label_column: String,
    /// Labeled CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Thresholds and category summary (JSON); defaults to `<out>.breaks.json`.
    #[arg(long)]
    pub breaks: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    #[value(alias = "ordered-logit")]
    Ordered,
    #[default]
    Reslogit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Generic,
    AlternativeSpecific,
}

impl From<ModeArg> for CoefficientMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Generic => CoefficientMode::Generic,
            ModeArg::AlternativeSpecific => CoefficientMode::AlternativeSpecific,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StopArg {
    Error,
    Loss,
}

impl From<StopArg> for EarlyStopMetric {
    fn from(s: StopArg) -> Self {
        match s {
            StopArg::Error => EarlyStopMetric::ValidationError,
            StopArg::Loss => EarlyStopMetric::ValidationLoss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Beta,
    Full,
}

impl From<ScopeArg> for BhhhScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Beta => BhhhScope::Beta,
            ScopeArg::Full => BhhhScope::Full,
        }
    }
}

/// Options for reading a labeled data file.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// JSON map from label names to ranks, e.g. {"low": 1, "high": 2}.
    #[arg(long)]
    pub label_map: Option<PathBuf>,
    /// Drop rows with missing cells instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// JSON configuration; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// Training CSV.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation CSV; without it the training file is split.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Training fraction when splitting.
    #[arg(long)]
    pub split: Option<f64>,
    /// Seed of the split; defaults to `--seed`.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Number of categories; inferred from the labels when omitted.
    #[arg(long)]
    pub categories: Option<usize>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub label_map: Option<PathBuf>,
    #[arg(long)]
    pub lenient: bool,
    /// Feature columns, comma separated; defaults to every non-label column.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Columns to z-score, comma separated, or `all`.
    #[arg(long, value_delimiter = ',')]
    pub standardize: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Coefficient fixed at zero, as `column:category`; repeatable.
    #[arg(long)]
    pub exclude: Vec<String>,
    /// Residual layers.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_enum)]
    pub early_stop: Option<StopArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Decision thresholds searched on validation data, as `lo:hi:step` or a
    /// single value.
    #[arg(long)]
    pub alpha_grid: Option<String>,
    /// Keep the biases ordered by construction.
    #[arg(long)]
    pub strict_bias: bool,
    /// Newton iterations for the ordered logit.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Model output (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Fitted model (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Training CSV used for the log-likelihood and standard errors.
    #[arg(long)]
    pub train: PathBuf,
    /// Validation CSV.
    #[arg(long, conflicts_with = "split")]
    pub val: Option<PathBuf>,
    /// Recreate the training/validation split used by `fit`.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long, requires = "split")]
    pub split_seed: Option<u64>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Parameters receiving BHHH standard errors in the residual model.
    #[arg(long, value_enum, default_value = "beta")]
    pub bhhh: ScopeArg,
    /// Report formats, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "json,text,csv")]
    pub format: Vec<ReportFormat>,
    /// Print the absolute log-likelihood in the text table.
    #[arg(long)]
    pub abs_ll: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// JSON configuration; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fitted model (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Data CSV in raw units.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub data_opts: DataArgs,
    /// Market shares, `hard` (predicted categories) or `soft` (mean probabilities).
    #[arg(long, num_args = 0..=1, default_missing_value = "hard")]
    pub market_share: Option<ShareMode>,
    /// Substitution curve as `VAR=lo:hi:points`; repeatable.
    #[arg(long)]
    pub substitution: Vec<String>,
    /// Continuous variable for aggregate elasticities; repeatable.
    #[arg(long)]
    pub elasticity: Vec<String>,
    /// 0/1 variable to flip; repeatable.
    #[arg(long)]
    pub binary_effect: Vec<String>,
    /// Representative value of each category, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "intervals")]
    pub representatives: Option<Vec<f64>>,
    /// Category intervals as `lower,t1,...,t(K-1)`; representatives are midpoints.
    #[arg(long, value_delimiter = ',')]
    pub intervals: Option<Vec<f64>>,
    /// Upper bound of the top category interval.
    #[arg(long, requires = "intervals")]
    pub upper: Option<f64>,
    /// Report formats, comma separated (json, csv, text, svg).
    #[arg(long, value_delimiter = ',')]
    pub format: Option<Vec<ReportFormat>>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
