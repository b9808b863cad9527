//! Staged outputs, atomic writes, run manifests and error payloads.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ochoice::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    /// SHA-256 of every input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub duration_seconds: f64,
    pub determinism_mode: String,
    pub threads: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Collects inputs and outputs of a run; nothing touches the filesystem
/// until [`Run::finish`].
pub struct Run {
    subcommand: &'static str,
    started: Instant,
    threads: usize,
    inputs: BTreeMap<String, String>,
    staged: Vec<(PathBuf, Vec<u8>)>,
}

impl Run {
    pub fn new(subcommand: &'static str, threads: usize) -> Self {
        Self {
            subcommand,
            started: Instant::now(),
            threads,
            inputs: BTreeMap::new(),
            staged: Vec::new(),
        }
    }

    /// Hash an input file; fails if it does not exist.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let bytes = std::fs::read(path)?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn stage(&mut self, path: PathBuf, contents: impl Into<Vec<u8>>) {
        self.staged.push((path, contents.into()));
    }

    /// Write every staged output and then the manifest.
    pub fn finish(self, manifest_path: &Path, config: &impl Serialize, seed: Option<u64>) -> Result<RunManifest> {
        let mut outputs = Vec::with_capacity(self.staged.len());
        for (path, contents) in &self.staged {
            write_atomic(path, contents)?;
            outputs.push(path.display().to_string());
        }
        let manifest = RunManifest {
            subcommand: self.subcommand.to_owned(),
            config: serde_json::to_value(config)?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            inputs: self.inputs,
            outputs,
            duration_seconds: self.started.elapsed().as_secs_f64(),
            determinism_mode: if self.threads == 1 { "sequential" } else { "parallel" }.to_owned(),
            threads: self.threads,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(manifest_path, text.as_bytes())?;
        Ok(manifest)
    }
}

/// `model.json` -> `model.manifest.json`.
pub fn sibling_manifest(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

pub fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

fn error_code(err: &Error) -> &'static str {
    match err {
        Error::MissingFile(_) => "missing_file",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
        Error::NonNumeric { .. } => "non_numeric",
        Error::MissingValue { .. } => "missing_value",
        Error::LabelOutOfRange { .. } => "label_out_of_range",
        Error::EmptyDataset => "empty_dataset",
        Error::MissingCategory(_) => "missing_category",
        Error::UnknownColumn(_) => "unknown_column",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::NonFinite { .. } => "non_finite",
        Error::EmptyPartition { .. } => "empty_partition",
        Error::ZeroVariance(_) => "zero_variance",
        Error::TooFewDistinct { .. } => "too_few_distinct",
        Error::TooLarge { .. } => "too_large",
        Error::NonMonotoneThresholds => "non_monotone_thresholds",
        Error::NotBinary(_) => "not_binary",
        Error::BinaryVariable(_) => "binary_variable",
        Error::InvalidConfig(_) => "invalid_config",
        Error::Divergence { .. } => "divergence",
        Error::NonFiniteLikelihood { .. } => "non_finite_likelihood",
        Error::NotCurveData => "not_curve_data",
    }
}

/// Machine-readable error object for stderr.
pub fn error_payload(err: &Error) -> Value {
    let mut body = json!({
        "code": error_code(err),
        "exit_code": exit_code(err),
        "message": err.to_string(),
    });
    let details = match err {
        Error::Divergence { epoch, batch } => json!({ "epoch": epoch, "batch": batch }),
        Error::NonFiniteLikelihood { iteration } => json!({ "iteration": iteration }),
        Error::NonFinite { context, index } => json!({ "context": context, "index": index }),
        Error::MissingValue { row, column } => json!({ "row": row, "column": column }),
        Error::NonNumeric { row, column, value } => json!({ "row": row, "column": column, "value": value }),
        Error::LabelOutOfRange { row, label, k } => json!({ "row": row, "label": label, "categories": k }),
        Error::MissingFile(p) => json!({ "path": p }),
        Error::UnknownColumn(c) | Error::NotBinary(c) | Error::BinaryVariable(c) | Error::ZeroVariance(c) => {
            json!({ "column": c })
        }
        _ => Value::Null,
    };
    if let Value::Object(map) = details {
        body.as_object_mut().expect("object").extend(map);
    }
    json!({ "error": body })
}

pub fn usage_payload(message: &str) -> Value {
    json!({ "error": { "code": "usage", "exit_code": EXIT_VALIDATION, "message": message } })
}
