use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ochoice(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ochoice"))
        .args(args)
        .current_dir(dir)
        .env_remove("OCHOICE_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has a payload");
    serde_json::from_str(line).expect("last stderr line is JSON")
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// A temporary directory holding a simulated `data.csv`.
fn workspace(n: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let spec = format!(
        r#"{{"n_obs": {n}, "n_features": 3, "beta_true": [1.0, -0.8, 0.6], "deltas_true": [-0.5, 1.0],
            "binary_features": [2], "seed": 11}}"#
    );
    std::fs::write(dir.path().join("spec.json"), spec).unwrap();
    let out = ochoice(dir.path(), &["simulate", "--spec", "spec.json", "--out", "data.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

const QUICK: &[&str] = &["--layers", "2", "--max-epochs", "20", "--patience", "5"];

#[test]
fn unknown_flag_exits_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = ochoice(dir.path(), &["fit", "--no-such-flag", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage:"));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["code"], "usage");
    assert!(err["error"]["message"].as_str().unwrap().contains("--no-such-flag"));
}

#[test]
fn help_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = ochoice(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["simulate", "discretize", "fit", "evaluate", "analyze"] {
        assert!(text.contains(sub));
    }
}

#[test]
fn absurd_learning_rate_is_a_numerical_failure() {
    let dir = workspace(400);
    let out = ochoice(
        dir.path(),
        &["fit", "--model", "reslogit", "--train", "data.csv", "--learning-rate", "1e300", "--out", "m.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["code"], "divergence");
    assert!(err["error"]["epoch"].as_u64().unwrap() >= 1);
    assert!(!dir.path().join("m.json").exists());
    assert!(!dir.path().join("m.manifest.json").exists());
}

#[test]
fn missing_input_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = ochoice(dir.path(), &["fit", "--train", "absent.csv", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["code"], "missing_file");
}

#[test]
fn fit_writes_model_and_manifest() {
    let dir = workspace(600);
    let mut args = vec!["fit", "--model", "reslogit", "--train", "data.csv", "--seed", "4", "--out", "m.json"];
    args.extend_from_slice(QUICK);
    let out = ochoice(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = read_json(dir.path().join("m.json"));
    assert_eq!(model["kind"], "ordinal_reslogit");
    assert_eq!(model["schema_version"], 1);
    let manifest = read_json(dir.path().join("m.manifest.json"));
    assert_eq!(manifest["subcommand"], "fit");
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["determinism_mode"], "sequential");
    assert_eq!(manifest["outputs"], serde_json::json!(["m.json"]));
    assert_eq!(manifest["config"]["categories"], 3);
    assert_eq!(manifest["config"]["split_seed"], 4);
    assert_eq!(manifest["config"]["training"]["layers"], 2);
    assert_eq!(manifest["inputs"]["data.csv"].as_str().unwrap().len(), 64);
}

#[test]
fn flags_override_config_file() {
    let dir = workspace(400);
    std::fs::write(
        dir.path().join("fit.json"),
        r#"{"model": "reslogit", "train": "data.csv", "training": {"layers": 5, "max_epochs": 12, "early_stop_patience": 4, "seed": 9}}"#,
    )
    .unwrap();
    let out = ochoice(dir.path(), &["fit", "--config", "fit.json", "--layers", "1", "--out", "m.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(dir.path().join("m.manifest.json"));
    assert_eq!(manifest["config"]["training"]["layers"], 1);
    assert_eq!(manifest["config"]["training"]["max_epochs"], 12);
    assert_eq!(manifest["seed"], 9);
    assert!(manifest["inputs"].get("fit.json").is_some());
    let model = read_json(dir.path().join("m.json"));
    assert_eq!(model["params"]["residual_weights"].as_array().unwrap().len(), 1);
}

#[test]
fn fits_are_reproducible_across_thread_counts() {
    let dir = workspace(500);
    let mut bytes = Vec::new();
    for (i, threads) in ["1", "1", "4"].iter().enumerate() {
        let name = format!("m{i}.json");
        let mut args = vec!["fit", "--train", "data.csv", "--seed", "2", "--out", &name];
        args.extend_from_slice(QUICK);
        let out = Command::new(env!("CARGO_BIN_EXE_ochoice"))
            .args(&args)
            .current_dir(dir.path())
            .env("OCHOICE_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        bytes.push(std::fs::read(dir.path().join(&name)).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    assert_eq!(bytes[0], bytes[2]);
    let manifest = read_json(dir.path().join("m2.manifest.json"));
    assert_eq!(manifest["determinism_mode"], "parallel");
}

#[test]
fn invalid_thread_count_is_rejected() {
    let dir = workspace(100);
    let out = Command::new(env!("CARGO_BIN_EXE_ochoice"))
        .args(["fit", "--train", "data.csv", "--out", "m.json"])
        .current_dir(dir.path())
        .env("OCHOICE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ordered_logit_rejects_alternative_specific_mode() {
    let dir = workspace(300);
    let out = ochoice(
        dir.path(),
        &["fit", "--model", "ordered", "--train", "data.csv", "--mode", "alternative-specific", "--out", "m.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["code"], "invalid_config");
}

#[test]
fn evaluate_renders_table_and_reports() {
    let dir = workspace(800);
    let out = ochoice(dir.path(), &["fit", "--model", "ordered", "--train", "data.csv", "--out", "ol.json"]);
    assert!(out.status.success());
    let out = ochoice(
        dir.path(),
        &["evaluate", "--model", "ol.json", "--train", "data.csv", "--split", "0.7", "--out", "eval"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8_lossy(&out.stdout);
    for row in ["Log-likelihood", "AIC", "Validation accuracy", "t-statistics in parentheses"] {
        assert!(table.contains(row), "missing {row}");
    }
    let report = read_json(dir.path().join("eval/report.json"));
    assert_eq!(report["n_params"], 5);
    assert_eq!(report["n_observations"], 560);
    assert_eq!(report["n_validation"], 240);
    let coefficients = std::fs::read_to_string(dir.path().join("eval/coefficients.csv")).unwrap();
    assert_eq!(coefficients.lines().count(), 6);
    let manifest = read_json(dir.path().join("eval/manifest.json"));
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn analyze_emits_requested_outputs() {
    let dir = workspace(800);
    assert!(ochoice(dir.path(), &["fit", "--model", "ordered", "--train", "data.csv", "--out", "ol.json"])
        .status
        .success());
    let out = ochoice(
        dir.path(),
        &[
            "analyze", "--model", "ol.json", "--data", "data.csv", "--market-share", "--substitution",
            "x1=-2:2:11", "--elasticity", "x2", "--binary-effect", "x3", "--representatives", "1,2,3",
            "--out", "econ",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let econ = dir.path().join("econ");
    for f in [
        "analysis.json",
        "market_shares.csv",
        "substitution_x1.csv",
        "substitution_x1.svg",
        "crossings.csv",
        "elasticities.csv",
        "binary_effects.csv",
        "manifest.json",
    ] {
        assert!(econ.join(f).exists(), "missing {f}");
    }
    let analysis = read_json(econ.join("analysis.json"));
    assert_eq!(analysis["market_shares"]["mode"], "hard");
    let change: f64 = analysis["binary_effects"][0]["mean_change"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!(change.abs() < 1e-12);
    assert!(analysis["binary_effects"][0]["expected_value_change"].is_f64());
}

#[test]
fn svg_without_curves_is_rejected() {
    let dir = workspace(300);
    assert!(ochoice(dir.path(), &["fit", "--model", "ordered", "--train", "data.csv", "--out", "ol.json"])
        .status
        .success());
    let out = ochoice(
        dir.path(),
        &["analyze", "--model", "ol.json", "--data", "data.csv", "--format", "svg", "--out", "econ"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["code"], "not_curve_data");
    assert!(!dir.path().join("econ/manifest.json").exists());
}

#[test]
fn elasticity_of_binary_variable_is_rejected() {
    let dir = workspace(300);
    assert!(ochoice(dir.path(), &["fit", "--model", "ordered", "--train", "data.csv", "--out", "ol.json"])
        .status
        .success());
    let out = ochoice(
        dir.path(),
        &["analyze", "--model", "ol.json", "--data", "data.csv", "--elasticity", "x3", "--out", "econ"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["code"], "binary_variable");
}

#[test]
fn discretize_with_jenks_and_manual_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("wait.csv"), "id,wait\na,1\nb,2\nc,10\nd,11\ne,30\n").unwrap();
    let out = ochoice(
        dir.path(),
        &["discretize", "--input", "wait.csv", "--column", "wait", "--classes", "2", "--out", "labeled.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let breaks = read_json(dir.path().join("labeled.breaks.json"));
    assert_eq!(breaks["thresholds"], serde_json::json!([11.0]));
    assert_eq!(breaks["category_counts"], serde_json::json!([4, 1]));
    let labeled = std::fs::read_to_string(dir.path().join("labeled.csv")).unwrap();
    assert_eq!(labeled, "id,wait,y\na,1,1\nb,2,1\nc,10,1\nd,11,1\ne,30,2\n");

    let out = ochoice(
        dir.path(),
        &[
            "discretize", "--input", "wait.csv", "--column", "wait", "--thresholds", "5,20", "--label-column",
            "wait_cat", "--out", "manual.csv", "--breaks", "manual_breaks.json",
        ],
    );
    assert!(out.status.success());
    let breaks = read_json(dir.path().join("manual_breaks.json"));
    assert_eq!(breaks["category_counts"], serde_json::json!([2, 2, 1]));
    let manifest = read_json(dir.path().join("manual.manifest.json"));
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);

    let out = ochoice(
        dir.path(),
        &["discretize", "--input", "wait.csv", "--column", "wait", "--thresholds", "20,5", "--out", "bad.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["code"], "non_monotone_thresholds");
}

#[test]
fn named_labels_through_label_map() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x,level\n");
    for i in 0..60 {
        let x = i as f64 / 10.0;
        let level = ["low", "medium", "high"][(i * 7 % 60) / 20];
        csv.push_str(&format!("{x},{level}\n"));
    }
    std::fs::write(dir.path().join("named.csv"), csv).unwrap();
    std::fs::write(dir.path().join("labels.json"), r#"{"low": 1, "medium": 2, "high": 3}"#).unwrap();
    let out = ochoice(
        dir.path(),
        &[
            "fit", "--model", "ordered", "--train", "named.csv", "--label-column", "level", "--label-map",
            "labels.json", "--out", "m.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(dir.path().join("m.manifest.json"));
    assert_eq!(manifest["config"]["categories"], 3);
    assert!(manifest["inputs"].get("labels.json").is_some());
}
