use std::path::Path;
use std::process::{Command, Output};

fn misclass(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_misclass"))
        .args(args)
        .current_dir(dir)
        .env_remove("MISCLASS_THREADS")
        .output()
        .expect("binary runs")
}

const CONFIG: &str = r#"{
    "family": "gaussian",
    "response": "y",
    "covariates": ["z"],
    "mc_covariate": "w",
    "mc_model": {"variant": "uniform", "entries": [[0.9, 0.1], [0.2, 0.8]]},
    "exposure": {"alpha0": -0.5, "alpha_z": {"z": 0.25}},
    "sampler": {"iterations": 500, "seed": 42},
    "experiment": {"quantile_levels": [0.05, 0.5, 0.95]}
}"#;

#[test]
fn simulate_then_fit_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let simulated = misclass(&["simulate", "linear", "--seed", "3", "--out", "data.csv"], dir.path());
    assert!(simulated.status.success(), "{}", String::from_utf8_lossy(&simulated.stderr));
    std::fs::write(dir.path().join("model.json"), CONFIG).unwrap();

    let fitted = misclass(
        &["fit", "--config", "model.json", "--data", "data.csv", "--threads", "2", "--out", "results", "--trace"],
        dir.path(),
    );
    assert!(fitted.status.success(), "{}", String::from_utf8_lossy(&fitted.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("results/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["metadata"]["threads"], 2);
    assert_eq!(summary["metadata"]["quantile_levels"][0], 0.05);
    assert_eq!(summary["models"][1]["variant"], "adjusted");
    assert!(summary["models"][1]["ess"].as_f64().unwrap() >= 1.0);
    assert!(dir.path().join("results/trace-adjusted-0.csv").exists());
    let intervals = std::fs::read_to_string(dir.path().join("results/intervals.csv")).unwrap();
    assert_eq!(intervals.lines().count(), 1 + 2 * 3);
}

#[test]
fn summary_goes_to_stdout_without_out() {
    let dir = tempfile::tempdir().unwrap();
    assert!(misclass(&["simulate", "linear", "--n", "12", "--out", "data.csv"], dir.path()).status.success());
    std::fs::write(dir.path().join("model.json"), CONFIG).unwrap();
    let output = misclass(
        &["oracle", "--config", "model.json", "--data", "data.csv", "--iterations", "0"],
        dir.path(),
    );
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(summary["experiment"], "oracle");
    assert_eq!(summary["models"].as_array().unwrap().len(), 1);
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("data.csv"), "y,w\n1,0\n2,1\n").unwrap();
    std::fs::write(dir.path().join("model.json"), CONFIG).unwrap();
    let missing_column = misclass(&["fit", "--config", "model.json", "--data", "data.csv"], dir.path());
    assert!(!missing_column.status.success());
    assert!(String::from_utf8_lossy(&missing_column.stderr).contains("missing column: z"));

    std::fs::write(dir.path().join("bad.json"), r#"{"family": "poisson"}"#).unwrap();
    let bad_config = misclass(&["fit", "--config", "bad.json", "--data", "data.csv"], dir.path());
    assert!(!bad_config.status.success());
    assert!(String::from_utf8_lossy(&bad_config.stderr).contains("configuration"));
}

#[test]
fn thread_count_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    assert!(misclass(&["simulate", "linear", "--n", "30", "--out", "data.csv"], dir.path()).status.success());
    std::fs::write(dir.path().join("model.json"), CONFIG).unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_misclass"))
        .args(["fit", "--config", "model.json", "--data", "data.csv"])
        .current_dir(dir.path())
        .env("MISCLASS_THREADS", "3")
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(summary["metadata"]["threads"], 3);
}
