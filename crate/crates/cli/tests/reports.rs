use std::io::Write;

use misclass_cli::commands::{self, ExperimentRequest, Overrides};
use misclass_cli::data::write_dataset;
use misclass_cli::ModelConfig;

const CONFIG: &str = r#"{
    "family": "gaussian",
    "response": "y",
    "covariates": ["z"],
    "mc_covariate": "w",
    "truth_column": "x_true",
    "mc_model": {"variant": "uniform", "entries": [[0.9, 0.1], [0.2, 0.8]]},
    "exposure": {"alpha0": -0.5, "alpha_z": {"z": 0.25}},
    "sampler": {"iterations": 3000, "seed": 7}
}"#;

fn simulated_csv(scenario: &str, seed: u64, n: Option<usize>) -> tempfile::NamedTempFile {
    let data = commands::simulate(scenario, seed, n).unwrap();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    write_dataset(&data, &mut file).unwrap();
    file.flush().unwrap();
    file
}

fn without_wall_time(json: &str) -> serde_json::Value {
    let mut value: serde_json::Value = serde_json::from_str(json).unwrap();
    value["metadata"]
        .as_object_mut()
        .unwrap()
        .remove("wall_time_seconds")
        .expect("wall time is reported");
    value
}

#[test]
fn same_config_and_seed_give_identical_json() {
    let config = ModelConfig::from_json(CONFIG).unwrap();
    let file = simulated_csv("linear", 11, None);
    let run = |threads: Option<usize>| {
        misclass_core::parallel::with_threads(threads, || commands::fit(&config, file.path(), &Overrides::default()))
            .unwrap()
            .unwrap()
            .report
            .to_json()
            .unwrap()
    };
    let first = run(None);
    assert_eq!(without_wall_time(&first), without_wall_time(&run(None)));
    assert_eq!(without_wall_time(&first), without_wall_time(&run(Some(1))));
    assert_eq!(without_wall_time(&first), without_wall_time(&run(Some(3))));
}

#[test]
fn fit_report_has_every_variant_and_flags_adjusted_rows() {
    let config = ModelConfig::from_json(CONFIG).unwrap();
    let file = simulated_csv("linear", 12, None);
    let output = commands::fit(&config, file.path(), &Overrides::default()).unwrap();
    let report = &output.report;
    assert_eq!(report.schema_version, 1);
    let variants: Vec<&str> = report.models.iter().map(|m| m.variant.as_str()).collect();
    assert_eq!(variants, ["naive", "adjusted", "true-covariate"]);
    let adjusted = report.model("adjusted", 0).unwrap();
    assert!(adjusted.ess.is_some_and(|e| e >= 1.0));
    for c in &adjusted.coefficients {
        assert!(c.lo95 < c.mean && c.mean < c.hi95, "{c:?}");
        let [lo, hi] = c.mixture_interval.unwrap();
        assert!(lo < hi);
    }
    let mut csv = Vec::new();
    report.write_intervals(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("model_variant,replicate,coefficient,mean,lo95,hi95,ess,warnings\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
}

#[test]
fn traces_are_written_on_request() {
    let config = ModelConfig::from_json(CONFIG).unwrap();
    let file = simulated_csv("linear", 13, None);
    let overrides = Overrides {
        iterations: Some(50),
        trace: true,
        ..Overrides::default()
    };
    let output = commands::fit(&config, file.path(), &overrides).unwrap();
    let dir = tempfile::tempdir().unwrap();
    output.write_to(dir.path()).unwrap();
    let trace = std::fs::read_to_string(dir.path().join("trace-adjusted-0.csv")).unwrap();
    assert!(trace.starts_with("iteration,log_marginal_likelihood,normalized_weight,mean_intercept,mean_w,mean_z"));
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("intervals.csv").exists());
}

#[test]
fn oracle_matches_a_long_sampled_run() {
    let config = ModelConfig::from_json(CONFIG).unwrap();
    let file = simulated_csv("linear", 14, Some(9));
    let overrides = Overrides {
        iterations: Some(20_000),
        ..Overrides::default()
    };
    let output = commands::oracle(&config, file.path(), &overrides).unwrap();
    let exact = output.report.model("exact", 0).unwrap();
    let sampled = output.report.model("adjusted", 0).unwrap();
    for (e, s) in exact.coefficients.iter().zip(&sampled.coefficients) {
        assert!((e.mean - s.mean).abs() < 0.05, "{} {} vs {}", e.coefficient, e.mean, s.mean);
    }
    let gaps = &output.report.details.as_ref().unwrap()["coefficients"];
    assert_eq!(gaps.as_array().unwrap().len(), 3);
}

#[test]
fn oracle_rejects_large_data() {
    let config = ModelConfig::from_json(CONFIG).unwrap();
    let file = simulated_csv("linear", 15, Some(30));
    let err = commands::oracle(&config, file.path(), &Overrides::default()).unwrap_err();
    assert!(err.to_string().contains("enumeration limit"), "{err}");
}

#[test]
fn simulated_missing_pattern_is_reproducible() {
    let a = commands::simulate("missing", 5, None).unwrap();
    let b = commands::simulate("missing", 5, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.missing_count(), 20);
    let mut csv = Vec::new();
    write_dataset(&a, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("y,w,z,x_true\n"));
    assert_eq!(text.lines().filter(|l| l.split(',').nth(1) == Some("")).count(), 20);
}

#[test]
fn unknown_experiment_and_stray_case_are_rejected() {
    let request = ExperimentRequest {
        name: "sim-6".into(),
        ..ExperimentRequest::default()
    };
    assert!(commands::experiment(&request, &Overrides::default()).is_err());
    let request = ExperimentRequest {
        name: "hsv".into(),
        case: Some(2),
        ..ExperimentRequest::default()
    };
    assert!(commands::experiment(&request, &Overrides::default()).is_err());
}
