use std::fmt::Write as _;

use misclass_cli::commands::{self, ExperimentRequest, Overrides};
use misclass_cli::ReportBundle;

fn run(name: &str, iterations: Option<usize>, replicates: Option<usize>) -> ReportBundle {
    let request = ExperimentRequest {
        name: name.into(),
        replicates,
        ..ExperimentRequest::default()
    };
    let overrides = Overrides {
        iterations,
        seed: Some(42),
        ..Overrides::default()
    };
    commands::experiment(&request, &overrides).unwrap().report
}

fn mean(report: &ReportBundle, variant: &str, coefficient: &str) -> f64 {
    report.model(variant, 0).unwrap().coefficient(coefficient).unwrap().mean
}

#[test]
fn linear_study_adjusted_interval_covers_the_truth() {
    let report = run("linear", Some(20_000), Some(1));
    let adjusted = report.model("adjusted", 0).unwrap().coefficient("w").unwrap();
    assert!(adjusted.lo95 <= 1.0 && 1.0 <= adjusted.hi95, "{adjusted:?}");
    assert!(mean(&report, "naive", "w") < adjusted.mean);
    assert!(report.model("true-covariate", 0).is_some());
}

#[test]
fn hsv_differential_adjustment_is_larger() {
    let report = run("hsv", Some(100_000), None);
    let naive = mean(&report, "naive", "w");
    let differential = (mean(&report, "differential", "w") - naive).abs();
    let nondifferential = (mean(&report, "nondifferential", "w") - naive).abs();
    assert!(differential > nondifferential, "{differential} vs {nondifferential}");
    let details = report.details.as_ref().unwrap();
    assert_eq!(details["validation_estimates"]["y=1"]["matrix"][0][0].as_f64().map(|v| (v * 100.0).round()), Some(81.0));
}

#[test]
fn response_study_reports_every_variant() {
    let report = run("response", None, None);
    let variants: Vec<&str> = report.models.iter().map(|m| m.variant.as_str()).collect();
    assert_eq!(variants, ["naive", "adjusted", "grid", "true-response"]);
    let naive = mean(&report, "naive", "p_y");
    let adjusted = mean(&report, "adjusted", "p_y");
    assert!((naive - 0.185).abs() < 0.03, "{naive}");
    assert!((adjusted - 0.10).abs() < 0.04, "{adjusted}");
    let width = |variant: &str| {
        let c = report.model(variant, 0).unwrap().coefficient("p_y").unwrap();
        c.hi95 - c.lo95
    };
    assert!(width("grid") > width("adjusted"));
}

#[test]
fn dichotomised_study_runs_replicates_in_order() {
    let report = run("dichotomised", None, Some(2));
    for replicate in 0..2 {
        for variant in ["naive-binary", "naive", "adjusted", "true-covariate"] {
            assert!(report.model(variant, replicate).is_some(), "{variant} {replicate}");
        }
    }
    assert_eq!(report.metadata.replicates, 2);
}

/// Deterministic stand-in for the birth weight table: 189 rows with weight
/// in pounds, 40% reported smokers and a smoking deficit of 300 g. Each block
/// of five rows shares one weight, so reported smoking and weight are
/// uncorrelated in the sample.
fn birthweight_csv() -> tempfile::NamedTempFile {
    let mut text = String::from("low,age,lwt,smoke,bwt\n");
    for i in 0..189u32 {
        let lwt = 95.0 + f64::from((i / 5 * 37) % 110);
        let smoke = u8::from(i % 5 < 2);
        let noise = 450.0 * (f64::from(i) * 1.3).sin() + 200.0 * (f64::from(i) * 0.7).cos();
        let bwt = 2950.0 - 300.0 * f64::from(smoke) + 4.5 * (lwt - 130.0) + noise;
        writeln!(text, "{},{},{lwt},{smoke},{bwt:.0}", u8::from(bwt < 2500.0), 20 + i % 15).unwrap();
    }
    let file = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(file.path(), text).unwrap();
    file
}

fn birthweight(case: u8) -> ReportBundle {
    let data = birthweight_csv();
    let request = ExperimentRequest {
        name: "birthweight".into(),
        case: Some(case),
        data: Some(data.path().to_path_buf()),
        ..ExperimentRequest::default()
    };
    let overrides = Overrides {
        iterations: Some(20_000),
        seed: Some(42),
        ..Overrides::default()
    };
    commands::experiment(&request, &overrides).unwrap().report
}

fn weight_slope_shift(report: &ReportBundle) -> f64 {
    let naive = report.model("naive", 0).unwrap().coefficient("lwt").unwrap();
    let adjusted = report.model("adjusted", 0).unwrap().coefficient("lwt").unwrap();
    (adjusted.mean - naive.mean).abs() / adjusted.sd
}

#[test]
fn birthweight_independent_exposure_leaves_the_weight_slope_alone() {
    let report = birthweight(1);
    assert_eq!(report.experiment, "birthweight-case-1");
    assert!(weight_slope_shift(&report) < 0.1, "shift {}", weight_slope_shift(&report));
    let naive = mean(&report, "naive", "smoke");
    let adjusted = mean(&report, "adjusted", "smoke");
    assert!((adjusted - naive).abs() > 10.0, "{naive} vs {adjusted}");
}

#[test]
fn birthweight_weight_dependent_exposure_moves_the_weight_slope() {
    let independent = weight_slope_shift(&birthweight(1));
    let dependent = weight_slope_shift(&birthweight(2));
    assert!(dependent > 0.1 && dependent > 2.0 * independent, "{dependent} vs {independent}");
}

#[test]
fn birthweight_requires_data() {
    let request = ExperimentRequest {
        name: "birthweight".into(),
        ..ExperimentRequest::default()
    };
    let err = commands::experiment(&request, &Overrides::default()).unwrap_err();
    assert!(err.to_string().contains("--data"), "{err}");
}
