//! Named simulation studies and the two embedded applications.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use misclass_core::datasets::{hsv_main_study, hsv_validation_counts};
use misclass_core::latent_gaussian::LatentGaussianModel;
use misclass_core::response_mc::SensSpecGrid;
use misclass_core::simulate::{
    simulate_covariate_mc, simulate_latent_gaussian, simulate_response_mc, CovariateNoise, CovariateSimParams,
};
use misclass_core::{
    estimate_mc_from_validation, estimate_pooled_mc, Dataset, ExposureModel, Family, GlmSpec, MisclassMatrix,
    MisclassModel, SamplerConfig, StreamFactory,
};
use rayon::prelude::*;
use serde_json::json;

use crate::analysis::{adjusted_fit, covariate_models, latent_models, naive_fit, response_models, CovariateAdjustment, Fitted};
use crate::config::{ExposureConfig, McModelConfig, ModelConfig, SamplerSection};
use crate::data::load_csv;
use crate::error::{CliError, Result};
use crate::report::ModelSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Linear model with a misclassified binary covariate, replicated.
    LinearMisclassification,
    /// Continuous exposure observed through a noisy dichotomised proxy.
    Dichotomised,
    /// Binary covariate missing completely at random.
    MissingCovariate,
    /// Misclassified binary response.
    ResponseMisclassification,
    /// Large-sample attenuation of the naive slope.
    Attenuation,
    Birthweight { case: u8 },
    Hsv,
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(name: &str) -> Result<Self> {
        Ok(match name {
            "linear" | "sim-5.1" => Experiment::LinearMisclassification,
            "dichotomised" | "sim-5.2" => Experiment::Dichotomised,
            "missing" | "sim-5.3" => Experiment::MissingCovariate,
            "response" | "sim-5.4" => Experiment::ResponseMisclassification,
            "attenuation" => Experiment::Attenuation,
            "birthweight" => Experiment::Birthweight { case: 1 },
            "hsv" => Experiment::Hsv,
            other => return Err(CliError::UnknownExperiment(other.to_string())),
        })
    }
}

impl Experiment {
    pub const NAMES: [&'static str; 7] = ["linear", "dichotomised", "missing", "response", "attenuation", "birthweight", "hsv"];

    pub fn name(&self) -> String {
        match self {
            Experiment::LinearMisclassification => "linear".into(),
            Experiment::Dichotomised => "dichotomised".into(),
            Experiment::MissingCovariate => "missing".into(),
            Experiment::ResponseMisclassification => "response".into(),
            Experiment::Attenuation => "attenuation".into(),
            Experiment::Birthweight { case } => format!("birthweight-case-{case}"),
            Experiment::Hsv => "hsv".into(),
        }
    }

    pub fn default_iterations(&self) -> usize {
        match self {
            Experiment::LinearMisclassification | Experiment::MissingCovariate => 20_000,
            Experiment::Attenuation => 10_000,
            Experiment::Birthweight { .. } | Experiment::Hsv => 50_000,
            // not sampled
            Experiment::Dichotomised | Experiment::ResponseMisclassification => 0,
        }
    }

    pub fn default_replicates(&self) -> usize {
        match self {
            Experiment::LinearMisclassification | Experiment::MissingCovariate => 10,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub iterations: usize,
    pub seed: u64,
    pub replicates: usize,
    pub quantile_levels: Vec<f64>,
    pub trace: bool,
    /// Birthweight CSV with columns `bwt`, `smoke` and `lwt`.
    pub data: Option<PathBuf>,
}

/// Per-replicate seeds for data simulation and for the sampler.
fn replicate_seeds(seed: u64, replicate: usize) -> (u64, u64) {
    let root = StreamFactory::new(seed).child("replicate", replicate as u64);
    (root.child("data", 0).seed(), root.child("sampler", 0).seed())
}

fn linear_spec() -> GlmSpec {
    GlmSpec::new(Family::Gaussian, "y").with_mc_covariate("w").with_covariates(["z"])
}

fn replicated<F>(replicates: usize, run: F) -> Result<Fitted>
where
    F: Fn(usize) -> Result<Fitted> + Sync + Send,
{
    let parts: Vec<Fitted> = (0..replicates).into_par_iter().map(run).collect::<Result<_>>()?;
    let mut all = Fitted::default();
    for part in parts {
        all.extend(part);
    }
    Ok(all)
}

fn simulated_covariate_study(options: &ExperimentOptions, noise: CovariateNoise, identity: bool) -> Result<Fitted> {
    let spec = linear_spec();
    let exposure = ExposureModel::logistic(-0.5, vec![0.25], vec!["z".into()])?;
    replicated(options.replicates, |r| {
        let (data_seed, sampler_seed) = replicate_seeds(options.seed, r);
        let mut params = CovariateSimParams::reference(data_seed);
        if identity {
            params.matrix = MisclassMatrix::identity();
        }
        let data = simulate_covariate_mc(&params, noise)?;
        let mc_model = MisclassModel::Uniform(params.matrix);
        let adjustment = CovariateAdjustment {
            mc_model: &mc_model,
            exposure: &exposure,
            sampler: SamplerConfig::new(options.iterations, sampler_seed)
                .with_quantile_levels(options.quantile_levels.clone()),
        };
        covariate_models(&data, &spec, &adjustment, r, options.trace)
    })
}

fn dichotomised(options: &ExperimentOptions) -> Result<Fitted> {
    let model = LatentGaussianModel {
        quantile_levels: options.quantile_levels.clone(),
        ..LatentGaussianModel::default()
    };
    replicated(options.replicates, |r| {
        let (data_seed, _) = replicate_seeds(options.seed, r);
        let sample = simulate_latent_gaussian(200, 1.0, 1.0, 1.0, 1.0, 1.0, data_seed)?;
        latent_models(&sample.dataset, &model, Some("w_c"), Some(&sample.true_exposure), r)
    })
}

fn response_study(options: &ExperimentOptions) -> Result<Fitted> {
    let spec = GlmSpec::new(Family::BernoulliSslogit { pi00: 0.90, pi11: 0.95 }, "y");
    let grid = SensSpecGrid::from_intervals((0.85, 0.95), (0.925, 0.975), 11)?;
    replicated(options.replicates, |r| {
        let (data_seed, _) = replicate_seeds(options.seed, r);
        let data = simulate_response_mc(1000, 0.10, 0.90, 0.95, data_seed)?;
        response_models(&data, &spec, Some(&grid), &options.quantile_levels, r)
    })
}

fn attenuation(options: &ExperimentOptions) -> Result<Fitted> {
    let spec = GlmSpec::new(Family::Gaussian, "y").with_mc_covariate("w");
    let exposure = ExposureModel::constant(0.5)?;
    replicated(options.replicates, |r| {
        let (data_seed, sampler_seed) = replicate_seeds(options.seed, r);
        let params = CovariateSimParams {
            n: 10_000,
            exposure_intercept: 0.0,
            exposure_slope: 0.0,
            matrix: MisclassMatrix::from_sens_spec(0.9, 0.9)?,
            intercept: 1.0,
            slope_x: 1.0,
            slope_z: None,
            noise_sd: 1.0,
            seed: data_seed,
        };
        let data = simulate_covariate_mc(&params, CovariateNoise::Misclassified)?;
        let mc_model = MisclassModel::Uniform(params.matrix);
        let adjustment = CovariateAdjustment {
            mc_model: &mc_model,
            exposure: &exposure,
            sampler: SamplerConfig::new(options.iterations, sampler_seed)
                .with_quantile_levels(options.quantile_levels.clone()),
        };
        covariate_models(&data, &spec, &adjustment, r, options.trace)
    })
}

/// Model configuration for the birth weight example; case 2 centres the
/// mother's weight so the average smoking probability stays near 0.4.
pub fn birthweight_config(case: u8, options: &ExperimentOptions) -> Result<ModelConfig> {
    let exposure = match case {
        1 => ExposureConfig {
            probability: Some(0.4),
            ..ExposureConfig::default()
        },
        2 => ExposureConfig {
            alpha0: Some(-0.4),
            alpha_z: BTreeMap::from([("lwt".to_string(), 0.02)]),
            center: true,
            ..ExposureConfig::default()
        },
        other => return Err(CliError::Config(format!("birthweight case must be 1 or 2, not {other}"))),
    };
    Ok(ModelConfig {
        family: crate::config::FamilyName::Gaussian,
        response: "bwt".into(),
        covariates: vec!["lwt".into()],
        mc_covariate: Some("smoke".into()),
        mc_model: Some(McModelConfig::Uniform {
            entries: [[0.95, 0.05], [0.2, 0.8]],
        }),
        exposure: Some(exposure),
        priors: Default::default(),
        sampler: SamplerSection {
            iterations: options.iterations,
            seed: options.seed,
        },
        sens_spec: None,
        latent: None,
        truth_column: None,
        experiment: Default::default(),
    })
}

fn birthweight(case: u8, options: &ExperimentOptions) -> Result<Fitted> {
    let path = options
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("the birthweight experiment needs --data (columns bwt, smoke, lwt)".into()))?;
    let config = birthweight_config(case, options)?;
    let data = load_csv(path, &config)?;
    let spec = config.glm_spec()?;
    let mc_model = config.mc_model()?;
    let exposure = config.exposure_model(&data)?;
    let adjustment = CovariateAdjustment {
        mc_model: &mc_model,
        exposure: &exposure,
        sampler: SamplerConfig::new(options.iterations, replicate_seeds(options.seed, 0).1)
            .with_quantile_levels(options.quantile_levels.clone()),
    };
    covariate_models(&data, &spec, &adjustment, 0, options.trace)
}

fn hsv(options: &ExperimentOptions) -> Result<(Fitted, serde_json::Value)> {
    let counts = hsv_validation_counts();
    let estimate = estimate_mc_from_validation(&counts)?;
    let (pooled, pooled_exposure) = estimate_pooled_mc(&counts)?;
    let data: Dataset = hsv_main_study()?;
    let spec = GlmSpec::new(Family::BernoulliLogit, "y").with_mc_covariate("w");
    let sampler = SamplerConfig::new(options.iterations, replicate_seeds(options.seed, 0).1)
        .with_quantile_levels(options.quantile_levels.clone());

    let mut fitted = Fitted::default();
    fitted.models.push(ModelSummary::from_conditional(
        "naive",
        0,
        &spec.coefficient_names(),
        &naive_fit(&data, &spec)?,
        &options.quantile_levels,
    ));
    let differential = MisclassModel::Differential(estimate.matrices.clone());
    let stratified = ExposureModel::stratified(estimate.exposure_probs.clone())?;
    let uniform = MisclassModel::Uniform(pooled);
    let constant = ExposureModel::constant(pooled_exposure)?;
    let runs = [
        ("differential", &differential, &stratified),
        ("nondifferential", &uniform, &constant),
    ];
    for (variant, mc_model, exposure) in runs {
        let adjustment = CovariateAdjustment {
            mc_model,
            exposure,
            sampler: sampler.clone(),
        };
        fitted.extend(adjusted_fit(&data, &spec, &adjustment, variant, 0, options.trace)?);
    }

    let tables: BTreeMap<String, serde_json::Value> = estimate
        .matrices
        .iter()
        .map(|(y, m)| {
            (
                format!("y={y}"),
                json!({"matrix": m.entries(), "exposure_probability": estimate.exposure_probs[y]}),
            )
        })
        .collect();
    let details = json!({
        "validation_estimates": tables,
        "pooled": {"matrix": pooled.entries(), "exposure_probability": pooled_exposure},
    });
    Ok((fitted, details))
}

/// Runs `experiment`, returning its fits and any extra report details.
pub fn run_named(experiment: Experiment, options: &ExperimentOptions) -> Result<(Fitted, Option<serde_json::Value>)> {
    if options.replicates == 0 {
        return Err(CliError::Config("replicates must be at least 1".into()));
    }
    let fitted = match experiment {
        Experiment::LinearMisclassification => {
            simulated_covariate_study(options, CovariateNoise::Misclassified, false)?
        }
        Experiment::MissingCovariate => {
            simulated_covariate_study(options, CovariateNoise::Missing { rate: 0.2 }, true)?
        }
        Experiment::Dichotomised => dichotomised(options)?,
        Experiment::ResponseMisclassification => response_study(options)?,
        Experiment::Attenuation => attenuation(options)?,
        Experiment::Birthweight { case } => birthweight(case, options)?,
        Experiment::Hsv => {
            let (fitted, details) = hsv(options)?;
            return Ok((fitted, Some(details)));
        }
    };
    Ok((fitted, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for name in Experiment::NAMES {
            let parsed: Experiment = name.parse().unwrap();
            assert!(parsed.name().starts_with(name));
        }
        assert_eq!("sim-5.3".parse::<Experiment>().unwrap(), Experiment::MissingCovariate);
        assert!("sim-9".parse::<Experiment>().is_err());
    }

    #[test]
    fn replicate_seeds_differ_between_replicates_and_roles() {
        let (a, b) = replicate_seeds(42, 0);
        let (c, _) = replicate_seeds(42, 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(replicate_seeds(42, 3), replicate_seeds(42, 3));
    }
}
