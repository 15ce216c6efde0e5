use std::path::{Path, PathBuf};
use std::time::Instant;

use misclass_core::simulate::{
    simulate_covariate_mc, simulate_latent_gaussian, simulate_response_mc, CovariateNoise, CovariateSimParams,
};
use misclass_core::{enumerate_exact_posterior, exact_vs_is_distance, run_importance_sampling, Dataset, MisclassMatrix, SamplerConfig};

use crate::analysis::{fit_configured, Fitted, RunSettings};
use crate::config::{FamilyName, ModelConfig};
use crate::data::load_csv;
use crate::error::{CliError, Result};
use crate::experiments::{run_named, Experiment, ExperimentOptions};
use crate::report::{ModelSummary, ReportBundle, RunMetadata, SCHEMA_VERSION};

/// Largest dataset the exact enumeration accepts.
pub const ORACLE_MAX_N: usize = 14;

/// A finished run: the report and any per-draw traces.
#[derive(Debug)]
pub struct RunOutput {
    pub report: ReportBundle,
    pub traces: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    fn new(experiment: String, metadata: RunMetadata, fitted: Fitted, details: Option<serde_json::Value>) -> Self {
        Self {
            report: ReportBundle {
                schema_version: SCHEMA_VERSION,
                experiment,
                metadata,
                models: fitted.models,
                details,
            },
            traces: fitted.traces,
        }
    }

    /// Writes the report and traces into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        self.report.write_to(dir)?;
        for (stem, bytes) in &self.traces {
            let path = dir.join(format!("{stem}.csv"));
            std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub trace: bool,
}

fn metadata(seed: u64, iterations: usize, replicates: usize, threads: Option<usize>, levels: &[f64], start: Instant) -> RunMetadata {
    RunMetadata {
        seed,
        iterations,
        replicates,
        threads,
        quantile_levels: levels.to_vec(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    }
}

/// `fit`: configuration plus CSV to report.
pub fn fit(config: &ModelConfig, data: &Path, overrides: &Overrides) -> Result<RunOutput> {
    let start = Instant::now();
    let dataset = load_csv(data, config)?;
    let settings = RunSettings {
        iterations: overrides.iterations.unwrap_or(config.sampler.iterations),
        seed: overrides.seed.unwrap_or(config.sampler.seed),
        quantile_levels: config.experiment.quantile_levels.clone(),
        trace: overrides.trace || config.experiment.emit_trace,
    };
    let fitted = fit_configured(config, &dataset, &settings)?;
    let meta = metadata(
        settings.seed,
        settings.iterations,
        1,
        overrides.threads,
        &settings.quantile_levels,
        start,
    );
    Ok(RunOutput::new("fit".into(), meta, fitted, None))
}

/// `oracle`: exact posterior of a small Gaussian model, compared with a
/// sampled fit when `iterations` is positive.
pub fn oracle(config: &ModelConfig, data: &Path, overrides: &Overrides) -> Result<RunOutput> {
    let start = Instant::now();
    if config.family != FamilyName::Gaussian || config.mc_covariate.is_none() {
        return Err(CliError::Config(
            "the oracle needs family gaussian with an mc_covariate".into(),
        ));
    }
    let dataset = load_csv(data, config)?;
    let spec = config.glm_spec()?;
    let mc_model = config.mc_model()?;
    let exposure = config.exposure_model(&dataset)?;
    let levels = &config.experiment.quantile_levels;
    let exact = enumerate_exact_posterior(&dataset, &spec, &mc_model, &exposure, ORACLE_MAX_N)?;
    let mut fitted = Fitted::default();
    fitted.models.push(ModelSummary::from_enumeration("exact", &exact, levels)?);

    let iterations = overrides.iterations.unwrap_or(config.sampler.iterations);
    let seed = overrides.seed.unwrap_or(config.sampler.seed);
    let mut details = None;
    if iterations > 0 {
        let sampler = SamplerConfig::new(iterations, seed).with_quantile_levels(levels.clone());
        let sampled = run_importance_sampling(&dataset, &spec, &mc_model, &exposure, &sampler)?;
        fitted.models.push(ModelSummary::from_weighted("adjusted", 0, &sampled, levels)?);
        details = Some(serde_json::to_value(exact_vs_is_distance(&exact, &sampled)?)?);
    }
    let meta = metadata(seed, iterations, 1, overrides.threads, levels, start);
    Ok(RunOutput::new("oracle".into(), meta, fitted, details))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentRequest {
    pub name: String,
    pub case: Option<u8>,
    pub data: Option<PathBuf>,
    pub replicates: Option<usize>,
    pub quantile_levels: Option<Vec<f64>>,
}

pub const DEFAULT_SEED: u64 = 42;

/// `experiment`: one of the named studies.
pub fn experiment(request: &ExperimentRequest, overrides: &Overrides) -> Result<RunOutput> {
    let start = Instant::now();
    let mut kind: Experiment = request.name.parse()?;
    if let Experiment::Birthweight { case } = &mut kind {
        *case = request.case.unwrap_or(1);
    } else if request.case.is_some() {
        return Err(CliError::Config("--case only applies to the birthweight experiment".into()));
    }
    let options = ExperimentOptions {
        iterations: overrides.iterations.unwrap_or(kind.default_iterations()),
        seed: overrides.seed.unwrap_or(DEFAULT_SEED),
        replicates: request.replicates.unwrap_or(kind.default_replicates()),
        quantile_levels: request
            .quantile_levels
            .clone()
            .unwrap_or_else(|| crate::config::DEFAULT_QUANTILE_LEVELS.to_vec()),
        trace: overrides.trace,
        data: request.data.clone(),
    };
    let (fitted, details) = run_named(kind, &options)?;
    let meta = metadata(
        options.seed,
        options.iterations,
        options.replicates,
        overrides.threads,
        &options.quantile_levels,
        start,
    );
    Ok(RunOutput::new(kind.name(), meta, fitted, details))
}

/// `simulate`: a dataset from one of the simulation designs, truth included.
pub fn simulate(scenario: &str, seed: u64, n: Option<usize>) -> Result<Dataset> {
    let kind: Experiment = scenario.parse()?;
    let covariate = |identity: bool, noise: CovariateNoise| -> Result<Dataset> {
        let mut params = CovariateSimParams::reference(seed);
        if identity {
            params.matrix = MisclassMatrix::identity();
        }
        if let Some(n) = n {
            params.n = n;
        }
        Ok(simulate_covariate_mc(&params, noise)?)
    };
    match kind {
        Experiment::LinearMisclassification => covariate(false, CovariateNoise::Misclassified),
        Experiment::MissingCovariate => covariate(true, CovariateNoise::Missing { rate: 0.2 }),
        Experiment::Attenuation => {
            let params = CovariateSimParams {
                n: n.unwrap_or(10_000),
                exposure_intercept: 0.0,
                exposure_slope: 0.0,
                matrix: MisclassMatrix::from_sens_spec(0.9, 0.9)?,
                intercept: 1.0,
                slope_x: 1.0,
                slope_z: None,
                noise_sd: 1.0,
                seed,
            };
            Ok(simulate_covariate_mc(&params, CovariateNoise::Misclassified)?)
        }
        Experiment::Dichotomised => {
            let sample = simulate_latent_gaussian(n.unwrap_or(200), 1.0, 1.0, 1.0, 1.0, 1.0, seed)?;
            Ok(sample.dataset.with_column("x_c", sample.true_exposure)?)
        }
        Experiment::ResponseMisclassification => Ok(simulate_response_mc(n.unwrap_or(1000), 0.10, 0.90, 0.95, seed)?),
        Experiment::Birthweight { .. } | Experiment::Hsv => Err(CliError::Config(format!(
            "{scenario} is an application, not a simulation design"
        ))),
    }
}
