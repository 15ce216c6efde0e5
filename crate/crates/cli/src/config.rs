//! JSON model specification and its translation into engine types.

use std::collections::BTreeMap;
use std::path::Path;

use misclass_core::latent_gaussian::LatentGaussianModel;
use misclass_core::response_mc::SensSpecGrid;
use misclass_core::{Dataset, ExposureModel, Family, GlmSpec, MisclassMatrix, MisclassModel, NoisePrior};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_QUANTILE_LEVELS: [f64; 3] = [0.025, 0.5, 0.975];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Gaussian,
    BernoulliLogit,
    BernoulliProbit,
    BernoulliSslogit,
    LatentGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum McModelConfig {
    /// One matrix, `entries[truth][observed]`.
    Uniform { entries: [[f64; 2]; 2] },
    /// A matrix per response level, keyed `"0"` and `"1"`.
    Differential { per_response: BTreeMap<String, [[f64; 2]; 2]> },
    CovariateDependent { gamma: [f64; 4], z_column: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposureConfig {
    pub alpha0: Option<f64>,
    /// Slope per dataset column.
    #[serde(default)]
    pub alpha_z: BTreeMap<String, f64>,
    /// Subtract each column's sample mean before applying the slopes.
    #[serde(default)]
    pub center: bool,
    /// Constant `Pr(x = 1)`.
    pub probability: Option<f64>,
    /// `Pr(x = 1)` per response level.
    pub per_response: Option<BTreeMap<u8, f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    Fixed { variance: f64 },
    Nig { a: f64, b: f64 },
}

impl From<NoiseConfig> for NoisePrior {
    fn from(value: NoiseConfig) -> Self {
        match value {
            NoiseConfig::Fixed { variance } => NoisePrior::Fixed { variance },
            NoiseConfig::Nig { a, b } => NoisePrior::NormalInverseGamma { a, b },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default = "default_beta_variance")]
    pub beta_variance: OneOrMany,
    #[serde(default = "default_noise")]
    pub noise: NoiseConfig,
}

fn default_beta_variance() -> OneOrMany {
    OneOrMany::One(1000.0)
}

fn default_noise() -> NoiseConfig {
    NoiseConfig::Nig { a: 0.01, b: 0.01 }
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            beta_variance: default_beta_variance(),
            noise: default_noise(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensSpecConfig {
    pub specificity: f64,
    pub sensitivity: f64,
    /// 95% interval for the specificity; together with `sensitivity_interval`
    /// it switches on grid marginalisation.
    pub specificity_interval: Option<[f64; 2]>,
    pub sensitivity_interval: Option<[f64; 2]>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_resolution() -> usize {
    11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentConfig {
    #[serde(default = "one")]
    pub measurement_sd: f64,
    #[serde(default)]
    pub exposure_covariates: Vec<String>,
    /// Continuous error-prone column used for the naive comparison fit.
    pub continuous_proxy: Option<String>,
}

fn one() -> f64 {
    1.0
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            measurement_sd: 1.0,
            exposure_covariates: Vec::new(),
            continuous_proxy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "one_replicate")]
    pub replicates: usize,
    pub output_dir: Option<String>,
    #[serde(default)]
    pub emit_trace: bool,
    #[serde(default = "default_levels")]
    pub quantile_levels: Vec<f64>,
}

fn one_replicate() -> usize {
    1
}

fn default_levels() -> Vec<f64> {
    DEFAULT_QUANTILE_LEVELS.to_vec()
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            replicates: 1,
            output_dir: None,
            emit_trace: false,
            quantile_levels: default_levels(),
        }
    }
}

/// Full model specification document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyName,
    pub response: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub mc_covariate: Option<String>,
    pub mc_model: Option<McModelConfig>,
    pub exposure: Option<ExposureConfig>,
    #[serde(default)]
    pub priors: PriorConfig,
    pub sampler: SamplerSection,
    pub sens_spec: Option<SensSpecConfig>,
    pub latent: Option<LatentConfig>,
    /// Column holding the correctly classified covariate, when known.
    pub truth_column: Option<String>,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

fn response_level(key: &str) -> Result<u8> {
    match key {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(invalid(format!("response level keys must be \"0\" or \"1\", found {other:?}"))),
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| invalid(format!("cannot parse configuration: {e}")))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Structural checks that need no data.
    pub fn check(&self) -> Result<()> {
        let levels = &self.experiment.quantile_levels;
        if levels.is_empty() || levels.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(invalid("experiment.quantile_levels must be nonempty and inside (0, 1)"));
        }
        if self.experiment.replicates == 0 {
            return Err(invalid("experiment.replicates must be at least 1"));
        }
        match self.family {
            FamilyName::BernoulliSslogit => {
                if self.sens_spec.is_none() {
                    return Err(invalid("family bernoulli-sslogit needs a sens_spec block"));
                }
            }
            FamilyName::LatentGaussian => {
                if self.mc_covariate.is_none() {
                    return Err(invalid("family latent-gaussian needs mc_covariate (the dichotomised proxy)"));
                }
            }
            _ => {
                if self.mc_covariate.is_some() && self.mc_model.is_none() {
                    return Err(invalid("mc_covariate is set but mc_model is missing"));
                }
                if self.mc_covariate.is_some() && self.exposure.is_none() {
                    return Err(invalid("mc_covariate is set but the exposure block is missing"));
                }
                if self.sampler.iterations == 0 {
                    return Err(invalid("sampler.iterations must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// Every dataset column the configuration refers to, response first.
    pub fn referenced_columns(&self) -> Vec<String> {
        let mut names = vec![self.response.clone()];
        let mut push = |name: &String| {
            if !names.contains(name) {
                names.push(name.clone());
            }
        };
        if let Some(mc) = &self.mc_covariate {
            push(mc);
        }
        self.covariates.iter().for_each(&mut push);
        if let Some(exposure) = &self.exposure {
            exposure.alpha_z.keys().for_each(&mut push);
        }
        if let Some(McModelConfig::CovariateDependent { z_column, .. }) = &self.mc_model {
            push(z_column);
        }
        if let Some(latent) = &self.latent {
            latent.exposure_covariates.iter().for_each(&mut push);
            if let Some(proxy) = &latent.continuous_proxy {
                push(proxy);
            }
        }
        if let Some(truth) = &self.truth_column {
            push(truth);
        }
        names
    }

    pub fn glm_spec(&self) -> Result<GlmSpec> {
        let family = match self.family {
            FamilyName::Gaussian | FamilyName::LatentGaussian => Family::Gaussian,
            FamilyName::BernoulliLogit => Family::BernoulliLogit,
            FamilyName::BernoulliProbit => Family::BernoulliProbit,
            FamilyName::BernoulliSslogit => {
                let ss = self.sens_spec.as_ref().ok_or_else(|| invalid("missing sens_spec"))?;
                Family::BernoulliSslogit {
                    pi00: ss.specificity,
                    pi11: ss.sensitivity,
                }
            }
        };
        let mut spec = GlmSpec::new(family, self.response.clone())
            .with_covariates(self.covariates.iter().cloned())
            .with_noise_prior(self.priors.noise.into())
            .with_prior_variance(match &self.priors.beta_variance {
                OneOrMany::One(v) => vec![*v],
                OneOrMany::Many(v) => v.clone(),
            });
        if let Some(mc) = &self.mc_covariate {
            spec = spec.with_mc_covariate(mc.clone());
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn mc_model(&self) -> Result<MisclassModel> {
        let config = self.mc_model.as_ref().ok_or_else(|| invalid("mc_model block is missing"))?;
        Ok(match config {
            McModelConfig::Uniform { entries } => MisclassModel::Uniform(MisclassMatrix::new(*entries)?),
            McModelConfig::Differential { per_response } => {
                let mut matrices = BTreeMap::new();
                for (level, entries) in per_response {
                    matrices.insert(response_level(level)?, MisclassMatrix::new(*entries)?);
                }
                MisclassModel::Differential(matrices)
            }
            McModelConfig::CovariateDependent { gamma, z_column } => MisclassModel::CovariateDependent {
                gamma: *gamma,
                z_column: z_column.clone(),
            },
        })
    }

    /// Exposure model; centring uses the sample means of `dataset`.
    pub fn exposure_model(&self, dataset: &Dataset) -> Result<ExposureModel> {
        let config = self.exposure.as_ref().ok_or_else(|| invalid("exposure block is missing"))?;
        let kinds = usize::from(config.alpha0.is_some())
            + usize::from(config.probability.is_some())
            + usize::from(config.per_response.is_some());
        if kinds != 1 {
            return Err(invalid("exposure needs exactly one of alpha0, probability or per_response"));
        }
        if let Some(p) = config.probability {
            return Ok(ExposureModel::constant(p)?);
        }
        if let Some(per) = &config.per_response {
            return Ok(ExposureModel::stratified(per.clone())?);
        }
        let columns: Vec<String> = config.alpha_z.keys().cloned().collect();
        let slopes: Vec<f64> = config.alpha_z.values().copied().collect();
        let model = ExposureModel::logistic(config.alpha0.unwrap_or_default(), slopes, columns.clone())?;
        if config.center {
            let centers = columns
                .iter()
                .map(|c| {
                    let v = dataset.column(c)?;
                    Ok(v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(model.with_centers(centers)?)
        } else {
            Ok(model)
        }
    }

    pub fn sens_spec_grid(&self) -> Result<Option<SensSpecGrid>> {
        let Some(ss) = &self.sens_spec else { return Ok(None) };
        match (ss.specificity_interval, ss.sensitivity_interval) {
            (Some(spec), Some(sens)) => Ok(Some(SensSpecGrid::from_intervals(
                (spec[0], spec[1]),
                (sens[0], sens[1]),
                ss.resolution,
            )?)),
            (None, None) => Ok(None),
            _ => Err(invalid("give both specificity_interval and sensitivity_interval, or neither")),
        }
    }

    pub fn latent_model(&self) -> LatentGaussianModel {
        let latent = self.latent.clone().unwrap_or_default();
        LatentGaussianModel {
            measurement_sd: latent.measurement_sd,
            response_covariates: self.covariates.clone(),
            exposure_covariates: latent.exposure_covariates,
            quantile_levels: self.experiment.quantile_levels.clone(),
            ..LatentGaussianModel::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "family": "gaussian",
        "response": "y",
        "covariates": ["z"],
        "mc_covariate": "w",
        "mc_model": {"variant": "uniform", "entries": [[0.9, 0.1], [0.2, 0.8]]},
        "exposure": {"alpha0": -0.5, "alpha_z": {"z": 0.25}},
        "sampler": {"iterations": 500, "seed": 42}
    }"#;

    #[test]
    fn parses_a_complete_document() {
        let config = ModelConfig::from_json(EXAMPLE).unwrap();
        assert_eq!(config.referenced_columns(), ["y", "w", "z"]);
        assert_eq!(config.experiment.quantile_levels, DEFAULT_QUANTILE_LEVELS);
        assert!(matches!(config.mc_model().unwrap(), MisclassModel::Uniform(_)));
        let spec = config.glm_spec().unwrap();
        assert_eq!(spec.coefficient_names(), ["intercept", "w", "z"]);
    }

    #[test]
    fn differential_keys_are_response_levels() {
        let text = EXAMPLE.replace(
            r#"{"variant": "uniform", "entries": [[0.9, 0.1], [0.2, 0.8]]}"#,
            r#"{"variant": "differential", "per_response": {"0": [[0.75, 0.25], [0.5, 0.5]], "1": [[0.81, 0.19], [0.22, 0.78]]}}"#,
        );
        let config = ModelConfig::from_json(&text).unwrap();
        match config.mc_model().unwrap() {
            MisclassModel::Differential(m) => assert_eq!(m.keys().copied().collect::<Vec<_>>(), [0, 1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_fields_and_incomplete_models() {
        assert!(ModelConfig::from_json(&EXAMPLE.replace("\"covariates\"", "\"covariate\"")).is_err());
        let no_exposure = EXAMPLE.replace(r#""exposure": {"alpha0": -0.5, "alpha_z": {"z": 0.25}},"#, "");
        let err = ModelConfig::from_json(&no_exposure).unwrap_err();
        assert!(err.to_string().contains("exposure"), "{err}");
        let bad_row = EXAMPLE.replace("[0.2, 0.8]", "[0.3, 0.8]");
        let config = ModelConfig::from_json(&bad_row).unwrap();
        assert!(config.mc_model().is_err());
    }
}
