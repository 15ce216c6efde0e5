//! Run reports: a versioned JSON summary plus a plot-ready CSV of intervals.

use std::io::Write;
use std::path::Path;

use misclass_core::latent_gaussian::LatentGaussianFit;
use misclass_core::mixture::{mixture_quantile, weighted_sum_quantile, Component};
use misclass_core::response_mc::{MergedPosterior, ProbabilitySummary};
use misclass_core::{ConditionalFit, EnumerationResult, Warning, WeightedPosterior};
use serde::Serialize;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Posterior summary of one coefficient or derived quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientSummary {
    pub coefficient: String,
    pub mean: f64,
    pub sd: f64,
    pub lo95: f64,
    pub hi95: f64,
    /// Quantiles at the run's `quantile_levels`.
    pub quantiles: Vec<f64>,
    /// Interval from the exact quantiles of the mixture posterior, reported
    /// next to the weighted-sum interval for sampled and enumerated fits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture_interval: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    /// `naive`, `adjusted`, `true-covariate`, or an experiment-specific label.
    pub variant: String,
    pub replicate: usize,
    pub coefficients: Vec<CoefficientSummary>,
    /// Effective sample size of an importance-sampled fit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub iterations: usize,
    pub replicates: usize,
    pub threads: Option<usize>,
    pub quantile_levels: Vec<f64>,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub experiment: String,
    pub metadata: RunMetadata,
    pub models: Vec<ModelSummary>,
    /// Free-form experiment details such as estimated validation tables.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

fn from_components(
    name: &str,
    mean: f64,
    sd: f64,
    components: &[Component],
    levels: &[f64],
) -> Result<CoefficientSummary> {
    Ok(CoefficientSummary {
        coefficient: name.to_string(),
        mean,
        sd,
        lo95: weighted_sum_quantile(components, 0.025),
        hi95: weighted_sum_quantile(components, 0.975),
        quantiles: levels.iter().map(|&a| weighted_sum_quantile(components, a)).collect(),
        mixture_interval: Some([mixture_quantile(components, 0.025)?, mixture_quantile(components, 0.975)?]),
    })
}

impl ModelSummary {
    pub fn from_conditional(
        variant: &str,
        replicate: usize,
        names: &[String],
        fit: &ConditionalFit,
        levels: &[f64],
    ) -> Self {
        let coefficients = names
            .iter()
            .zip(&fit.marginals)
            .map(|(name, marginal)| CoefficientSummary {
                coefficient: name.clone(),
                mean: marginal.mean(),
                sd: marginal.sd(),
                lo95: marginal.quantile(0.025),
                hi95: marginal.quantile(0.975),
                quantiles: levels.iter().map(|&a| marginal.quantile(a)).collect(),
                mixture_interval: None,
            })
            .collect();
        let mut warnings = Vec::new();
        if fit.diagnostics.ridge > 0.0 {
            warnings.push(Warning::Instability {
                ridge: fit.diagnostics.ridge,
                iterations: fit.iterations_used,
            });
        }
        Self {
            variant: variant.to_string(),
            replicate,
            coefficients,
            ess: None,
            warnings,
        }
    }

    pub fn from_weighted(variant: &str, replicate: usize, posterior: &WeightedPosterior, levels: &[f64]) -> Result<Self> {
        let coefficients = posterior
            .coefficient_names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                from_components(
                    name,
                    posterior.weighted_means[j],
                    posterior.weighted_sds[j],
                    &posterior.mixture(j)?,
                    levels,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            variant: variant.to_string(),
            replicate,
            coefficients,
            ess: Some(posterior.ess),
            warnings: posterior.warnings.clone(),
        })
    }

    pub fn from_enumeration(variant: &str, result: &EnumerationResult, levels: &[f64]) -> Result<Self> {
        let coefficients = result
            .coefficient_names
            .iter()
            .enumerate()
            .map(|(j, name)| from_components(name, result.means[j], result.sds[j], &result.mixture(j)?, levels))
            .collect::<Result<_>>()?;
        Ok(Self {
            variant: variant.to_string(),
            replicate: 0,
            coefficients,
            ess: None,
            warnings: Vec::new(),
        })
    }

    /// Latent Gaussian fits report exact mixture quantiles over the grid.
    pub fn from_latent(variant: &str, replicate: usize, fit: &LatentGaussianFit, levels: &[f64]) -> Result<Self> {
        let coefficients = fit
            .parameter_names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let components = fit.mixture(j);
                Ok(CoefficientSummary {
                    coefficient: name.clone(),
                    mean: fit.means[j],
                    sd: fit.sds[j],
                    lo95: mixture_quantile(&components, 0.025)?,
                    hi95: mixture_quantile(&components, 0.975)?,
                    quantiles: levels
                        .iter()
                        .map(|&a| mixture_quantile(&components, a))
                        .collect::<misclass_core::Result<_>>()?,
                    mixture_interval: None,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            variant: variant.to_string(),
            replicate,
            coefficients,
            ess: None,
            warnings: fit.warnings.clone(),
        })
    }

    pub fn from_probability(
        variant: &str,
        replicate: usize,
        name: &str,
        summary: &ProbabilitySummary,
        levels: &[f64],
    ) -> Result<Self> {
        let at = |alpha: f64| {
            summary
                .levels
                .iter()
                .position(|&l| l == alpha)
                .map(|k| summary.quantiles[k])
                .ok_or_else(|| CliError::Config(format!("probability summary lacks level {alpha}")))
        };
        Ok(Self {
            variant: variant.to_string(),
            replicate,
            coefficients: vec![CoefficientSummary {
                coefficient: name.to_string(),
                mean: summary.mean,
                sd: summary.sd,
                lo95: at(0.025)?,
                hi95: at(0.975)?,
                quantiles: levels.iter().map(|&a| at(a)).collect::<Result<_>>()?,
                mixture_interval: None,
            }],
            ess: None,
            warnings: Vec::new(),
        })
    }

    pub fn from_merged(
        variant: &str,
        replicate: usize,
        name: &str,
        merged: &MergedPosterior,
        levels: &[f64],
    ) -> Result<Self> {
        Ok(Self {
            variant: variant.to_string(),
            replicate,
            coefficients: vec![CoefficientSummary {
                coefficient: name.to_string(),
                mean: merged.mean,
                sd: merged.sd,
                lo95: merged.quantile(0.025)?,
                hi95: merged.quantile(0.975)?,
                quantiles: levels.iter().map(|&a| merged.quantile(a)).collect::<misclass_core::Result<_>>()?,
                mixture_interval: None,
            }],
            ess: None,
            warnings: merged.warnings.clone(),
        })
    }

    pub fn coefficient(&self, name: &str) -> Option<&CoefficientSummary> {
        self.coefficients.iter().find(|c| c.coefficient == name)
    }
}

impl ReportBundle {
    pub fn model(&self, variant: &str, replicate: usize) -> Option<&ModelSummary> {
        self.models
            .iter()
            .find(|m| m.variant == variant && m.replicate == replicate)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// Interval endpoints, one row per model, replicate and coefficient.
    pub fn write_intervals<W: Write>(&self, output: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(output);
        writer.write_record(["model_variant", "replicate", "coefficient", "mean", "lo95", "hi95", "ess", "warnings"])?;
        for model in &self.models {
            let ess = model.ess.map(|e| e.to_string()).unwrap_or_default();
            let warnings: Vec<&str> = model.warnings.iter().map(Warning::tag).collect();
            let warnings = warnings.join(";");
            for c in &model.coefficients {
                writer.write_record([
                    model.variant.as_str(),
                    &model.replicate.to_string(),
                    &c.coefficient,
                    &c.mean.to_string(),
                    &c.lo95.to_string(),
                    &c.hi95.to_string(),
                    &ess,
                    &warnings,
                ])?;
            }
        }
        writer.flush().map_err(|e| CliError::Csv(e.into()))
    }

    /// Writes `summary.json` and `intervals.csv` into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let summary = dir.join("summary.json");
        std::fs::write(&summary, self.to_json()?).map_err(|e| CliError::io(&summary, e))?;
        let intervals = dir.join("intervals.csv");
        let file = std::fs::File::create(&intervals).map_err(|e| CliError::io(&intervals, e))?;
        self.write_intervals(std::io::BufWriter::new(file))
    }
}
