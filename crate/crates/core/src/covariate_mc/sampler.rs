use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use super::conditional::{is_fit_failure, pack, ConditionalModel, PackedConfig};
use super::proposal::{draw_bernoulli, proposal_probabilities};
use super::weights::normalize_weights;
use crate::error::{Error, Result};
use crate::glm::ConditionalFit;
use crate::mixture::{self, Component};
use crate::model::{Dataset, ExposureModel, GlmSpec, MisclassModel};
use crate::parallel::with_threads;
use crate::rng::StreamFactory;
use crate::warning::Warning;

pub const DEFAULT_QUANTILE_LEVELS: [f64; 3] = [0.025, 0.5, 0.975];

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub seed: u64,
    pub quantile_levels: Vec<f64>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Largest tolerated fraction of failed conditional fits.
    pub max_failure_fraction: f64,
    /// A warning is raised when the ESS falls below this fraction of the draws.
    pub low_ess_fraction: f64,
}

impl SamplerConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            seed,
            quantile_levels: DEFAULT_QUANTILE_LEVELS.to_vec(),
            threads: None,
            max_failure_fraction: 0.01,
            low_ess_fraction: 0.01,
        }
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn with_quantile_levels(mut self, levels: Vec<f64>) -> Self {
        self.quantile_levels = levels;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("at least one iteration is required".into()));
        }
        if let Some(&a) = self.quantile_levels.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidArgument(format!("quantile level {a} outside (0, 1)")));
        }
        Ok(())
    }
}

/// A distinct latent configuration visited by the sampler, with its fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorComponent {
    /// Normalised weight of the configuration (all its draws together).
    pub weight: f64,
    pub draw_count: usize,
    pub first_iteration: usize,
    pub fit: ConditionalFit,
}

/// A single draw with everything needed to inspect it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDraw {
    pub iteration: usize,
    pub x: Vec<u8>,
    pub log_marginal_likelihood: f64,
    pub fit: ConditionalFit,
}

/// Importance-sampling approximation of the posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPosterior {
    pub coefficient_names: Vec<String>,
    pub quantile_levels: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
    /// Weight of every draw in iteration order; zero for dropped draws.
    pub normalized_weights: Vec<f64>,
    /// Log evidence of every draw; `-inf` for dropped draws.
    pub log_marginal_likelihoods: Vec<f64>,
    /// Component index of every draw; `None` for dropped draws.
    pub draw_components: Vec<Option<usize>>,
    pub ess: f64,
    pub weighted_means: Vec<f64>,
    /// Mixture standard deviations (law of total variance).
    pub weighted_sds: Vec<f64>,
    /// Weighted sums of conditional quantiles, `[coefficient][level]`.
    pub weighted_quantiles: Vec<Vec<f64>>,
    pub components: Vec<PosteriorComponent>,
    pub dropped_draws: usize,
    pub warnings: Vec<Warning>,
}

impl WeightedPosterior {
    pub fn coefficient_index(&self, name: &str) -> Option<usize> {
        self.coefficient_names.iter().position(|n| n == name)
    }

    pub fn mixture(&self, coefficient: usize) -> Result<Vec<Component>> {
        if coefficient >= self.coefficient_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient {coefficient} of {}",
                self.coefficient_names.len()
            )));
        }
        Ok(self
            .components
            .iter()
            .map(|c| Component {
                weight: c.weight,
                marginal: c.fit.marginals[coefficient],
            })
            .collect())
    }

    /// Weighted-sum quantile at a level that was not precomputed.
    pub fn weighted_quantile(&self, coefficient: usize, alpha: f64) -> Result<f64> {
        Ok(mixture::weighted_sum_quantile(&self.mixture(coefficient)?, alpha))
    }

    /// Writes one CSV row per retained draw.
    pub fn write_trace<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::InvalidArgument(format!("writing trace: {e}"));
        let mut header = vec![
            "iteration".to_string(),
            "log_marginal_likelihood".to_string(),
            "normalized_weight".to_string(),
        ];
        header.extend(self.coefficient_names.iter().map(|n| format!("mean_{n}")));
        out.write_record(&header).map_err(io)?;
        for (j, component) in self.draw_components.iter().enumerate() {
            let Some(k) = component else { continue };
            let mut record = vec![
                j.to_string(),
                self.log_marginal_likelihoods[j].to_string(),
                self.normalized_weights[j].to_string(),
            ];
            record.extend(self.components[*k].fit.means.iter().map(f64::to_string));
            out.write_record(&record).map_err(io)?;
        }
        out.flush().map_err(|e| Error::InvalidArgument(format!("writing trace: {e}")))?;
        Ok(())
    }
}

/// Exact quantile of the weighted mixture of conditional posteriors.
pub fn aggregate_mixture_quantile(posterior: &WeightedPosterior, coefficient: usize, alpha: f64) -> Result<f64> {
    mixture::mixture_quantile(&posterior.mixture(coefficient)?, alpha)
}

/// Reproduces draw `iteration` of a run with the given seed.
pub fn latent_draw(
    dataset: &Dataset,
    spec: &GlmSpec,
    mc_model: &MisclassModel,
    exposure: &ExposureModel,
    seed: u64,
    iteration: usize,
) -> Result<LatentDraw> {
    let probabilities = proposal_probabilities(dataset, mc_model, exposure)?;
    let x = draw_bernoulli(&probabilities, &mut StreamFactory::new(seed).stream(iteration as u64));
    let fit = ConditionalModel::new(dataset, spec)?.fit(&x)?;
    Ok(LatentDraw {
        iteration,
        x,
        log_marginal_likelihood: fit.log_marginal_likelihood,
        fit,
    })
}

/// Importance sampling over the latent covariate with evidence weights.
///
/// Draw `j` uses substream `j` of `seed`. Identical configurations are
/// fitted once; the per-draw weights are unchanged by this.
pub fn run_importance_sampling(
    dataset: &Dataset,
    spec: &GlmSpec,
    mc_model: &MisclassModel,
    exposure: &ExposureModel,
    config: &SamplerConfig,
) -> Result<WeightedPosterior> {
    config.validate()?;
    let model = ConditionalModel::new(dataset, spec)?;
    let probabilities = proposal_probabilities(dataset, mc_model, exposure)?;
    let streams = StreamFactory::new(config.seed);
    let m = config.iterations;

    let (draws, unique, fits) = with_threads(config.threads, || -> Result<_> {
        let draws: Vec<PackedConfig> = (0..m)
            .into_par_iter()
            .map(|j| pack(&draw_bernoulli(&probabilities, &mut streams.stream(j as u64))))
            .collect();
        let mut index: HashMap<&PackedConfig, usize> = HashMap::new();
        let mut unique: Vec<(usize, usize)> = Vec::new(); // (first draw, count)
        let mut draw_group = Vec::with_capacity(m);
        for (j, config) in draws.iter().enumerate() {
            let g = *index.entry(config).or_insert_with(|| {
                unique.push((j, 0));
                unique.len() - 1
            });
            unique[g].1 += 1;
            draw_group.push(g);
        }
        let fits: Vec<Result<ConditionalFit>> = unique
            .par_iter()
            .map(|&(first, _)| model.fit_packed(&draws[first]))
            .collect();
        Ok((draw_group, unique, fits))
    })??;

    let mut component_of_group = vec![None; unique.len()];
    let mut retained: Vec<(usize, ConditionalFit)> = Vec::new();
    for (g, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(fit) => {
                component_of_group[g] = Some(retained.len());
                retained.push((g, fit));
            }
            Err(e) if is_fit_failure(&e) => {}
            Err(e) => return Err(e),
        }
    }
    let draw_components: Vec<Option<usize>> = draws.iter().map(|&g| component_of_group[g]).collect();
    let dropped = draw_components.iter().filter(|c| c.is_none()).count();
    if dropped as f64 > config.max_failure_fraction * m as f64 {
        return Err(Error::TooManyFailedFits { failed: dropped, total: m });
    }

    let log_marginal_likelihoods: Vec<f64> = draw_components
        .iter()
        .map(|c| c.map_or(f64::NEG_INFINITY, |k| retained[k].1.log_marginal_likelihood))
        .collect();
    let (normalized_weights, ess) = normalize_weights(&log_marginal_likelihoods)?;

    // configuration-level weights: evidence times visit count
    let group_logs: Vec<f64> = retained
        .iter()
        .map(|(g, fit)| fit.log_marginal_likelihood + (unique[*g].1 as f64).ln())
        .collect();
    let (group_weights, _) = normalize_weights(&group_logs)?;
    let components: Vec<PosteriorComponent> = retained
        .into_iter()
        .zip(group_weights)
        .map(|((g, fit), weight)| PosteriorComponent {
            weight,
            draw_count: unique[g].1,
            first_iteration: unique[g].0,
            fit,
        })
        .collect();

    let mut posterior = WeightedPosterior {
        coefficient_names: model.coefficient_names().to_vec(),
        quantile_levels: config.quantile_levels.clone(),
        iterations: m,
        seed: config.seed,
        normalized_weights,
        log_marginal_likelihoods,
        draw_components,
        ess,
        weighted_means: Vec::new(),
        weighted_sds: Vec::new(),
        weighted_quantiles: Vec::new(),
        components,
        dropped_draws: dropped,
        warnings: Vec::new(),
    };
    for k in 0..posterior.coefficient_names.len() {
        let parts = posterior.mixture(k)?;
        posterior.weighted_means.push(mixture::mixture_mean(&parts));
        posterior.weighted_sds.push(mixture::mixture_sd(&parts));
        posterior.weighted_quantiles.push(
            config
                .quantile_levels
                .iter()
                .map(|&a| mixture::weighted_sum_quantile(&parts, a))
                .collect(),
        );
    }
    if dropped > 0 {
        posterior.warnings.push(Warning::DroppedFits { dropped, total: m });
    }
    if ess < config.low_ess_fraction * m as f64 {
        posterior.warnings.push(Warning::LowEffectiveSampleSize { ess, iterations: m });
    }
    Ok(posterior)
}

/// Latent configuration of a component, for inspection.
pub fn component_configuration(
    dataset: &Dataset,
    mc_model: &MisclassModel,
    exposure: &ExposureModel,
    posterior: &WeightedPosterior,
    component: usize,
) -> Result<Vec<u8>> {
    let first = posterior
        .components
        .get(component)
        .ok_or_else(|| Error::DimensionMismatch(format!("component {component}")))?
        .first_iteration;
    let probabilities = proposal_probabilities(dataset, mc_model, exposure)?;
    Ok(draw_bernoulli(&probabilities, &mut StreamFactory::new(posterior.seed).stream(first as u64)))
}
