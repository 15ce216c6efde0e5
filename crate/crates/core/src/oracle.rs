//! Exact posterior by enumerating every latent configuration of a small dataset.

use rayon::prelude::*;
use serde::Serialize;

use crate::covariate_mc::{normalize_weights, pack, proposal_probabilities, ConditionalModel, WeightedPosterior};
use crate::error::{Error, Result};
use crate::glm::ConditionalFit;
use crate::mixture::{self, Component};
use crate::model::{Dataset, ExposureModel, Family, GlmSpec, MisclassModel};
use crate::special::log_sum_exp;

pub const DEFAULT_MAX_N: usize = 14;

/// One latent configuration; bit `i` of `index` is `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub index: u64,
    /// `ln Pr(x | w, Z)` under the proposal factors.
    pub log_prior: f64,
    /// `ln Pr(x | w, Z) + ln p(y | x, Z)`.
    pub log_joint: f64,
    pub weight: f64,
    pub fit: ConditionalFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationResult {
    pub coefficient_names: Vec<String>,
    pub quantile_levels: Vec<f64>,
    /// Configurations with nonzero prior mass, in index order.
    pub configurations: Vec<Configuration>,
    /// `ln sum_x Pr(x | w, Z) p(y | x, Z)`.
    pub log_normalizer: f64,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Weighted sums of conditional quantiles, `[coefficient][level]`.
    pub weighted_quantiles: Vec<Vec<f64>>,
}

/// Read access shared by the exact and the sampled posterior.
pub trait PosteriorSummary {
    fn coefficient_names(&self) -> &[String];
    fn quantile_levels(&self) -> &[f64];
    fn means(&self) -> &[f64];
    fn weighted_quantiles(&self) -> &[Vec<f64>];
    fn mixture(&self, coefficient: usize) -> Result<Vec<Component>>;
}

impl PosteriorSummary for EnumerationResult {
    fn coefficient_names(&self) -> &[String] {
        &self.coefficient_names
    }
    fn quantile_levels(&self) -> &[f64] {
        &self.quantile_levels
    }
    fn means(&self) -> &[f64] {
        &self.means
    }
    fn weighted_quantiles(&self) -> &[Vec<f64>] {
        &self.weighted_quantiles
    }
    fn mixture(&self, coefficient: usize) -> Result<Vec<Component>> {
        EnumerationResult::mixture(self, coefficient)
    }
}

impl PosteriorSummary for WeightedPosterior {
    fn coefficient_names(&self) -> &[String] {
        &self.coefficient_names
    }
    fn quantile_levels(&self) -> &[f64] {
        &self.quantile_levels
    }
    fn means(&self) -> &[f64] {
        &self.weighted_means
    }
    fn weighted_quantiles(&self) -> &[Vec<f64>] {
        &self.weighted_quantiles
    }
    fn mixture(&self, coefficient: usize) -> Result<Vec<Component>> {
        WeightedPosterior::mixture(self, coefficient)
    }
}

impl EnumerationResult {
    pub fn mixture(&self, coefficient: usize) -> Result<Vec<Component>> {
        if coefficient >= self.coefficient_names.len() {
            return Err(Error::DimensionMismatch(format!("coefficient {coefficient}")));
        }
        Ok(self
            .configurations
            .iter()
            .map(|c| Component {
                weight: c.weight,
                marginal: c.fit.marginals[coefficient],
            })
            .collect())
    }

    pub fn mixture_quantile(&self, coefficient: usize, alpha: f64) -> Result<f64> {
        mixture::mixture_quantile(&self.mixture(coefficient)?, alpha)
    }

    pub fn mixture_cdf(&self, coefficient: usize, value: f64) -> Result<f64> {
        Ok(mixture::mixture_cdf(&self.mixture(coefficient)?, value))
    }
}

/// Exact posterior of a Gaussian-response model by summing over all `2^n`
/// configurations of the latent covariate.
pub fn enumerate_exact_posterior(
    dataset: &Dataset,
    spec: &GlmSpec,
    mc_model: &MisclassModel,
    exposure: &ExposureModel,
    max_n: usize,
) -> Result<EnumerationResult> {
    let n = dataset.n();
    if n > max_n || n >= 63 {
        return Err(Error::TooLarge { n, max_n });
    }
    enumerate_in_order(dataset, spec, mc_model, exposure, 0..1u64 << n)
}

fn enumerate_in_order(
    dataset: &Dataset,
    spec: &GlmSpec,
    mc_model: &MisclassModel,
    exposure: &ExposureModel,
    order: impl IntoParallelIterator<Item = u64>,
) -> Result<EnumerationResult> {
    if spec.family != Family::Gaussian {
        return Err(Error::NotSupported(format!(
            "exact enumeration needs closed-form evidence; family {} is approximate",
            spec.family.name()
        )));
    }
    let n = dataset.n();
    let model = ConditionalModel::new(dataset, spec)?;
    let probabilities = proposal_probabilities(dataset, mc_model, exposure)?;

    let mut evaluated: Vec<(u64, f64, ConditionalFit)> = order
        .into_par_iter()
        .filter_map(|index| {
            let x: Vec<u8> = (0..n).map(|i| ((index >> i) & 1) as u8).collect();
            let log_prior: f64 = x
                .iter()
                .zip(&probabilities)
                .map(|(&xi, &p)| if xi == 1 { p.ln() } else { (1.0 - p).ln() })
                .sum();
            if log_prior == f64::NEG_INFINITY {
                return None;
            }
            Some(model.fit_packed(&pack(&x)).map(|fit| (index, log_prior, fit)))
        })
        .collect::<Result<_>>()?;
    // canonical order makes every reduction independent of the traversal order
    evaluated.sort_by_key(|(index, _, _)| *index);

    let log_joint: Vec<f64> = evaluated
        .iter()
        .map(|(_, prior, fit)| prior + fit.log_marginal_likelihood)
        .collect();
    let log_normalizer = log_sum_exp(&log_joint);
    let (weights, _) = normalize_weights(&log_joint)?;
    let configurations: Vec<Configuration> = evaluated
        .into_iter()
        .zip(log_joint)
        .zip(weights)
        .map(|(((index, log_prior, fit), log_joint), weight)| Configuration {
            index,
            log_prior,
            log_joint,
            weight,
            fit,
        })
        .collect();

    let mut result = EnumerationResult {
        coefficient_names: model.coefficient_names().to_vec(),
        quantile_levels: crate::covariate_mc::DEFAULT_QUANTILE_LEVELS.to_vec(),
        configurations,
        log_normalizer,
        means: Vec::new(),
        sds: Vec::new(),
        weighted_quantiles: Vec::new(),
    };
    for k in 0..result.coefficient_names.len() {
        let parts = result.mixture(k)?;
        result.means.push(mixture::mixture_mean(&parts));
        result.sds.push(mixture::mixture_sd(&parts));
        result.weighted_quantiles.push(
            result
                .quantile_levels
                .iter()
                .map(|&a| mixture::weighted_sum_quantile(&parts, a))
                .collect(),
        );
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientGap {
    pub coefficient: String,
    pub mean_gap: f64,
    /// Absolute gaps of the weighted-sum quantiles, one per level.
    pub weighted_quantile_gaps: Vec<f64>,
    /// Absolute gaps of the exact mixture quantiles, one per level.
    pub mixture_quantile_gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceReport {
    pub quantile_levels: Vec<f64>,
    pub coefficients: Vec<CoefficientGap>,
}

impl DistanceReport {
    pub fn coefficient(&self, name: &str) -> Option<&CoefficientGap> {
        self.coefficients.iter().find(|c| c.coefficient == name)
    }
}

/// Per-coefficient discrepancies between two posterior approximations of the same model.
pub fn posterior_distance(a: &impl PosteriorSummary, b: &impl PosteriorSummary) -> Result<DistanceReport> {
    if a.coefficient_names() != b.coefficient_names() {
        return Err(Error::SpecMismatch(format!(
            "coefficients {:?} vs {:?}",
            a.coefficient_names(),
            b.coefficient_names()
        )));
    }
    if a.quantile_levels() != b.quantile_levels() {
        return Err(Error::SpecMismatch("different quantile levels".into()));
    }
    let levels = a.quantile_levels().to_vec();
    let coefficients = a
        .coefficient_names()
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (ma, mb) = (a.mixture(k)?, b.mixture(k)?);
            let mixture_quantile_gaps = levels
                .iter()
                .map(|&alpha| Ok((mixture::mixture_quantile(&ma, alpha)? - mixture::mixture_quantile(&mb, alpha)?).abs()))
                .collect::<Result<_>>()?;
            Ok(CoefficientGap {
                coefficient: name.clone(),
                mean_gap: (a.means()[k] - b.means()[k]).abs(),
                weighted_quantile_gaps: a.weighted_quantiles()[k]
                    .iter()
                    .zip(&b.weighted_quantiles()[k])
                    .map(|(x, y)| (x - y).abs())
                    .collect(),
                mixture_quantile_gaps,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DistanceReport {
        quantile_levels: levels,
        coefficients,
    })
}

pub fn exact_vs_is_distance(oracle: &EnumerationResult, sampled: &WeightedPosterior) -> Result<DistanceReport> {
    posterior_distance(oracle, sampled)
}
