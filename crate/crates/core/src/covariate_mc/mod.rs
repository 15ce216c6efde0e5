//! Importance sampling over a misclassified (or partly missing) binary
//! covariate.
//!
//! Latent vectors are proposed from `Pr(x | w, Z)`, the regression of
//! interest is fitted conditionally on each, and the fits are combined with
//! weights proportional to their marginal likelihoods.

mod conditional;
mod proposal;
mod sampler;
mod weights;

pub use conditional::{pack, unpack, ConditionalModel, PackedConfig};
pub use proposal::{
    conditional_success_probability, draw_bernoulli, exposure_probabilities, proposal_probabilities,
    sample_latent_covariate,
};
pub use sampler::{
    aggregate_mixture_quantile, component_configuration, latent_draw, run_importance_sampling, LatentDraw,
    PosteriorComponent, SamplerConfig, WeightedPosterior, DEFAULT_QUANTILE_LEVELS,
};
pub use weights::normalize_weights;
pub(crate) use conditional::is_fit_failure;
