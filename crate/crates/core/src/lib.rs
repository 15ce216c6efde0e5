//! Bayesian adjustment for misclassified binary covariates and responses.
//!
//! The covariate route samples the latent correctly classified covariate and
//! reweights conditional regression fits by their marginal likelihood. A
//! dichotomised latent Gaussian covariate is fitted jointly with a Laplace
//! approximation, and response misclassification is absorbed into an adjusted
//! logit link, optionally averaged over uncertain sensitivity and specificity.

// `!(v > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod covariate_mc;
pub mod datasets;
pub mod error;
pub mod glm;
pub mod latent_gaussian;
pub mod mixture;
pub mod model;
pub mod oracle;
pub mod parallel;
pub mod response_mc;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod warning;

pub use covariate_mc::{
    aggregate_mixture_quantile, conditional_success_probability, normalize_weights, run_importance_sampling,
    sample_latent_covariate, SamplerConfig, WeightedPosterior,
};
pub use error::{Error, Result};
pub use glm::{posterior_quantile, ConditionalFit, Marginal};
pub use latent_gaussian::{fit_latent_gaussian, LatentGaussianFit, LatentGaussianModel};
pub use model::{
    estimate_mc_from_validation, estimate_pooled_mc, exposure_probability, validate_mc_matrix, Dataset,
    ExposureModel, Family, GlmSpec, MisclassMatrix, MisclassModel, NoisePrior, ValidationCount,
    ValidationEstimate,
};
pub use oracle::{enumerate_exact_posterior, exact_vs_is_distance, EnumerationResult};
pub use rng::StreamFactory;
pub use warning::Warning;
