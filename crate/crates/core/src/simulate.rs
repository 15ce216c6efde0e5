//! Synthetic data generators for the simulation studies.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{Dataset, MisclassMatrix};
use crate::response_mc::marginal_success_probability;
use crate::rng::StreamFactory;
use crate::special::expit;

/// Linear model `y = b0 + bx x + bz z + sigma e` with a binary `x` drawn from
/// `logit Pr(x=1) = a0 + az z`, `z ~ U(-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSimParams {
    pub n: usize,
    pub exposure_intercept: f64,
    pub exposure_slope: f64,
    pub matrix: MisclassMatrix,
    pub intercept: f64,
    pub slope_x: f64,
    /// `None` leaves `z` out of the data entirely.
    pub slope_z: Option<f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl CovariateSimParams {
    /// n = 100, exposure `(-0.5, 0.25)`, matrix `[[0.9, 0.1], [0.2, 0.8]]`, all coefficients 1.
    pub fn reference(seed: u64) -> Self {
        Self {
            n: 100,
            exposure_intercept: -0.5,
            exposure_slope: 0.25,
            matrix: MisclassMatrix::new([[0.9, 0.1], [0.2, 0.8]]).expect("valid matrix"),
            intercept: 1.0,
            slope_x: 1.0,
            slope_z: Some(1.0),
            noise_sd: 1.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateNoise {
    Misclassified,
    /// Exactly `round(rate n)` entries of the true covariate are hidden, with no misclassification.
    Missing { rate: f64 },
}

/// Draws a dataset with columns `y`, `z` (when used) and error-prone `w`; the true `x` is kept as truth.
pub fn simulate_covariate_mc(params: &CovariateSimParams, noise: CovariateNoise) -> Result<Dataset> {
    if !(params.noise_sd > 0.0) {
        return Err(Error::InvalidArgument("noise standard deviation must be positive".into()));
    }
    let streams = StreamFactory::new(params.seed);
    let mut rng = streams.child("covariate-data", 0).stream(0);
    let n = params.n;
    let mut z = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let zi: f64 = rng.random_range(-1.0..1.0);
        let z_used = if params.slope_z.is_some() { zi } else { 0.0 };
        let xi = u8::from(rng.random::<f64>() < expit(params.exposure_intercept + params.exposure_slope * z_used));
        let wi = u8::from(rng.random::<f64>() < params.matrix.prob(xi, 1));
        let e: f64 = rng.sample(StandardNormal);
        y.push(
            params.intercept
                + params.slope_x * f64::from(xi)
                + params.slope_z.unwrap_or(0.0) * z_used
                + params.noise_sd * e,
        );
        z.push(zi);
        x.push(xi);
        w.push(wi);
    }
    let observed: Vec<Option<u8>> = match noise {
        CovariateNoise::Misclassified => w.into_iter().map(Some).collect(),
        CovariateNoise::Missing { rate } => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::OutOfRange {
                    context: "missing rate".into(),
                    value: rate,
                });
            }
            let hidden = (rate * n as f64).round() as usize;
            let mut mask_rng = streams.child("missing-mask", 0).stream(0);
            let mut observed: Vec<Option<u8>> = x.iter().map(|&v| Some(v)).collect();
            for i in sample(&mut mask_rng, n, hidden) {
                observed[i] = None;
            }
            observed
        }
    };
    let mut data = Dataset::new(y, observed)?.with_truth(x)?;
    if params.slope_z.is_some() {
        data = data.with_column("z", z)?;
    }
    Ok(data)
}

/// `s ~ Bernoulli(p_s)` with `p_s = pi11 p_y + (1 - pi00)(1 - p_y)`; truth holds the latent outcome.
pub fn simulate_response_mc(n: usize, p_y: f64, pi00: f64, pi11: f64, seed: u64) -> Result<Dataset> {
    for (name, v) in [("p_y", p_y), ("specificity", pi00), ("sensitivity", pi11)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange {
                context: name.into(),
                value: v,
            });
        }
    }
    let mut rng = StreamFactory::new(seed).child("response-data", 0).stream(0);
    let mut truth = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for _ in 0..n {
        let yi = u8::from(rng.random::<f64>() < p_y);
        let flip = rng.random::<f64>();
        let si = if yi == 1 { flip < pi11 } else { flip >= pi00 };
        truth.push(yi);
        s.push(f64::from(u8::from(si)));
    }
    debug_assert!(marginal_success_probability(p_y, pi00, pi11).is_finite());
    Dataset::response_only(s)?.with_truth(truth)
}

/// Misclassified logistic regression: true `y ~ Bernoulli(expit(b0 + b1 z))`, `z ~ N(0, 1)`,
/// observed `s` flipped with the given specificity and sensitivity.
pub fn simulate_response_regression(
    n: usize,
    intercept: f64,
    slope: f64,
    pi00: f64,
    pi11: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = StreamFactory::new(seed).child("response-regression", 0).stream(0);
    let mut z = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for _ in 0..n {
        let zi: f64 = rng.sample(StandardNormal);
        let yi = u8::from(rng.random::<f64>() < expit(intercept + slope * zi));
        let flip = rng.random::<f64>();
        let si = if yi == 1 { flip < pi11 } else { flip >= pi00 };
        z.push(zi);
        truth.push(yi);
        s.push(f64::from(u8::from(si)));
    }
    Dataset::response_only(s)?.with_column("z", z)?.with_truth(truth)
}

/// Continuous exposure observed only through a noisy dichotomisation.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussianSample {
    /// Response `y`, binary `w` (the dichotomised proxy) and column `w_c`, the
    /// continuous noisy proxy.
    pub dataset: Dataset,
    pub true_exposure: Vec<f64>,
}

/// `x_c ~ N(0, sd_x^2)`, `y = b0 + b1 x_c + e`, `w_c = x_c + u`, `w = 1{w_c > 0}`.
pub fn simulate_latent_gaussian(
    n: usize,
    intercept: f64,
    slope: f64,
    exposure_sd: f64,
    noise_sd: f64,
    measurement_sd: f64,
    seed: u64,
) -> Result<LatentGaussianSample> {
    let mut rng = StreamFactory::new(seed).child("latent-gaussian-data", 0).stream(0);
    let mut x_c = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut w_c = Vec::with_capacity(n);
    let mut w_d = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = exposure_sd * rng.sample::<f64, _>(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.sample(StandardNormal);
        let proxy = x + measurement_sd * u;
        x_c.push(x);
        y.push(intercept + slope * x + noise_sd * e);
        w_c.push(proxy);
        w_d.push(Some(u8::from(proxy > 0.0)));
    }
    let dataset = Dataset::new(y, w_d)?.with_column("w_c", w_c)?;
    Ok(LatentGaussianSample {
        dataset,
        true_exposure: x_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matrix_leaves_the_covariate_intact() {
        let mut params = CovariateSimParams::reference(3);
        params.matrix = MisclassMatrix::identity();
        let data = simulate_covariate_mc(&params, CovariateNoise::Misclassified).unwrap();
        let truth = data.truth().unwrap();
        assert!(data.mc_observed().iter().zip(truth).all(|(w, x)| *w == Some(*x)));
    }

    #[test]
    fn missing_pattern_is_exact_and_reproducible() {
        let params = CovariateSimParams::reference(11);
        let a = simulate_covariate_mc(&params, CovariateNoise::Missing { rate: 0.2 }).unwrap();
        let b = simulate_covariate_mc(&params, CovariateNoise::Missing { rate: 0.2 }).unwrap();
        assert_eq!(a.missing_count(), 20);
        assert_eq!(a, b);
        let observed_match = a
            .mc_observed()
            .iter()
            .zip(a.truth().unwrap())
            .all(|(w, x)| w.is_none_or(|w| w == *x));
        assert!(observed_match);
    }

    #[test]
    fn response_rates() {
        let data = simulate_response_mc(20_000, 0.10, 0.90, 0.95, 5).unwrap();
        let mean = data.response().iter().sum::<f64>() / 20_000.0;
        let se = (0.185f64 * 0.815 / 20_000.0).sqrt();
        assert!((mean - 0.185).abs() < 3.0 * se, "{mean}");
        let none = simulate_response_mc(500, 0.0, 1.0, 0.9, 1).unwrap();
        assert!(none.response().iter().all(|&s| s == 0.0));
        let clean = simulate_response_mc(20_000, 0.3, 1.0, 1.0, 2).unwrap();
        let mean = clean.response().iter().sum::<f64>() / 20_000.0;
        assert!((mean - 0.3).abs() < 3.0 * (0.21f64 / 20_000.0).sqrt());
    }

    #[test]
    fn dichotomised_proxy_follows_its_continuous_version() {
        let sample = simulate_latent_gaussian(200, 1.0, 1.0, 1.0, 1.0, 1.0, 4).unwrap();
        let proxy = sample.dataset.column("w_c").unwrap();
        assert!(sample
            .dataset
            .mc_observed()
            .iter()
            .zip(proxy)
            .all(|(w, p)| *w == Some(u8::from(*p > 0.0))));
    }
}
