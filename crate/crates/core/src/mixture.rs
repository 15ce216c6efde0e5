//! Finite mixtures of conditional posterior marginals.

use crate::error::{Error, Result};
use crate::glm::Marginal;

const BISECTION_TOLERANCE: f64 = 1e-10;
const MAX_BISECTIONS: usize = 400;

/// One weighted component of a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub marginal: Marginal,
}

pub fn mixture_cdf(components: &[Component], x: f64) -> f64 {
    components.iter().map(|c| c.weight * c.marginal.cdf(x)).sum()
}

pub fn mixture_pdf(components: &[Component], x: f64) -> f64 {
    components.iter().map(|c| c.weight * c.marginal.pdf(x)).sum()
}

pub fn mixture_mean(components: &[Component]) -> f64 {
    components.iter().map(|c| c.weight * c.marginal.mean()).sum()
}

/// Standard deviation by the law of total variance.
pub fn mixture_sd(components: &[Component]) -> f64 {
    let mean = mixture_mean(components);
    components
        .iter()
        .map(|c| {
            let d = c.marginal.mean() - mean;
            c.weight * (c.marginal.sd().powi(2) + d * d)
        })
        .sum::<f64>()
        .sqrt()
}

/// `sum_k w_k q_alpha(k)`: the weight-averaged conditional quantile.
pub fn weighted_sum_quantile(components: &[Component], alpha: f64) -> f64 {
    components.iter().map(|c| c.weight * c.marginal.quantile(alpha)).sum()
}

/// Exact quantile of the mixture, solving `sum_k w_k F_k(q) = alpha` by bisection.
///
/// Weights must already sum to one. The root is bracketed by the smallest and
/// largest component quantiles.
pub fn mixture_quantile(components: &[Component], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level {alpha} outside (0, 1)")));
    }
    let active: Vec<Component> = components.iter().copied().filter(|c| c.weight > 0.0).collect();
    match active.as_slice() {
        [] => return Err(Error::AllWeightsDegenerate),
        [only] => return Ok(only.marginal.quantile(alpha)),
        _ => {}
    }
    let (mut lo, mut hi) = active.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        let q = c.marginal.quantile(alpha);
        (lo.min(q), hi.max(q))
    });
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFiniteInput("component quantile".into()));
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= BISECTION_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mixture_cdf(&active, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gaussian(weight: f64, mean: f64, sd: f64) -> Component {
        Component {
            weight,
            marginal: Marginal::Gaussian { mean, sd },
        }
    }

    #[test]
    fn single_component_is_its_own_quantile() {
        let c = [gaussian(1.0, 1.0, 2.0)];
        assert_eq!(mixture_quantile(&c, 0.975).unwrap(), c[0].marginal.quantile(0.975));
    }

    #[test]
    fn symmetric_pair_has_zero_median() {
        let c = [gaussian(0.5, -1.0, 1.0), gaussian(0.5, 1.0, 1.0)];
        assert!(mixture_quantile(&c, 0.5).unwrap().abs() < 1e-10);
    }

    #[test]
    fn spread_mixture_separates_the_two_quantile_rules() {
        let c = [gaussian(0.5, -3.0, 0.5), gaussian(0.5, 3.0, 0.5)];
        let exact = mixture_quantile(&c, 0.975).unwrap();
        let averaged = weighted_sum_quantile(&c, 0.975);
        assert_relative_eq!(averaged, 0.5 * 1.959_963_984_540_054, epsilon = 1e-9);
        assert!((exact - averaged).abs() > 1.0);
        assert_relative_eq!(mixture_cdf(&c, exact), 0.975, epsilon = 1e-9);
    }

    #[test]
    fn total_variance_dominates_within_variance() {
        let c = [gaussian(0.3, 0.0, 1.0), gaussian(0.7, 2.0, 0.5)];
        let within: f64 = c.iter().map(|k| k.weight * k.marginal.sd().powi(2)).sum();
        assert!(mixture_sd(&c).powi(2) >= within);
    }
}
