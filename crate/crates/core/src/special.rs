//! Scalar special functions shared by the fitting routines.

use statrs::function::{beta, erf};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this argument the normal CDF is evaluated through its tail expansion.
const NORMAL_TAIL_CUTOFF: f64 = -35.0;

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn log1pexp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x > -35.0 {
        x.exp().ln_1p()
    } else {
        x.exp()
    }
}

/// Log-sum-exp over a slice; `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p);
    // Newton polish against the accurate CDF
    let density = norm_pdf(x);
    if density > 0.0 {
        x - (norm_cdf(x) - p) / density
    } else {
        x
    }
}

/// Series `1 - 1/x^2 + 3/x^4 - 15/x^6` from the Mills-ratio tail expansion.
#[inline]
fn tail_series(x: f64) -> f64 {
    let r = 1.0 / (x * x);
    1.0 - r + 3.0 * r * r - 15.0 * r * r * r
}

/// `ln Phi(x)`, accurate deep into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x >= NORMAL_TAIL_CUTOFF {
        norm_cdf(x).ln()
    } else {
        -0.5 * x * x - (-x).ln() - 0.5 * LN_2PI + tail_series(x).ln()
    }
}

/// Inverse Mills ratio `phi(x) / Phi(x)`.
pub fn inverse_mills(x: f64) -> f64 {
    if x >= NORMAL_TAIL_CUTOFF {
        norm_pdf(x) / norm_cdf(x)
    } else {
        -x / tail_series(x)
    }
}

/// CDF of the standard Student-t law with `df` degrees of freedom.
pub fn student_t_cdf(x: f64, df: f64) -> f64 {
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * beta::beta_reg(0.5 * df, 0.5, df / (df + x * x));
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of the standard Student-t law.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let lower = p.min(1.0 - p);
    let y = beta::inv_beta_reg(0.5 * df, 0.5, 2.0 * lower);
    let t = (df * (1.0 - y) / y).sqrt();
    // one Newton polish on the CDF keeps the tails accurate
    let t = if p >= 0.5 { t } else { -t };
    let density = student_t_pdf(t, df);
    if density > 0.0 {
        t - (student_t_cdf(t, df) - p) / density
    } else {
        t
    }
}

pub fn student_t_pdf(x: f64, df: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_norm = ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_norm - 0.5 * (df + 1.0) * (x * x / df).ln_1p()).exp()
}

/// Quantile of Beta(a, b).
pub fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    beta::inv_beta_reg(a, b, p)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expit_logit_round_trip() {
        for &x in &[-30.0, -2.5, 0.0, 1.0, 17.0] {
            assert_relative_eq!(logit(expit(x)), x, max_relative = 1e-9);
        }
        assert_eq!(expit(0.0), 0.5);
    }

    #[test]
    fn normal_quantiles() {
        assert_relative_eq!(norm_quantile(0.975), 1.959_963_984_540_054, epsilon = 1e-12);
        assert_eq!(norm_quantile(0.5), 0.0);
        assert_relative_eq!(norm_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-14);
    }

    #[test]
    fn log_norm_cdf_is_continuous_at_tail_switch() {
        let inside = norm_cdf(NORMAL_TAIL_CUTOFF + 1e-9).ln();
        let outside = log_norm_cdf(NORMAL_TAIL_CUTOFF - 1e-9);
        assert_relative_eq!(inside, outside, max_relative = 1e-9);
        let m_in = norm_pdf(-34.999) / norm_cdf(-34.999);
        assert_relative_eq!(m_in, inverse_mills(-35.001), max_relative = 1e-4);
    }

    #[test]
    fn t_quantile_matches_tables() {
        assert_relative_eq!(student_t_quantile(0.975, 3.0), 3.182_446_305_284_263, epsilon = 1e-9);
        assert_relative_eq!(student_t_quantile(0.025, 10.0), -2.228_138_851_986_274, epsilon = 1e-9);
        assert_relative_eq!(student_t_cdf(3.182_446_305_284_263, 3.0), 0.975, epsilon = 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln());
    }
}
