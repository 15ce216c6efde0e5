//! Newton-Raphson mode finding with a Gaussian (Laplace) approximation at the
//! mode. The log evidence is
//! `log p(y, beta*) + (p/2) log(2 pi) - (1/2) log det H`, `H` the negative
//! Hessian of the log posterior at the mode `beta*`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{ConditionalFit, FitDiagnostics, Marginal};
use crate::error::{Error, Result};
use crate::model::Family;
use crate::special::{expit, inverse_mills, log1pexp, log_norm_cdf, LN_2PI};

/// Fitted probabilities of the adjusted link stay this far inside its range.
const SSLOGIT_MARGIN: f64 = 1e-10;

/// Observation model for a single-index likelihood `sum_i l(eta_i, y_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaplaceFamily {
    /// Gaussian response with known variance (the approximation is exact).
    Gaussian { variance: f64 },
    Logit,
    Probit,
    Sslogit { pi00: f64, pi11: f64 },
}

impl LaplaceFamily {
    pub fn from_family(family: Family) -> Result<Self> {
        match family {
            Family::BernoulliLogit => Ok(LaplaceFamily::Logit),
            Family::BernoulliProbit => Ok(LaplaceFamily::Probit),
            Family::BernoulliSslogit { pi00, pi11 } => {
                let f = LaplaceFamily::Sslogit { pi00, pi11 };
                f.validate()?;
                Ok(f)
            }
            Family::Gaussian => Err(Error::InvalidArgument(
                "gaussian responses use the conjugate fit; pass LaplaceFamily::Gaussian for a fixed variance".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LaplaceFamily::Gaussian { variance } if !(variance > 0.0) => {
                Err(Error::InvalidArgument("noise variance must be positive".into()))
            }
            LaplaceFamily::Sslogit { pi00, pi11 }
                if !(pi00 + pi11 > 1.0) || !(0.0..=1.0).contains(&pi00) || !(0.0..=1.0).contains(&pi11) =>
            {
                Err(Error::InvalidSensSpec { pi00, pi11 })
            }
            _ => Ok(()),
        }
    }

    fn is_binary(&self) -> bool {
        !matches!(self, LaplaceFamily::Gaussian { .. })
    }

    /// `(l, dl/deta, d2l/deta2)` for one observation.
    #[inline]
    pub fn terms(&self, eta: f64, y: f64) -> (f64, f64, f64) {
        match *self {
            LaplaceFamily::Gaussian { variance } => {
                let r = y - eta;
                (-0.5 * (LN_2PI + variance.ln()) - 0.5 * r * r / variance, r / variance, -1.0 / variance)
            }
            LaplaceFamily::Logit => {
                let g = expit(eta);
                (y * eta - log1pexp(eta), y - g, -g * (1.0 - g))
            }
            LaplaceFamily::Probit => {
                if y > 0.5 {
                    let lambda = inverse_mills(eta);
                    (log_norm_cdf(eta), lambda, -lambda * (eta + lambda))
                } else {
                    let lambda = inverse_mills(-eta);
                    (log_norm_cdf(-eta), -lambda, -lambda * (lambda - eta))
                }
            }
            LaplaceFamily::Sslogit { pi00, pi11 } => {
                let g = expit(eta);
                let h = expit(-eta);
                let span = pi11 - (1.0 - pi00);
                let lo = 1.0 - pi00 + SSLOGIT_MARGIN;
                let hi = pi11 - SSLOGIT_MARGIN;
                // p = (1-pi00)(1-g) + pi11 g and 1 - p = pi00 (1-g) + (1-pi11) g, both without cancellation
                let p = ((1.0 - pi00) * h + pi11 * g).clamp(lo, hi);
                let q = (pi00 * h + (1.0 - pi11) * g).clamp(1.0 - hi, 1.0 - lo);
                let dg = g * h;
                let dp = span * dg;
                let d2p = span * dg * (h - g);
                let a = y / p - (1.0 - y) / q;
                let b = y / (p * p) + (1.0 - y) / (q * q);
                (y * p.ln() + (1.0 - y) * q.ln(), a * dp, a * d2p - b * dp * dp)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub initial_ridge: f64,
    pub max_ridge: f64,
    /// `|mode|` above this with prior variance at least `separation_prior_variance` is flagged.
    pub separation_threshold: f64,
    pub separation_prior_variance: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-10,
            initial_ridge: 1e-8,
            max_ridge: 1e-2,
            separation_threshold: 1e3,
            separation_prior_variance: 1e4,
        }
    }
}

/// Log posterior (with normalised Gaussian prior), its gradient and Hessian at `beta`.
pub fn log_posterior_derivatives(
    design: &DMatrix<f64>,
    y: &[f64],
    family: LaplaceFamily,
    prior_beta_variance: &[f64],
    beta: &[f64],
) -> (f64, DVector<f64>, DMatrix<f64>) {
    derivatives(design, y, None, family, prior_beta_variance, beta)
}

#[inline]
fn case_weight(weights: Option<&[f64]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i])
}

fn derivatives(
    design: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    family: LaplaceFamily,
    prior_beta_variance: &[f64],
    beta: &[f64],
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = design.nrows();
    let p = design.ncols();
    let eta = design * DVector::from_column_slice(beta);
    let mut value = 0.0;
    let mut d1 = DVector::zeros(n);
    let mut d2 = DVector::zeros(n);
    for i in 0..n {
        let (l, g, h) = family.terms(eta[i], y[i]);
        let c = case_weight(weights, i);
        value += c * l;
        d1[i] = c * g;
        d2[i] = c * h;
    }
    let mut gradient = design.tr_mul(&d1);
    let mut weighted = design.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= d2[i];
    }
    let mut hessian = design.tr_mul(&weighted);
    for j in 0..p {
        let v = prior_beta_variance[j];
        value -= 0.5 * (LN_2PI + v.ln()) + 0.5 * beta[j] * beta[j] / v;
        gradient[j] -= beta[j] / v;
        hessian[(j, j)] -= 1.0 / v;
    }
    (value, gradient, hessian)
}

fn log_posterior(
    design: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    family: LaplaceFamily,
    prior: &[f64],
    beta: &DVector<f64>,
) -> f64 {
    let eta = design * beta;
    let mut value: f64 = eta
        .iter()
        .zip(y)
        .enumerate()
        .map(|(i, (&e, &yi))| case_weight(weights, i) * family.terms(e, yi).0)
        .sum();
    for (j, v) in prior.iter().enumerate() {
        value -= 0.5 * (LN_2PI + v.ln()) + 0.5 * beta[j] * beta[j] / v;
    }
    value
}

/// Cholesky of `neg_hessian + ridge * scale * I`, escalating the ridge as needed.
fn ridged_cholesky(neg_hessian: &DMatrix<f64>, opts: &NewtonOptions) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(chol) = neg_hessian.clone().cholesky() {
        return Ok((chol, 0.0));
    }
    let scale = neg_hessian.diagonal().iter().fold(1.0_f64, |m, d| m.max(d.abs()));
    let mut ridge = opts.initial_ridge;
    while ridge <= opts.max_ridge * (1.0 + 1e-12) {
        let mut h = neg_hessian.clone();
        for j in 0..h.nrows() {
            h[(j, j)] += ridge * scale;
        }
        if let Some(chol) = h.cholesky() {
            return Ok((chol, ridge));
        }
        ridge *= 10.0;
    }
    Err(Error::HessianNotPd { ridge: opts.max_ridge })
}

/// Flags modes that ran off to very large values under a vague prior.
fn check_separation(beta: &[f64], prior_beta_variance: &[f64], opts: &NewtonOptions) -> Result<()> {
    for (j, (&b, &v)) in beta.iter().zip(prior_beta_variance).enumerate() {
        if b.abs() > opts.separation_threshold && v >= opts.separation_prior_variance {
            return Err(Error::SeparationSuspected { index: j, value: b });
        }
    }
    Ok(())
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Laplace fit of a single-index model with independent Gaussian priors.
pub fn fit_laplace(
    design: &DMatrix<f64>,
    y: &[f64],
    family: LaplaceFamily,
    prior_beta_variance: &[f64],
    opts: &NewtonOptions,
) -> Result<ConditionalFit> {
    fit_laplace_inner(design, y, None, family, prior_beta_variance, opts)
}

/// As [`fit_laplace`], with each row's log-likelihood multiplied by a
/// frequency weight; identical rows can be collapsed into one.
pub fn fit_laplace_weighted(
    design: &DMatrix<f64>,
    y: &[f64],
    case_weights: &[f64],
    family: LaplaceFamily,
    prior_beta_variance: &[f64],
    opts: &NewtonOptions,
) -> Result<ConditionalFit> {
    if case_weights.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} case weights for {} rows",
            case_weights.len(),
            y.len()
        )));
    }
    if case_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("case weights must be finite and nonnegative".into()));
    }
    fit_laplace_inner(design, y, Some(case_weights), family, prior_beta_variance, opts)
}

fn fit_laplace_inner(
    design: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    family: LaplaceFamily,
    prior_beta_variance: &[f64],
    opts: &NewtonOptions,
) -> Result<ConditionalFit> {
    family.validate()?;
    let n = design.nrows();
    let p = design.ncols();
    if y.len() != n || prior_beta_variance.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "design {n}x{p}, response {}, prior {}",
            y.len(),
            prior_beta_variance.len()
        )));
    }
    if design.iter().chain(y).chain(prior_beta_variance).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("design, response or prior".into()));
    }
    if family.is_binary() && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::OutOfRange {
            context: "binary response".into(),
            value: *y.iter().find(|&&v| v != 0.0 && v != 1.0).unwrap(),
        });
    }

    let mut diagnostics = FitDiagnostics::default();
    let mut beta = DVector::zeros(p);
    let mut converged = false;
    let mut iterations = 0;
    let mut polished = false;
    let (mut value, mut gradient, mut hessian) =
        derivatives(design, y, weights, family, prior_beta_variance, beta.as_slice());

    while iterations < opts.max_iterations {
        let grad_norm = max_abs(&gradient);
        diagnostics.gradient_norm = grad_norm;
        if grad_norm < opts.gradient_tolerance {
            converged = true;
            if polished {
                break;
            }
            polished = true;
        }
        let neg_hessian = -&hessian;
        let (chol, ridge) = ridged_cholesky(&neg_hessian, opts)?;
        diagnostics.ridge = diagnostics.ridge.max(ridge);
        let step = chol.solve(&gradient);
        iterations += 1;

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &beta + &step * t;
            let v = log_posterior(design, y, weights, family, prior_beta_variance, &candidate);
            if v.is_finite() && v >= value {
                accepted = Some(candidate);
                break;
            }
            t *= 0.5;
            diagnostics.step_halvings += 1;
        }
        let Some(next) = accepted else {
            // no ascent direction left: at the numerical optimum
            converged = converged || grad_norm < opts.gradient_tolerance.sqrt();
            break;
        };
        let moved = max_abs(&(&next - &beta));
        beta = next;
        (value, gradient, hessian) = derivatives(design, y, weights, family, prior_beta_variance, beta.as_slice());
        diagnostics.gradient_norm = max_abs(&gradient);
        if converged {
            break;
        }
        if moved < opts.step_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            gradient_norm: diagnostics.gradient_norm,
        });
    }
    if family.is_binary() {
        check_separation(beta.as_slice(), prior_beta_variance, opts)?;
    }

    let neg_hessian = -&hessian;
    let (chol, ridge) = ridged_cholesky(&neg_hessian, opts)?;
    diagnostics.ridge = diagnostics.ridge.max(ridge);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let covariance = chol.inverse();
    let log_evidence = value + 0.5 * p as f64 * LN_2PI - 0.5 * log_det;
    if !log_evidence.is_finite() {
        return Err(Error::NonFiniteInput("Laplace log evidence".into()));
    }
    let means: Vec<f64> = beta.iter().copied().collect();
    let sds: Vec<f64> = (0..p).map(|j| covariance[(j, j)].sqrt()).collect();
    let marginals = means
        .iter()
        .zip(&sds)
        .map(|(&mean, &sd)| Marginal::Gaussian { mean, sd })
        .collect();
    Ok(ConditionalFit {
        means,
        sds,
        marginals,
        covariance,
        log_marginal_likelihood: log_evidence,
        converged: true,
        iterations_used: iterations,
        diagnostics,
    })
}

/// Laplace fit with default Newton settings.
pub fn fit_laplace_glm(
    design: &DMatrix<f64>,
    y: &[f64],
    family: LaplaceFamily,
    prior_beta_variance: &[f64],
) -> Result<ConditionalFit> {
    fit_laplace(design, y, family, prior_beta_variance, &NewtonOptions::default())
}
