//! Conditional regression fits: exact conjugate evidence for Gaussian
//! responses, Laplace evidence for Bernoulli responses.

mod conjugate;
mod design;
mod laplace;

pub use conjugate::{fit_conjugate_linear, fit_conjugate_stats, SufficientStats};
pub use design::{design_matrix, mc_column_values};
pub use laplace::{
    fit_laplace, fit_laplace_glm, fit_laplace_weighted, log_posterior_derivatives, LaplaceFamily, NewtonOptions,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_pdf, norm_quantile, student_t_cdf, student_t_pdf, student_t_quantile};

/// Posterior marginal law of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Gaussian { mean: f64, sd: f64 },
    StudentT { location: f64, scale: f64, df: f64 },
}

impl Marginal {
    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Gaussian { mean, .. } => mean,
            Marginal::StudentT { location, .. } => location,
        }
    }

    /// Standard deviation; for `df <= 2` the scale is returned instead.
    pub fn sd(&self) -> f64 {
        match *self {
            Marginal::Gaussian { sd, .. } => sd,
            Marginal::StudentT { scale, df, .. } if df > 2.0 => scale * (df / (df - 2.0)).sqrt(),
            Marginal::StudentT { scale, .. } => scale,
        }
    }

    pub fn quantile(&self, alpha: f64) -> f64 {
        match *self {
            Marginal::Gaussian { mean, sd } => {
                if alpha == 0.5 {
                    mean
                } else {
                    mean + sd * norm_quantile(alpha)
                }
            }
            Marginal::StudentT { location, scale, df } => {
                if alpha == 0.5 {
                    location
                } else {
                    location + scale * student_t_quantile(alpha, df)
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Gaussian { mean, sd } => norm_cdf((x - mean) / sd),
            Marginal::StudentT { location, scale, df } => student_t_cdf((x - location) / scale, df),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Gaussian { mean, sd } => norm_pdf((x - mean) / sd) / sd,
            Marginal::StudentT { location, scale, df } => student_t_pdf((x - location) / scale, df) / scale,
        }
    }
}

/// Numerical bookkeeping from the optimiser.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitDiagnostics {
    /// Largest diagonal ridge added to the negative Hessian (0 when never needed).
    pub ridge: f64,
    pub step_halvings: usize,
    pub gradient_norm: f64,
}

/// Posterior summary of one conditional model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalFit {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub marginals: Vec<Marginal>,
    /// Posterior covariance (scale matrix for Student-t marginals with df <= 2).
    pub covariance: DMatrix<f64>,
    /// Natural-log marginal likelihood of the response.
    pub log_marginal_likelihood: f64,
    pub converged: bool,
    pub iterations_used: usize,
    pub diagnostics: FitDiagnostics,
}

impl ConditionalFit {
    pub fn n_coefficients(&self) -> usize {
        self.means.len()
    }

    /// Marginal law of a linear combination `a' beta` under the Gaussian approximation.
    pub fn linear_combination(&self, weights: &[f64]) -> Result<Marginal> {
        let p = self.n_coefficients();
        if weights.len() != p {
            return Err(Error::DimensionMismatch(format!("{} weights for {p} coefficients", weights.len())));
        }
        let mean: f64 = weights.iter().zip(&self.means).map(|(a, m)| a * m).sum();
        let mut var = 0.0;
        for i in 0..p {
            for j in 0..p {
                var += weights[i] * self.covariance[(i, j)] * weights[j];
            }
        }
        match self.marginals.first() {
            Some(Marginal::StudentT { df, .. }) => {
                let df = *df;
                let scale_sq = if df > 2.0 { var * (df - 2.0) / df } else { var };
                Ok(Marginal::StudentT {
                    location: mean,
                    scale: scale_sq.sqrt(),
                    df,
                })
            }
            _ => Ok(Marginal::Gaussian { mean, sd: var.sqrt() }),
        }
    }
}

/// Exact quantile of one coefficient's conditional posterior marginal.
pub fn posterior_quantile(fit: &ConditionalFit, coefficient_index: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level {alpha} outside (0, 1)")));
    }
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations_used,
            gradient_norm: fit.diagnostics.gradient_norm,
        });
    }
    let marginal = fit.marginals.get(coefficient_index).ok_or_else(|| {
        Error::DimensionMismatch(format!("coefficient {coefficient_index} of {}", fit.marginals.len()))
    })?;
    Ok(marginal.quantile(alpha))
}
