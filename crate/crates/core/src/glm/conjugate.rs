use nalgebra::{DMatrix, DVector};

use super::{ConditionalFit, FitDiagnostics, Marginal};
use crate::error::{Error, Result};
use crate::model::NoisePrior;
use crate::special::{ln_gamma, LN_2PI};

/// Cross-products `X'X`, `X'y`, `y'y` of a linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl SufficientStats {
    pub fn from_design(design: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        if design.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, response has {}",
                design.nrows(),
                y.len()
            )));
        }
        if design.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("design or response".into()));
        }
        let yv = DVector::from_column_slice(y);
        Ok(Self {
            xtx: design.tr_mul(design),
            xty: design.tr_mul(&yv),
            yty: yv.dot(&yv),
            n: y.len(),
        })
    }
}

/// Exact conjugate posterior and evidence of a Gaussian linear model.
///
/// With fixed noise variance the prior is `beta ~ N(0, V0)`. Under the
/// normal-inverse-gamma prior, `sigma^2 ~ IG(a, b)` and `beta | sigma^2 ~ N(0, sigma^2 V0)`,
/// giving Student-t marginals.
pub fn fit_conjugate_linear(
    design: &DMatrix<f64>,
    y: &[f64],
    prior_beta_variance: &[f64],
    noise_prior: NoisePrior,
) -> Result<ConditionalFit> {
    if y.is_empty() {
        return Err(Error::InvalidArgument("at least one observation is required".into()));
    }
    let stats = SufficientStats::from_design(design, y)?;
    fit_conjugate_stats(&stats, prior_beta_variance, noise_prior)
}

pub fn fit_conjugate_stats(
    stats: &SufficientStats,
    prior_beta_variance: &[f64],
    noise_prior: NoisePrior,
) -> Result<ConditionalFit> {
    let p = stats.xtx.nrows();
    if prior_beta_variance.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} prior variances for {p} coefficients",
            prior_beta_variance.len()
        )));
    }
    if prior_beta_variance.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("prior variances must be strictly positive".into()));
    }
    noise_prior.validate()?;
    let n = stats.n as f64;
    let log_det_prior: f64 = prior_beta_variance.iter().map(|v| v.ln()).sum();

    let (noise_scale, precision) = match noise_prior {
        NoisePrior::Fixed { variance } => (variance, &stats.xtx / variance),
        NoisePrior::NormalInverseGamma { .. } => (1.0, stats.xtx.clone()),
    };
    let mut precision = precision;
    for (j, v) in prior_beta_variance.iter().enumerate() {
        precision[(j, j)] += 1.0 / v;
    }
    let chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("posterior precision is not positive definite".into()))?;
    let rhs = &stats.xty / noise_scale;
    let mean = chol.solve(&rhs);
    let log_det_precision = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let inverse = chol.inverse();
    // y'y - m' A m, the minimised penalised residual sum of squares
    let quad = (stats.yty / noise_scale - mean.dot(&rhs)).max(0.0);

    let (marginals, covariance, log_evidence) = match noise_prior {
        NoisePrior::Fixed { variance } => {
            let log_evidence = -0.5 * n * (LN_2PI + variance.ln())
                - 0.5 * log_det_prior
                - 0.5 * log_det_precision
                - 0.5 * quad;
            let marginals = (0..p)
                .map(|j| Marginal::Gaussian {
                    mean: mean[j],
                    sd: inverse[(j, j)].sqrt(),
                })
                .collect();
            (marginals, inverse, log_evidence)
        }
        NoisePrior::NormalInverseGamma { a, b } => {
            let a_post = a + 0.5 * n;
            let b_post = b + 0.5 * quad;
            let log_evidence = -0.5 * n * LN_2PI - 0.5 * log_det_prior - 0.5 * log_det_precision
                + a * b.ln()
                - a_post * b_post.ln()
                + ln_gamma(a_post)
                - ln_gamma(a);
            let df = 2.0 * a_post;
            let scale_matrix = &inverse * (b_post / a_post);
            let marginals: Vec<Marginal> = (0..p)
                .map(|j| Marginal::StudentT {
                    location: mean[j],
                    scale: scale_matrix[(j, j)].sqrt(),
                    df,
                })
                .collect();
            let covariance = if df > 2.0 {
                scale_matrix * (df / (df - 2.0))
            } else {
                scale_matrix
            };
            (marginals, covariance, log_evidence)
        }
    };
    if !log_evidence.is_finite() {
        return Err(Error::NonFiniteInput("log evidence".into()));
    }
    let sds = marginals.iter().map(Marginal::sd).collect();
    Ok(ConditionalFit {
        means: mean.iter().copied().collect(),
        sds,
        marginals,
        covariance,
        log_marginal_likelihood: log_evidence,
        converged: true,
        iterations_used: 0,
        diagnostics: FitDiagnostics::default(),
    })
}
