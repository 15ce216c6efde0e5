//! Dichotomised latent Gaussian exposure: a joint Laplace fit over the
//! continuous exposure field, the response coefficients and the exposure
//! coefficients, integrated over a grid of residual log-precisions.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::glm::Marginal;
use crate::mixture::{mixture_mean, mixture_quantile, mixture_sd, Component};
use crate::model::Dataset;
use crate::special::{inverse_mills, log_norm_cdf, log_sum_exp, norm_cdf, LN_2PI};
use crate::warning::Warning;

/// `Pr(w_d = 1 | x_c) = Phi(x_c / sigma_u)`.
pub fn probit_misclass_probability(latent: f64, measurement_sd: f64) -> Result<f64> {
    if !(measurement_sd > 0.0 && measurement_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("measurement sd {measurement_sd} must be positive")));
    }
    Ok(norm_cdf(latent / measurement_sd))
}

/// How a residual standard deviation enters the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualScale {
    Fixed { sd: f64 },
    /// `points` log-precisions spread evenly over `center ± half_width`,
    /// centred on a moment-based starting value.
    Grid { points: usize, half_width: f64 },
}

impl Default for ResidualScale {
    fn default() -> Self {
        ResidualScale::Grid {
            points: 7,
            half_width: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussianModel {
    pub measurement_sd: f64,
    /// Error-free covariates of the response model.
    pub response_covariates: Vec<String>,
    /// Error-free covariates of the exposure model.
    pub exposure_covariates: Vec<String>,
    pub coefficient_prior_variance: f64,
    pub exposure_prior_variance: f64,
    pub response_scale: ResidualScale,
    pub exposure_scale: ResidualScale,
    pub quantile_levels: Vec<f64>,
}

impl Default for LatentGaussianModel {
    fn default() -> Self {
        Self {
            measurement_sd: 1.0,
            response_covariates: Vec::new(),
            exposure_covariates: Vec::new(),
            coefficient_prior_variance: 1000.0,
            exposure_prior_variance: 1000.0,
            response_scale: ResidualScale::default(),
            exposure_scale: ResidualScale::default(),
            quantile_levels: vec![0.025, 0.5, 0.975],
        }
    }
}

impl LatentGaussianModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.measurement_sd > 0.0 && self.measurement_sd.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "measurement sd {} must be positive",
                self.measurement_sd
            )));
        }
        for v in [self.coefficient_prior_variance, self.exposure_prior_variance] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("prior variance {v} must be positive")));
            }
        }
        for scale in [self.response_scale, self.exposure_scale] {
            match scale {
                ResidualScale::Fixed { sd } if !(sd > 0.0 && sd.is_finite()) => {
                    return Err(Error::InvalidArgument(format!("residual sd {sd} must be positive")));
                }
                ResidualScale::Grid { points, half_width }
                    if points == 0 || !(half_width >= 0.0 && half_width.is_finite()) =>
                {
                    return Err(Error::InvalidArgument("log-precision grid needs points and a finite width".into()));
                }
                _ => {}
            }
        }
        if self.quantile_levels.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::InvalidArgument("quantile levels must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// `(intercept, x_c, response covariates..., exposure_intercept, exposure covariates...)`.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = vec!["(Intercept)".to_string(), "x_c".to_string()];
        names.extend(self.response_covariates.iter().cloned());
        names.push("exposure:(Intercept)".to_string());
        names.extend(self.exposure_covariates.iter().map(|c| format!("exposure:{c}")));
        names
    }
}

/// Observed quantities of the joint model.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussianData {
    pub y: Vec<f64>,
    pub proxy: Vec<u8>,
    /// `n x (2 + k)`: intercept, a placeholder column for `x_c`, covariates.
    response_design: DMatrix<f64>,
    /// `n x (1 + m)`: intercept and covariates.
    exposure_design: DMatrix<f64>,
}

impl LatentGaussianData {
    pub fn from_dataset(dataset: &Dataset, model: &LatentGaussianModel) -> Result<Self> {
        let n = dataset.n();
        let proxy: Vec<u8> = dataset
            .mc_observed()
            .iter()
            .enumerate()
            .map(|(i, w)| w.ok_or_else(|| Error::NotSupported(format!("missing dichotomised proxy at row {i}"))))
            .collect::<Result<_>>()?;
        let k = model.response_covariates.len();
        let m = model.exposure_covariates.len();
        let mut response_design = DMatrix::zeros(n, 2 + k);
        response_design.column_mut(0).fill(1.0);
        for (j, name) in model.response_covariates.iter().enumerate() {
            response_design.column_mut(2 + j).copy_from_slice(dataset.column(name)?);
        }
        let mut exposure_design = DMatrix::zeros(n, 1 + m);
        exposure_design.column_mut(0).fill(1.0);
        for (j, name) in model.exposure_covariates.iter().enumerate() {
            exposure_design.column_mut(1 + j).copy_from_slice(dataset.column(name)?);
        }
        let data = Self {
            y: dataset.response().to_vec(),
            proxy,
            response_design,
            exposure_design,
        };
        let p = data.n_parameters();
        if n < p + 2 {
            return Err(Error::InvalidArgument(format!("{n} rows for {p} parameters")));
        }
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn n_response(&self) -> usize {
        self.response_design.ncols()
    }

    fn n_exposure(&self) -> usize {
        self.exposure_design.ncols()
    }

    /// Number of non-field parameters.
    pub fn n_parameters(&self) -> usize {
        self.n_response() + self.n_exposure()
    }
}

/// Residual precisions of the response and exposure equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Precisions {
    pub response: f64,
    pub exposure: f64,
}

/// Negative Hessian in arrow form: the field block is diagonal and each field
/// entry couples only to the parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockHessian {
    pub field_diagonal: Vec<f64>,
    /// `n x q` cross derivatives between field entries and parameters.
    pub coupling: DMatrix<f64>,
    pub parameters: DMatrix<f64>,
}

impl BlockHessian {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.field_diagonal.len();
        let q = self.parameters.nrows();
        let mut h = DMatrix::zeros(n + q, n + q);
        for i in 0..n {
            h[(i, i)] = self.field_diagonal[i];
        }
        h.view_mut((0, n), (n, q)).copy_from(&self.coupling);
        h.view_mut((n, 0), (q, n)).copy_from(&self.coupling.transpose());
        h.view_mut((n, n), (q, q)).copy_from(&self.parameters);
        h
    }

    /// Factorises `H + ridge * scale * I` through the Schur complement of the field block.
    fn factor(&self, ridge: f64) -> Option<BlockFactor> {
        let scale = self
            .field_diagonal
            .iter()
            .chain(self.parameters.diagonal().iter())
            .fold(1.0_f64, |m, d| m.max(d.abs()));
        let shift = ridge * scale;
        let diag: Vec<f64> = self.field_diagonal.iter().map(|d| d + shift).collect();
        if diag.iter().any(|&d| !(d > 0.0)) {
            return None;
        }
        let q = self.parameters.nrows();
        let mut schur = self.parameters.clone();
        for j in 0..q {
            schur[(j, j)] += shift;
        }
        for (i, &d) in diag.iter().enumerate() {
            let row = self.coupling.row(i);
            for a in 0..q {
                let ra = row[a] / d;
                for b in 0..q {
                    schur[(a, b)] -= ra * row[b];
                }
            }
        }
        let chol = schur.cholesky()?;
        Some(BlockFactor {
            diag,
            coupling: self.coupling.clone(),
            chol,
        })
    }
}

struct BlockFactor {
    diag: Vec<f64>,
    coupling: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl BlockFactor {
    /// Solves `H [dx; dt] = [gx; gt]`.
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.diag.len();
        let q = self.coupling.ncols();
        let gx = rhs.rows(0, n);
        let mut reduced = DVector::from_iterator(q, rhs.rows(n, q).iter().copied());
        for i in 0..n {
            let scaled = gx[i] / self.diag[i];
            for a in 0..q {
                reduced[a] -= self.coupling[(i, a)] * scaled;
            }
        }
        let dt = self.chol.solve(&reduced);
        let mut out = DVector::zeros(n + q);
        for i in 0..n {
            let cross: f64 = (0..q).map(|a| self.coupling[(i, a)] * dt[a]).sum();
            out[i] = (gx[i] - cross) / self.diag[i];
        }
        out.rows_mut(n, q).copy_from(&dt);
        out
    }

    fn log_det(&self) -> f64 {
        self.diag.iter().map(|d| d.ln()).sum::<f64>()
            + 2.0 * self.chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Marginal covariance of the parameter block.
    fn parameter_covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Objective value with its exact gradient and Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct JointObjective {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: BlockHessian,
}

/// `-log d/dt` and curvature of `-ln Phi(t)`.
fn probit_terms(t: f64) -> (f64, f64, f64) {
    let lambda = inverse_mills(t);
    let curvature = (lambda * (t + lambda)).clamp(0.0, 1.0);
    (-log_norm_cdf(t), -lambda, curvature)
}

fn objective_value(latent: &[f64], data: &LatentGaussianData, model: &LatentGaussianModel, hyper: Precisions) -> f64 {
    let n = data.n();
    let pr = data.n_response();
    let pe = data.n_exposure();
    let beta = &latent[n..n + pr];
    let alpha = &latent[n + pr..];
    let mut value = 0.0;
    for i in 0..n {
        let x = latent[i];
        let mut eta = beta[1] * x;
        for j in (0..pr).filter(|&j| j != 1) {
            eta += data.response_design[(i, j)] * beta[j];
        }
        let r = data.y[i] - eta;
        let mut mean_x = 0.0;
        for k in 0..pe {
            mean_x += data.exposure_design[(i, k)] * alpha[k];
        }
        let e = x - mean_x;
        let sign = if data.proxy[i] == 1 { 1.0 } else { -1.0 };
        value += 0.5 * hyper.response * r * r + 0.5 * hyper.exposure * e * e - log_norm_cdf(sign * x / model.measurement_sd);
    }
    value + constants(n, pr, pe, model, hyper)
        + beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * model.coefficient_prior_variance)
        + alpha.iter().map(|a| a * a).sum::<f64>() / (2.0 * model.exposure_prior_variance)
}

fn constants(n: usize, pr: usize, pe: usize, model: &LatentGaussianModel, hyper: Precisions) -> f64 {
    let n = n as f64;
    n * LN_2PI - 0.5 * n * (hyper.response.ln() + hyper.exposure.ln())
        + 0.5 * pr as f64 * (LN_2PI + model.coefficient_prior_variance.ln())
        + 0.5 * pe as f64 * (LN_2PI + model.exposure_prior_variance.ln())
}

/// Negative log joint density of `(y, w_d, x_c, beta, alpha)` given the residual
/// precisions. `latent` is laid out as `[x_c (n), beta, alpha]`.
pub fn joint_neg_log_posterior(
    latent: &[f64],
    data: &LatentGaussianData,
    model: &LatentGaussianModel,
    hyper: Precisions,
) -> Result<JointObjective> {
    let n = data.n();
    let pr = data.n_response();
    let pe = data.n_exposure();
    let q = pr + pe;
    if latent.len() != n + q {
        return Err(Error::DimensionMismatch(format!("latent vector of {} for {}", latent.len(), n + q)));
    }
    if latent.iter().any(|v| !v.is_finite()) || !(hyper.response > 0.0 && hyper.exposure > 0.0) {
        return Err(Error::NonFiniteInput("latent vector or precisions".into()));
    }
    let beta = &latent[n..n + pr];
    let alpha = &latent[n + pr..];
    let su = model.measurement_sd;
    let (tr, tx) = (hyper.response, hyper.exposure);

    let mut value = 0.0;
    let mut gradient = DVector::zeros(n + q);
    let mut field_diagonal = vec![0.0; n];
    let mut coupling = DMatrix::zeros(n, q);
    let mut parameters = DMatrix::zeros(q, q);
    let mut row = vec![0.0; pr];

    for i in 0..n {
        let x = latent[i];
        for j in 0..pr {
            row[j] = if j == 1 { x } else { data.response_design[(i, j)] };
        }
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let r = data.y[i] - eta;
        let mean_x: f64 = (0..pe).map(|k| data.exposure_design[(i, k)] * alpha[k]).sum();
        let e = x - mean_x;
        let sign = if data.proxy[i] == 1 { 1.0 } else { -1.0 };
        let (nll, slope, curvature) = probit_terms(sign * x / su);

        value += 0.5 * tr * r * r + 0.5 * tx * e * e + nll;
        gradient[i] = -tr * beta[1] * r + sign * slope / su + tx * e;
        field_diagonal[i] = tr * beta[1] * beta[1] + curvature / (su * su) + tx;

        for j in 0..pr {
            gradient[n + j] -= tr * r * row[j];
            coupling[(i, j)] = tr * beta[1] * row[j] - if j == 1 { tr * r } else { 0.0 };
            for l in 0..pr {
                parameters[(j, l)] += tr * row[j] * row[l];
            }
        }
        for k in 0..pe {
            let zk = data.exposure_design[(i, k)];
            gradient[n + pr + k] -= tx * e * zk;
            coupling[(i, pr + k)] = -tx * zk;
            for l in 0..pe {
                parameters[(pr + k, pr + l)] += tx * zk * data.exposure_design[(i, l)];
            }
        }
    }
    for j in 0..pr {
        value += beta[j] * beta[j] / (2.0 * model.coefficient_prior_variance);
        gradient[n + j] += beta[j] / model.coefficient_prior_variance;
        parameters[(j, j)] += 1.0 / model.coefficient_prior_variance;
    }
    for k in 0..pe {
        value += alpha[k] * alpha[k] / (2.0 * model.exposure_prior_variance);
        gradient[n + pr + k] += alpha[k] / model.exposure_prior_variance;
        parameters[(pr + k, pr + k)] += 1.0 / model.exposure_prior_variance;
    }
    value += constants(n, pr, pe, model, hyper);
    if !value.is_finite() {
        return Err(Error::NonFiniteInput("joint objective".into()));
    }
    Ok(JointObjective {
        value,
        gradient,
        hessian: BlockHessian {
            field_diagonal,
            coupling,
            parameters,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointNewtonOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub initial_ridge: f64,
    pub max_ridge: f64,
}

impl Default for JointNewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-9,
            initial_ridge: 1e-8,
            max_ridge: 1e2,
        }
    }
}

/// Laplace fit at one pair of residual precisions.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPointFit {
    pub precisions: Precisions,
    pub mode: Vec<f64>,
    /// Posterior covariance of `(beta, alpha)`.
    pub parameter_covariance: DMatrix<f64>,
    pub log_marginal_likelihood: f64,
    pub iterations: usize,
    /// Largest ridge needed during the Newton iterations.
    pub ridge: f64,
}

fn factor_with_ridge(hessian: &BlockHessian, opts: &JointNewtonOptions) -> Result<(BlockFactor, f64)> {
    if let Some(f) = hessian.factor(0.0) {
        return Ok((f, 0.0));
    }
    let mut ridge = opts.initial_ridge;
    while ridge <= opts.max_ridge {
        if let Some(f) = hessian.factor(ridge) {
            return Ok((f, ridge));
        }
        ridge *= 10.0;
    }
    Err(Error::HessianNotPd { ridge: opts.max_ridge })
}

fn least_squares(design: &DMatrix<f64>, target: &[f64]) -> Result<DVector<f64>> {
    let xtx = design.transpose() * design;
    let xty = design.transpose() * DVector::from_column_slice(target);
    xtx.cholesky()
        .map(|c| c.solve(&xty))
        .ok_or_else(|| Error::SingularSystem("starting-value regression".into()))
}

/// Field starts at the conditional mean of a unit-variance liability given its sign.
fn starting_point(data: &LatentGaussianData, model: &LatentGaussianModel) -> Result<Vec<f64>> {
    let n = data.n();
    let su = model.measurement_sd;
    let shift = (2.0 / std::f64::consts::PI).sqrt() / (1.0 + su * su).sqrt();
    let field: Vec<f64> = data.proxy.iter().map(|&w| if w == 1 { shift } else { -shift }).collect();
    let mut design = data.response_design.clone();
    design.column_mut(1).copy_from_slice(&field);
    let beta = least_squares(&design, &data.y)?;
    let alpha = least_squares(&data.exposure_design, &field)?;
    let mut start = field;
    start.extend(beta.iter());
    start.extend(alpha.iter());
    debug_assert_eq!(start.len(), n + data.n_parameters());
    Ok(start)
}

/// Damped Newton on the joint objective at fixed precisions.
pub fn fit_at_precisions(
    data: &LatentGaussianData,
    model: &LatentGaussianModel,
    hyper: Precisions,
    opts: &JointNewtonOptions,
) -> Result<GridPointFit> {
    let mut latent = DVector::from_vec(starting_point(data, model)?);
    let mut current = joint_neg_log_posterior(latent.as_slice(), data, model, hyper)?;
    let mut max_ridge = 0.0_f64;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    while iterations < opts.max_iterations {
        grad_norm = current.gradient.amax();
        if grad_norm < opts.gradient_tolerance {
            converged = true;
            break;
        }
        let (factor, ridge) = factor_with_ridge(&current.hessian, opts)?;
        max_ridge = max_ridge.max(ridge);
        let step = factor.solve(&current.gradient);
        iterations += 1;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &latent - &step * t;
            let v = objective_value(candidate.as_slice(), data, model, hyper);
            if v.is_finite() && v <= current.value {
                accepted = Some(candidate);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            converged = grad_norm < opts.gradient_tolerance.sqrt();
            break;
        };
        let moved = (&next - &latent).amax();
        latent = next;
        current = joint_neg_log_posterior(latent.as_slice(), data, model, hyper)?;
        if moved < 1e-13 {
            grad_norm = current.gradient.amax();
            converged = grad_norm < opts.gradient_tolerance.sqrt();
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            gradient_norm: grad_norm,
        });
    }
    let factor = current
        .hessian
        .factor(0.0)
        .ok_or(Error::HessianNotPd { ridge: 0.0 })?;
    let dim = latent.len() as f64;
    let log_marginal_likelihood = -current.value + 0.5 * dim * LN_2PI - 0.5 * factor.log_det();
    Ok(GridPointFit {
        precisions: hyper,
        mode: latent.iter().copied().collect(),
        parameter_covariance: factor.parameter_covariance(),
        log_marginal_likelihood,
        iterations,
        ridge: max_ridge,
    })
}

/// One evaluated grid point with its normalised weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGridPoint {
    pub fit: GridPointFit,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussianFit {
    /// `(beta, alpha)` names in latent-vector order.
    pub parameter_names: Vec<String>,
    /// Joint mode at the grid point with the largest weight.
    pub mode: Vec<f64>,
    pub grid: Vec<WeightedGridPoint>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub quantile_levels: Vec<f64>,
    /// `quantiles[parameter][level]`, from the grid mixture of Gaussian marginals.
    pub quantiles: Vec<Vec<f64>>,
    pub warnings: Vec<Warning>,
}

impl LatentGaussianFit {
    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.parameter_names.iter().position(|n| n == name)
    }

    /// Grid mixture of the Gaussian marginals of one parameter.
    pub fn mixture(&self, parameter: usize) -> Vec<Component> {
        self.grid
            .iter()
            .map(|g| Component {
                weight: g.weight,
                marginal: Marginal::Gaussian {
                    mean: g.fit.mode[g.fit.mode.len() - self.parameter_names.len() + parameter],
                    sd: g.fit.parameter_covariance[(parameter, parameter)].sqrt(),
                },
            })
            .collect()
    }
}

fn log_grid(scale: ResidualScale, center: f64) -> Vec<f64> {
    match scale {
        ResidualScale::Fixed { sd } => vec![-2.0 * sd.ln()],
        ResidualScale::Grid { points: 1, .. } => vec![center],
        ResidualScale::Grid { points, half_width } => (0..points)
            .map(|k| center - half_width + 2.0 * half_width * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Moment-based log-precision starts: the residual variance of `y` regressed on
/// the proxy and covariates, and the measurement variance for the exposure.
fn moment_centers(data: &LatentGaussianData, model: &LatentGaussianModel) -> Result<(f64, f64)> {
    let mut design = data.response_design.clone();
    let proxy: Vec<f64> = data.proxy.iter().map(|&w| f64::from(w)).collect();
    design.column_mut(1).copy_from_slice(&proxy);
    let coef = least_squares(&design, &data.y)?;
    let fitted = &design * coef;
    let n = data.n() as f64;
    let rss: f64 = data.y.iter().zip(fitted.iter()).map(|(y, f)| (y - f).powi(2)).sum();
    let dof = (n - design.ncols() as f64).max(1.0);
    let variance = (rss / dof).max(f64::MIN_POSITIVE);
    Ok((-variance.ln(), -2.0 * model.measurement_sd.ln()))
}

/// Joint Laplace fit averaged over the residual log-precision grid with
/// evidence weights under a flat prior on the grid.
pub fn fit_latent_gaussian(dataset: &Dataset, model: &LatentGaussianModel) -> Result<LatentGaussianFit> {
    model.validate()?;
    let data = LatentGaussianData::from_dataset(dataset, model)?;
    fit_latent_gaussian_data(&data, model, &JointNewtonOptions::default())
}

pub fn fit_latent_gaussian_data(
    data: &LatentGaussianData,
    model: &LatentGaussianModel,
    opts: &JointNewtonOptions,
) -> Result<LatentGaussianFit> {
    let (response_center, exposure_center) = moment_centers(data, model)?;
    let mut points = Vec::new();
    for &lr in &log_grid(model.response_scale, response_center) {
        for &lx in &log_grid(model.exposure_scale, exposure_center) {
            points.push(Precisions {
                response: lr.exp(),
                exposure: lx.exp(),
            });
        }
    }
    let fits: Vec<GridPointFit> = points
        .par_iter()
        .map(|&hyper| fit_at_precisions(data, model, hyper, opts))
        .collect::<Result<_>>()?;

    let log_ev: Vec<f64> = fits.iter().map(|f| f.log_marginal_likelihood).collect();
    let total = log_sum_exp(&log_ev);
    let grid: Vec<WeightedGridPoint> = fits
        .into_iter()
        .zip(&log_ev)
        .map(|(fit, lw)| WeightedGridPoint {
            weight: (lw - total).exp(),
            fit,
        })
        .collect();

    let names = model.parameter_names();
    let mut warnings = Vec::new();
    let worst_ridge = grid.iter().map(|g| g.fit.ridge).fold(0.0_f64, f64::max);
    if worst_ridge > 0.0 {
        warnings.push(Warning::Instability {
            ridge: worst_ridge,
            iterations: grid.iter().map(|g| g.fit.iterations).max().unwrap_or(0),
        });
    }
    let best = grid
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.weight.total_cmp(&b.1.weight).then(b.0.cmp(&a.0)))
        .map(|(_, g)| g.fit.mode.clone())
        .unwrap_or_default();
    let mut fit = LatentGaussianFit {
        parameter_names: names,
        mode: best,
        grid,
        means: Vec::new(),
        sds: Vec::new(),
        quantile_levels: model.quantile_levels.clone(),
        quantiles: Vec::new(),
        warnings,
    };
    for j in 0..fit.parameter_names.len() {
        let mixture = fit.mixture(j);
        fit.means.push(mixture_mean(&mixture));
        fit.sds.push(mixture_sd(&mixture));
        let qs = model
            .quantile_levels
            .iter()
            .map(|&a| mixture_quantile(&mixture, a))
            .collect::<Result<Vec<_>>>()?;
        fit.quantiles.push(qs);
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::fit_conjugate_linear;
    use crate::model::NoisePrior;
    use crate::rng::StreamFactory;
    use crate::simulate::simulate_latent_gaussian;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn small_problem() -> (Dataset, LatentGaussianModel) {
        let sample = simulate_latent_gaussian(40, 1.0, 1.0, 1.0, 1.0, 1.0, 8).unwrap();
        let z: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64 / 11.0 - 0.5).collect();
        let data = sample.dataset.with_column("z", z).unwrap();
        let model = LatentGaussianModel {
            response_covariates: vec!["z".into()],
            exposure_covariates: vec!["z".into()],
            ..LatentGaussianModel::default()
        };
        (data, model)
    }

    #[test]
    fn probit_probability_examples() {
        assert_eq!(probit_misclass_probability(0.0, 1.0).unwrap(), 0.5);
        assert_relative_eq!(probit_misclass_probability(1.0, 1.0).unwrap(), 0.841345, epsilon = 1e-6);
        assert_relative_eq!(probit_misclass_probability(-1.0, 1.0).unwrap(), 0.158655, epsilon = 1e-6);
        assert!(probit_misclass_probability(1.0, 0.0).is_err());
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let (dataset, model) = small_problem();
        let data = LatentGaussianData::from_dataset(&dataset, &model).unwrap();
        let dim = data.n() + data.n_parameters();
        let mut rng = StreamFactory::new(17).child("fd", 0).stream(0);
        let h = 1e-6;
        for _ in 0..20 {
            let point: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let hyper = Precisions {
                response: rng.random_range(0.3..3.0),
                exposure: rng.random_range(0.3..3.0),
            };
            let obj = joint_neg_log_posterior(&point, &data, &model, hyper).unwrap();
            let dense = obj.hessian.to_dense();
            for k in 0..dim {
                let mut up = point.clone();
                let mut down = point.clone();
                up[k] += h;
                down[k] -= h;
                let fu = joint_neg_log_posterior(&up, &data, &model, hyper).unwrap();
                let fd = joint_neg_log_posterior(&down, &data, &model, hyper).unwrap();
                let numeric = (fu.value - fd.value) / (2.0 * h);
                let err = (numeric - obj.gradient[k]).abs() / obj.gradient[k].abs().max(1.0);
                assert!(err < 1e-5, "gradient {k}: {numeric} vs {}", obj.gradient[k]);
                for l in 0..dim {
                    let numeric = (fu.gradient[l] - fd.gradient[l]) / (2.0 * h);
                    let err = (numeric - dense[(k, l)]).abs() / dense[(k, l)].abs().max(1.0);
                    assert!(err < 1e-5, "hessian ({k}, {l}): {numeric} vs {}", dense[(k, l)]);
                }
            }
        }
    }

    #[test]
    fn field_entries_never_couple_to_each_other() {
        let (dataset, model) = small_problem();
        let data = LatentGaussianData::from_dataset(&dataset, &model).unwrap();
        let point = starting_point(&data, &model).unwrap();
        let hyper = Precisions {
            response: 1.0,
            exposure: 1.0,
        };
        let dense = joint_neg_log_posterior(&point, &data, &model, hyper).unwrap().hessian.to_dense();
        for i in 0..data.n() {
            for j in (0..data.n()).filter(|&j| j != i) {
                assert_eq!(dense[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn response_block_alone_is_the_known_variance_linear_fit() {
        // With the field held at the truth, the response coefficients solve the
        // Gaussian block only.
        let sample = simulate_latent_gaussian(60, 1.0, 1.0, 1.0, 1.0, 1.0, 3).unwrap();
        let model = LatentGaussianModel::default();
        let data = LatentGaussianData::from_dataset(&sample.dataset, &model).unwrap();
        let hyper = Precisions {
            response: 1.0 / 0.8,
            exposure: 1.0,
        };
        let mut point = sample.true_exposure.clone();
        point.extend([0.0; 3]);
        let obj = joint_neg_log_posterior(&point, &data, &model, hyper).unwrap();
        let n = data.n();
        let block = obj.hessian.parameters.view((0, 0), (2, 2)).into_owned();
        let grad = obj.gradient.rows(n, 2).into_owned();
        let minimizer = -block.cholesky().unwrap().solve(&grad);

        let mut design = DMatrix::zeros(n, 2);
        design.column_mut(0).fill(1.0);
        design.column_mut(1).copy_from_slice(&sample.true_exposure);
        let direct = fit_conjugate_linear(
            &design,
            sample.dataset.response(),
            &[1000.0, 1000.0],
            NoisePrior::Fixed { variance: 0.8 },
        )
        .unwrap();
        for j in 0..2 {
            assert_relative_eq!(minimizer[j], direct.means[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn schur_solve_matches_dense_solve() {
        let (dataset, model) = small_problem();
        let data = LatentGaussianData::from_dataset(&dataset, &model).unwrap();
        let hyper = Precisions {
            response: 0.7,
            exposure: 1.4,
        };
        let point = fit_at_precisions(&data, &model, hyper, &JointNewtonOptions::default()).unwrap().mode;
        let obj = joint_neg_log_posterior(&point, &data, &model, hyper).unwrap();
        let factor = obj.hessian.factor(0.0).unwrap();
        let fast = factor.solve(&obj.gradient);
        let dense = obj.hessian.to_dense();
        let slow = dense.clone().lu().solve(&obj.gradient).unwrap();
        assert!((fast - slow).amax() < 1e-9);
        assert_relative_eq!(factor.log_det(), dense.determinant().ln(), epsilon = 1e-8);
    }

    #[test]
    fn grid_weights_are_normalised() {
        let (dataset, model) = small_problem();
        let fit = fit_latent_gaussian(&dataset, &model).unwrap();
        assert_eq!(fit.grid.len(), 49);
        let total: f64 = fit.grid.iter().map(|g| g.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(fit.quantiles.len(), fit.parameter_names.len());
        let j = fit.parameter_index("x_c").unwrap();
        assert!(fit.quantiles[j][0] < fit.means[j] && fit.means[j] < fit.quantiles[j][2]);
    }

    #[test]
    fn permuting_rows_leaves_the_fit_unchanged() {
        let (dataset, model) = small_problem();
        let n = dataset.n();
        let order: Vec<usize> = (0..n).map(|i| (i * 13 + 5) % n).collect();
        let y: Vec<f64> = order.iter().map(|&i| dataset.response()[i]).collect();
        let w: Vec<Option<u8>> = order.iter().map(|&i| dataset.mc_observed()[i]).collect();
        let z: Vec<f64> = order.iter().map(|&i| dataset.column("z").unwrap()[i]).collect();
        let permuted = Dataset::new(y, w).unwrap().with_column("z", z).unwrap();
        let a = fit_latent_gaussian(&dataset, &model).unwrap();
        let b = fit_latent_gaussian(&permuted, &model).unwrap();
        for j in 0..a.means.len() {
            assert!((a.means[j] - b.means[j]).abs() < 1e-10);
            assert!((a.sds[j] - b.sds[j]).abs() < 1e-10);
            for (qa, qb) in a.quantiles[j].iter().zip(&b.quantiles[j]) {
                assert!((qa - qb).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn missing_proxy_is_rejected() {
        let data = Dataset::new(vec![1.0, 2.0, 0.5, 0.1, 0.3], vec![Some(1), None, Some(0), Some(1), Some(0)]).unwrap();
        assert!(matches!(
            fit_latent_gaussian(&data, &LatentGaussianModel::default()),
            Err(Error::NotSupported(_))
        ));
    }
}
