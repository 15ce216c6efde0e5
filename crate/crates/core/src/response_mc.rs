//! Misclassified binary responses through the adjusted link
//! `p_s = (1 - spec) + (sens - (1 - spec)) expit(eta)`, optionally averaged
//! over a grid of plausible sensitivity and specificity values.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::{design_matrix, fit_laplace_glm, ConditionalFit, LaplaceFamily, Marginal};
use crate::mixture::{self, Component};
use crate::model::{Dataset, Family, GlmSpec};
use crate::special::{beta_quantile, expit, norm_pdf};
use crate::warning::Warning;

/// Largest share of grid weight that may be lost to failed fits.
const MAX_LOST_WEIGHT: f64 = 0.05;
const Z_975: f64 = 1.959_963_984_540_054;

fn check_sens_spec(pi00: f64, pi11: f64) -> Result<()> {
    if !(pi00 + pi11 > 1.0) || !(0.0..=1.0).contains(&pi00) || !(0.0..=1.0).contains(&pi11) {
        return Err(Error::InvalidSensSpec { pi00, pi11 });
    }
    Ok(())
}

/// Inverse of the adjusted link.
pub fn sslogit_inverse(eta: f64, pi00: f64, pi11: f64) -> Result<f64> {
    check_sens_spec(pi00, pi11)?;
    Ok((1.0 - pi00) + (pi11 - (1.0 - pi00)) * expit(eta))
}

/// `Pr(s = 1) = pi11 p_y + (1 - pi00)(1 - p_y)`.
pub fn marginal_success_probability(p_y: f64, pi00: f64, pi11: f64) -> f64 {
    pi11 * p_y + (1.0 - pi00) * (1.0 - p_y)
}

/// Recovers `p_y` from `Pr(s = 1)`.
pub fn true_success_probability(p_s: f64, pi00: f64, pi11: f64) -> Result<f64> {
    check_sens_spec(pi00, pi11)?;
    Ok((p_s - (1.0 - pi00)) / (pi11 - (1.0 - pi00)))
}

/// Posterior summary of a success probability `expit(a' beta)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilitySummary {
    pub mean: f64,
    pub sd: f64,
    pub levels: Vec<f64>,
    pub quantiles: Vec<f64>,
}

/// Mean and standard deviation of `expit(eta)` for Gaussian `eta`, by quadrature.
fn expit_moments(mean: f64, sd: f64) -> (f64, f64) {
    if sd == 0.0 {
        return (expit(mean), 0.0);
    }
    const STEPS: usize = 2400;
    let h = 24.0 / STEPS as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for k in 0..=STEPS {
        let t = -12.0 + h * k as f64;
        let end = if k == 0 || k == STEPS { 0.5 } else { 1.0 };
        let w = end * h * norm_pdf(t);
        let p = expit(mean + sd * t);
        m1 += w * p;
        m2 += w * p * p;
    }
    (m1, (m2 - m1 * m1).max(0.0).sqrt())
}

/// Back-transformed posterior of `expit(row' beta)`; quantiles map exactly through `expit`.
pub fn success_probability_summary(fit: &ConditionalFit, row: &[f64], levels: &[f64]) -> Result<ProbabilitySummary> {
    let eta = fit.linear_combination(row)?;
    let (mean, sd) = match eta {
        Marginal::Gaussian { mean, sd } => expit_moments(mean, sd),
        Marginal::StudentT { .. } => {
            return Err(Error::NotSupported("probability summaries need a Gaussian linear predictor".into()))
        }
    };
    Ok(ProbabilitySummary {
        mean,
        sd,
        levels: levels.to_vec(),
        quantiles: levels.iter().map(|&a| expit(eta.quantile(a))).collect(),
    })
}

/// Fit of the adjusted-link model with any warnings it raised.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseFit {
    pub fit: ConditionalFit,
    pub warnings: Vec<Warning>,
}

fn instability(fit: &ConditionalFit) -> Option<Warning> {
    (fit.diagnostics.ridge > 0.0).then_some(Warning::Instability {
        ridge: fit.diagnostics.ridge,
        iterations: fit.iterations_used,
    })
}

/// Binary-response regression with known specificity `pi00` and sensitivity `pi11`.
///
/// The observed covariates in `spec` form the design; an error-prone
/// covariate, if named, enters through its observed values.
pub fn fit_response_mc(dataset: &Dataset, spec: &GlmSpec, pi00: f64, pi11: f64) -> Result<ResponseFit> {
    check_sens_spec(pi00, pi11)?;
    let adjusted = GlmSpec {
        family: Family::BernoulliSslogit { pi00, pi11 },
        ..spec.clone()
    };
    dataset.validate_for(&adjusted)?;
    let design = design_matrix(dataset, &adjusted, None)?;
    let fit = fit_laplace_glm(
        &design,
        dataset.response(),
        LaplaceFamily::Sslogit { pi00, pi11 },
        &adjusted.prior_variances()?,
    )?;
    let warnings = instability(&fit).into_iter().collect();
    Ok(ResponseFit { fit, warnings })
}

/// Weighted `(specificity, sensitivity)` support points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensSpecGrid {
    /// `(pi00, pi11)` pairs.
    pub points: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
}

/// Beta parameters with the mean at the interval midpoint and standard
/// deviation a quarter of the width over 1.96.
fn beta_from_interval(lo: f64, hi: f64) -> Result<(f64, f64)> {
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::InvalidArgument(format!("probability interval ({lo}, {hi}) must lie inside (0, 1)")));
    }
    let mean = 0.5 * (lo + hi);
    let sd = (hi - lo) / (2.0 * Z_975);
    let concentration = mean * (1.0 - mean) / (sd * sd) - 1.0;
    if !(concentration > 0.0) {
        return Err(Error::InvalidArgument(format!("interval ({lo}, {hi}) is too wide for a Beta law")));
    }
    Ok((mean * concentration, (1.0 - mean) * concentration))
}

impl SensSpecGrid {
    pub fn single(pi00: f64, pi11: f64) -> Result<Self> {
        check_sens_spec(pi00, pi11)?;
        Ok(Self {
            points: vec![(pi00, pi11)],
            weights: vec![1.0],
        })
    }

    /// Tensor grid from 95% intervals for specificity and sensitivity.
    ///
    /// Each axis gets a Beta law matched to its interval, discretised at the
    /// quantiles `(k + 1/2) / resolution`, each node carrying equal mass.
    pub fn from_intervals(specificity: (f64, f64), sensitivity: (f64, f64), resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidArgument("grid resolution must be positive".into()));
        }
        let nodes = |(lo, hi): (f64, f64)| -> Result<Vec<f64>> {
            let (a, b) = beta_from_interval(lo, hi)?;
            Ok((0..resolution)
                .map(|k| beta_quantile((k as f64 + 0.5) / resolution as f64, a, b))
                .collect())
        };
        let spec_nodes = nodes(specificity)?;
        let sens_nodes = nodes(sensitivity)?;
        let mut points = Vec::with_capacity(resolution * resolution);
        for &pi00 in &spec_nodes {
            for &pi11 in &sens_nodes {
                check_sens_spec(pi00, pi11)?;
                points.push((pi00, pi11));
            }
        }
        let weight = 1.0 / points.len() as f64;
        let weights = vec![weight; points.len()];
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Quantity whose posterior is merged across the grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Coefficient(usize),
    /// `expit(row' beta)` for a design row (intercept included).
    SuccessProbability(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPointFit {
    pub pi00: f64,
    pub pi11: f64,
    pub weight: f64,
    pub fit: ConditionalFit,
    /// Law of the target on the linear-predictor or coefficient scale.
    pub marginal: Marginal,
    pub target_mean: f64,
    pub target_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedPosterior {
    pub target: Target,
    pub points: Vec<GridPointFit>,
    pub mean: f64,
    pub sd: f64,
    pub levels: Vec<f64>,
    pub quantiles: Vec<f64>,
    /// Evaluation grid and merged density.
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedSummary {
    pub mean: f64,
    pub sd: f64,
    #[serde(rename = "q0.025")]
    pub q025: f64,
    #[serde(rename = "q0.5")]
    pub q50: f64,
    #[serde(rename = "q0.975")]
    pub q975: f64,
}

impl MergedPosterior {
    fn is_probability(&self) -> bool {
        matches!(self.target, Target::SuccessProbability(_))
    }

    fn components(&self) -> Vec<Component> {
        self.points
            .iter()
            .map(|p| Component {
                weight: p.weight,
                marginal: p.marginal,
            })
            .collect()
    }

    /// Exact quantile of the merged law.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        let q = mixture::mixture_quantile(&self.components(), alpha)?;
        Ok(if self.is_probability() { expit(q) } else { q })
    }

    /// Trapezoid integral of the merged density over its evaluation grid.
    pub fn density_mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    pub fn summary(&self) -> Result<MergedSummary> {
        Ok(MergedSummary {
            mean: self.mean,
            sd: self.sd,
            q025: self.quantile(0.025)?,
            q50: self.quantile(0.5)?,
            q975: self.quantile(0.975)?,
        })
    }

    pub fn write_density_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let fail = |e: csv::Error| Error::InvalidArgument(format!("writing density: {e}"));
        out.write_record(["quantity_value", "density"]).map_err(fail)?;
        for (x, d) in self.grid.iter().zip(&self.density) {
            out.write_record([x.to_string(), d.to_string()]).map_err(fail)?;
        }
        out.flush().map_err(|e| Error::InvalidArgument(format!("writing density: {e}")))
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

const DENSITY_POINTS: usize = 4001;
const DENSITY_TAIL: f64 = 1e-10;

/// Fits the adjusted model at every grid point and merges the target's posteriors.
pub fn marginalize_sens_spec(
    dataset: &Dataset,
    spec: &GlmSpec,
    grid: &SensSpecGrid,
    target: &Target,
) -> Result<MergedPosterior> {
    if grid.is_empty() || grid.points.len() != grid.weights.len() {
        return Err(Error::InvalidArgument("grid needs matching, nonempty points and weights".into()));
    }
    for &(pi00, pi11) in &grid.points {
        check_sens_spec(pi00, pi11)?;
    }
    let fits: Vec<Result<ResponseFit>> = grid
        .points
        .par_iter()
        .map(|&(pi00, pi11)| fit_response_mc(dataset, spec, pi00, pi11))
        .collect();

    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    let mut lost_weight = 0.0;
    let mut lost_points = 0;
    let mut max_ridge: Option<Warning> = None;
    for ((&(pi00, pi11), &weight), fit) in grid.points.iter().zip(&grid.weights).zip(fits) {
        match fit {
            Ok(ResponseFit { fit, warnings: w }) => {
                for warning in w {
                    if let Warning::Instability { ridge, .. } = warning {
                        let larger = match &max_ridge {
                            Some(Warning::Instability { ridge: r, .. }) => ridge > *r,
                            _ => true,
                        };
                        if larger {
                            max_ridge = Some(warning);
                        }
                    }
                }
                kept.push((pi00, pi11, weight, fit));
            }
            Err(e) if crate::covariate_mc::is_fit_failure(&e) => {
                lost_weight += weight;
                lost_points += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let total_weight: f64 = grid.weights.iter().sum();
    if lost_weight / total_weight >= MAX_LOST_WEIGHT || kept.is_empty() {
        return Err(Error::GridFitFailures {
            lost_weight: lost_weight / total_weight,
        });
    }
    if lost_points > 0 {
        warnings.push(Warning::GridPointsDropped {
            points: lost_points,
            lost_weight: lost_weight / total_weight,
        });
    }
    warnings.extend(max_ridge);
    let kept_weight: f64 = kept.iter().map(|k| k.2).sum();

    let points: Vec<GridPointFit> = kept
        .into_iter()
        .map(|(pi00, pi11, weight, fit)| {
            let marginal = match target {
                Target::Coefficient(k) => *fit
                    .marginals
                    .get(*k)
                    .ok_or_else(|| Error::DimensionMismatch(format!("coefficient {k}")))?,
                Target::SuccessProbability(row) => fit.linear_combination(row)?,
            };
            let (target_mean, target_sd) = match target {
                Target::Coefficient(_) => (marginal.mean(), marginal.sd()),
                Target::SuccessProbability(_) => expit_moments(marginal.mean(), marginal.sd()),
            };
            Ok(GridPointFit {
                pi00,
                pi11,
                weight: weight / kept_weight,
                fit,
                marginal,
                target_mean,
                target_sd,
            })
        })
        .collect::<Result<_>>()?;

    let mean: f64 = points.iter().map(|p| p.weight * p.target_mean).sum();
    let variance: f64 = points
        .iter()
        .map(|p| p.weight * (p.target_sd.powi(2) + (p.target_mean - mean).powi(2)))
        .sum();

    let components: Vec<Component> = points
        .iter()
        .map(|p| Component {
            weight: p.weight,
            marginal: p.marginal,
        })
        .collect();
    let lo = mixture::mixture_quantile(&components, DENSITY_TAIL)?;
    let hi = mixture::mixture_quantile(&components, 1.0 - DENSITY_TAIL)?;
    let step = (hi - lo) / (DENSITY_POINTS - 1) as f64;
    let scale_grid: Vec<f64> = (0..DENSITY_POINTS).map(|k| lo + step * k as f64).collect();
    let (eval_grid, density) = match target {
        Target::Coefficient(_) => {
            let density = scale_grid.iter().map(|&x| mixture::mixture_pdf(&components, x)).collect();
            (scale_grid, density)
        }
        Target::SuccessProbability(_) => {
            // change of variables p = expit(eta), dp/deta = p (1 - p)
            let p_grid: Vec<f64> = scale_grid.iter().map(|&e| expit(e)).collect();
            let density = scale_grid
                .iter()
                .zip(&p_grid)
                .map(|(&e, &p)| mixture::mixture_pdf(&components, e) / (p * (1.0 - p)))
                .collect();
            (p_grid, density)
        }
    };

    let mut merged = MergedPosterior {
        target: target.clone(),
        points,
        mean,
        sd: variance.sqrt(),
        levels: crate::covariate_mc::DEFAULT_QUANTILE_LEVELS.to_vec(),
        quantiles: Vec::new(),
        grid: eval_grid,
        density,
        warnings,
    };
    merged.quantiles = merged
        .levels
        .iter()
        .map(|&a| merged.quantile(a))
        .collect::<Result<_>>()?;
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate_response_mc, simulate_response_regression};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn inverse_link_examples() {
        assert_relative_eq!(sslogit_inverse(0.0, 0.90, 0.95).unwrap(), 0.525, epsilon = 1e-15);
        for eta in [-7.0, -0.3, 0.0, 2.5] {
            assert_eq!(sslogit_inverse(eta, 1.0, 1.0).unwrap(), expit(eta));
        }
        assert_relative_eq!(sslogit_inverse(-800.0, 0.90, 0.95).unwrap(), 0.10, epsilon = 1e-15);
        assert_eq!(
            sslogit_inverse(0.0, 0.4, 0.6),
            Err(Error::InvalidSensSpec { pi00: 0.4, pi11: 0.6 })
        );
    }

    #[test]
    fn marginal_probability_examples() {
        assert_relative_eq!(marginal_success_probability(0.10, 0.90, 0.95), 0.185, epsilon = 1e-15);
        assert_eq!(marginal_success_probability(0.0, 1.0, 0.7), 0.0);
        assert_relative_eq!(true_success_probability(0.185, 0.90, 0.95).unwrap(), 0.10, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn inverse_link_stays_inside_its_range(
            eta in -20.0..20.0f64,
            pi00 in 0.55..0.999f64,
            pi11 in 0.55..0.999f64,
        ) {
            let p = sslogit_inverse(eta, pi00, pi11).unwrap();
            prop_assert!(p > 1.0 - pi00 && p < pi11);
            prop_assert!(sslogit_inverse(eta + 0.01, pi00, pi11).unwrap() > p);
        }

        #[test]
        fn marginal_probability_round_trips(p_y in 0.0..1.0f64, pi00 in 0.5..1.0f64, pi11 in 0.51..1.0f64) {
            let p_s = marginal_success_probability(p_y, pi00, pi11);
            let back = true_success_probability(p_s, pi00, pi11).unwrap();
            prop_assert!((back - p_y).abs() < 1e-14);
        }
    }

    #[test]
    fn perfect_classification_reproduces_logistic_regression() {
        let data = simulate_response_regression(400, -0.5, 0.8, 0.9, 0.9, 3).unwrap();
        let spec = GlmSpec::new(Family::BernoulliLogit, "s").with_covariates(["z"]);
        let adjusted = fit_response_mc(&data, &spec, 1.0, 1.0).unwrap().fit;
        let design = design_matrix(&data, &spec, None).unwrap();
        let plain = fit_laplace_glm(&design, data.response(), LaplaceFamily::Logit, &spec.prior_variances().unwrap())
            .unwrap();
        for (a, b) in adjusted.means.iter().zip(&plain.means) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in adjusted.sds.iter().zip(&plain.sds) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn grid_matches_its_intervals() {
        let grid = SensSpecGrid::from_intervals((0.85, 0.95), (0.925, 0.975), 11).unwrap();
        assert_eq!(grid.len(), 121);
        assert!((grid.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(grid.points.iter().all(|(a, b)| a + b > 1.0));
        let mean_spec: f64 = grid.points.iter().map(|p| p.0).sum::<f64>() / 121.0;
        assert!((mean_spec - 0.90).abs() < 2e-3);
        assert!(SensSpecGrid::from_intervals((0.2, 0.3), (0.3, 0.4), 3).is_err());
    }

    #[test]
    fn single_point_grid_equals_the_direct_fit() {
        let data = simulate_response_mc(500, 0.2, 0.9, 0.95, 8).unwrap();
        let spec = GlmSpec::new(Family::BernoulliLogit, "s");
        let direct = fit_response_mc(&data, &spec, 0.9, 0.95).unwrap().fit;
        let merged = marginalize_sens_spec(
            &data,
            &spec,
            &SensSpecGrid::single(0.9, 0.95).unwrap(),
            &Target::Coefficient(0),
        )
        .unwrap();
        assert_eq!(merged.points[0].fit, direct);
        assert_eq!(merged.mean, direct.means[0]);
        assert_eq!(merged.quantile(0.975).unwrap(), direct.marginals[0].quantile(0.975));
        let p = success_probability_summary(&direct, &[1.0], &[0.5]).unwrap();
        let merged_p = marginalize_sens_spec(
            &data,
            &spec,
            &SensSpecGrid::single(0.9, 0.95).unwrap(),
            &Target::SuccessProbability(vec![1.0]),
        )
        .unwrap();
        assert_eq!(merged_p.mean, p.mean);
        assert_eq!(merged_p.quantile(0.5).unwrap(), p.quantiles[0]);
    }

    #[test]
    fn merged_density_is_normalised_and_wider() {
        let data = simulate_response_mc(1000, 0.10, 0.90, 0.95, 21).unwrap();
        let spec = GlmSpec::new(Family::BernoulliLogit, "s");
        let grid = SensSpecGrid::from_intervals((0.85, 0.95), (0.925, 0.975), 11).unwrap();
        let target = Target::SuccessProbability(vec![1.0]);
        let merged = marginalize_sens_spec(&data, &spec, &grid, &target).unwrap();
        assert!((merged.density_mass() - 1.0).abs() < 1e-6, "{}", merged.density_mass());
        let within: f64 = merged.points.iter().map(|p| p.weight * p.target_sd.powi(2)).sum();
        // variance read off the density itself
        let m1: Vec<f64> = merged.grid.iter().zip(&merged.density).map(|(x, d)| x * d).collect();
        let mean = trapezoid(&merged.grid, &m1);
        let m2: Vec<f64> = merged
            .grid
            .iter()
            .zip(&merged.density)
            .map(|(x, d)| (x - mean).powi(2) * d)
            .collect();
        let var = trapezoid(&merged.grid, &m2);
        assert!(var >= within - 1e-8);
        assert!((merged.sd.powi(2) - var).abs() < 1e-6);
        let fixed = marginalize_sens_spec(&data, &spec, &SensSpecGrid::single(0.90, 0.95).unwrap(), &target).unwrap();
        assert!(merged.sd > fixed.sd);

        let mut csv = Vec::new();
        merged.write_density_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("quantity_value,density\n"));
        let json = serde_json::to_value(merged.summary().unwrap()).unwrap();
        assert!(json.get("q0.975").is_some());
    }
}
