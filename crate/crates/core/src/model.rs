//! Misclassification mechanisms, exposure models, regression specifications
//! and the observation table they operate on.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::special::expit;

/// Rows deviating from 1 by more than this are rejected.
const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Default Gaussian prior variance for every regression coefficient.
pub const DEFAULT_PRIOR_VARIANCE: f64 = 1000.0;

/// Binary misclassification matrix, `entry[l][k] = Pr(w = k | x = l)`.
///
/// Rows index the true value, so each row sums to one. The diagonal holds the
/// specificity (`[0][0]`) and sensitivity (`[1][1]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisclassMatrix {
    entries: [[f64; 2]; 2],
}

impl MisclassMatrix {
    /// Validates a 2x2 table. Rows within tolerance are renormalised exactly.
    pub fn new(entries: [[f64; 2]; 2]) -> Result<Self> {
        let mut entries = entries;
        for (l, row) in entries.iter_mut().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfRange {
                        context: format!("entry[{l}][{k}]"),
                        value: v,
                    });
                }
            }
            let sum = row[0] + row[1];
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::RowNotStochastic { row: l, sum });
            }
            if sum != 1.0 {
                row[1] = 1.0 - row[0];
            }
        }
        Ok(Self { entries })
    }

    /// Validates a table of arbitrary shape; only the binary case is accepted.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != 2 || rows.iter().any(|r| r.len() != 2) {
            let shape = rows.iter().map(|r| r.len().to_string()).collect::<Vec<_>>().join(",");
            return Err(Error::NotSupported(format!(
                "only 2x2 misclassification matrices are supported (got {} rows of lengths [{shape}])",
                rows.len()
            )));
        }
        Self::new([[rows[0][0], rows[0][1]], [rows[1][0], rows[1][1]]])
    }

    pub fn identity() -> Self {
        Self {
            entries: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    /// Builds the matrix from the two error rates `Pr(w=1|x=0)` and `Pr(w=0|x=1)`.
    pub fn from_error_rates(false_positive: f64, false_negative: f64) -> Result<Self> {
        Self::new([
            [1.0 - false_positive, false_positive],
            [false_negative, 1.0 - false_negative],
        ])
    }

    pub fn from_sens_spec(sensitivity: f64, specificity: f64) -> Result<Self> {
        Self::new([[specificity, 1.0 - specificity], [1.0 - sensitivity, sensitivity]])
    }

    /// `Pr(w = observed | x = truth)`.
    #[inline]
    pub fn prob(&self, truth: u8, observed: u8) -> f64 {
        self.entries[truth as usize][observed as usize]
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        self.entries
    }

    pub fn sensitivity(&self) -> f64 {
        self.entries[1][1]
    }

    pub fn specificity(&self) -> f64 {
        self.entries[0][0]
    }

    pub fn is_identity(&self) -> bool {
        self.entries == [[1.0, 0.0], [0.0, 1.0]]
    }
}

/// Validates a 2x2 probability table as a misclassification matrix.
pub fn validate_mc_matrix(entries: [[f64; 2]; 2]) -> Result<MisclassMatrix> {
    MisclassMatrix::new(entries)
}

/// How the misclassification probabilities vary across observations.
#[derive(Debug, Clone, PartialEq)]
pub enum MisclassModel {
    /// Same matrix for every observation (nondifferential).
    Uniform(MisclassMatrix),
    /// One matrix per response level (differential).
    Differential(BTreeMap<u8, MisclassMatrix>),
    /// `logit Pr(w=1|x=0) = g[0] + g[1] z` and `logit Pr(w=0|x=1) = g[2] + g[3] z`.
    CovariateDependent { gamma: [f64; 4], z_column: String },
}

impl MisclassModel {
    /// Effective matrix for observation `obs_index`.
    pub fn matrix_for_observation(
        &self,
        obs_index: usize,
        response_level: Option<u8>,
        z_value: Option<f64>,
    ) -> Result<MisclassMatrix> {
        match self {
            MisclassModel::Uniform(m) => Ok(*m),
            MisclassModel::Differential(by_level) => {
                let level = response_level.ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "differential misclassification needs the response level of row {obs_index}"
                    ))
                })?;
                by_level.get(&level).copied().ok_or(Error::MissingStratum {
                    level: i64::from(level),
                })
            }
            MisclassModel::CovariateDependent { gamma, z_column } => {
                let z = z_value.ok_or_else(|| {
                    Error::InvalidArgument(format!("column {z_column} required for row {obs_index}"))
                })?;
                if !z.is_finite() {
                    return Err(Error::NonFiniteInput(format!("{z_column} at row {obs_index}")));
                }
                let false_positive = expit(gamma[0] + gamma[1] * z);
                let false_negative = expit(gamma[2] + gamma[3] * z);
                MisclassMatrix::from_error_rates(false_positive, false_negative)
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            MisclassModel::Uniform(m) => m.is_identity(),
            MisclassModel::Differential(by_level) => by_level.values().all(MisclassMatrix::is_identity),
            MisclassModel::CovariateDependent { .. } => false,
        }
    }

    pub fn needs_response_level(&self) -> bool {
        matches!(self, MisclassModel::Differential(_))
    }
}

/// Logistic model for `Pr(x = 1)` with known coefficients, or fixed
/// probabilities per response level.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureModel {
    pub alpha0: f64,
    pub alpha_z: Vec<f64>,
    /// Dataset columns aligned with `alpha_z`.
    pub columns: Vec<String>,
    /// Optional centring subtracted from each column before the linear predictor.
    pub centers: Vec<f64>,
    pub stratified_probs: Option<BTreeMap<u8, f64>>,
}

impl ExposureModel {
    pub fn logistic(alpha0: f64, alpha_z: Vec<f64>, columns: Vec<String>) -> Result<Self> {
        if alpha_z.len() != columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} exposure slopes for {} columns",
                alpha_z.len(),
                columns.len()
            )));
        }
        if !alpha0.is_finite() || alpha_z.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFiniteInput("exposure coefficients".into()));
        }
        let centers = vec![0.0; columns.len()];
        Ok(Self {
            alpha0,
            alpha_z,
            columns,
            centers,
            stratified_probs: None,
        })
    }

    /// Intercept-only model with `Pr(x=1) = p`.
    pub fn constant(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::OutOfRange {
                context: "exposure probability".into(),
                value: p,
            });
        }
        Self::logistic(crate::special::logit(p), Vec::new(), Vec::new())
    }

    pub fn stratified(probs: BTreeMap<u8, f64>) -> Result<Self> {
        for (&level, &p) in &probs {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::OutOfRange {
                    context: format!("exposure probability for response level {level}"),
                    value: p,
                });
            }
        }
        Ok(Self {
            alpha0: 0.0,
            alpha_z: Vec::new(),
            columns: Vec::new(),
            centers: Vec::new(),
            stratified_probs: Some(probs),
        })
    }

    pub fn with_centers(mut self, centers: Vec<f64>) -> Result<Self> {
        if centers.len() != self.columns.len() {
            return Err(Error::DimensionMismatch("exposure centring".into()));
        }
        self.centers = centers;
        Ok(self)
    }

    /// `Pr(x_i = 1)` for one observation's exposure covariates.
    pub fn probability(&self, row: &[f64], response_level: Option<u8>) -> Result<f64> {
        if let Some(probs) = &self.stratified_probs {
            let level = response_level.ok_or_else(|| {
                Error::InvalidArgument("stratified exposure model needs the response level".into())
            })?;
            return probs.get(&level).copied().ok_or(Error::MissingStratum {
                level: i64::from(level),
            });
        }
        if row.len() != self.alpha_z.len() {
            return Err(Error::DimensionMismatch(format!(
                "exposure row has {} values, model has {} slopes",
                row.len(),
                self.alpha_z.len()
            )));
        }
        let eta = self.alpha0
            + row
                .iter()
                .zip(&self.alpha_z)
                .zip(&self.centers)
                .map(|((z, a), c)| a * (z - c))
                .sum::<f64>();
        if !eta.is_finite() {
            return Err(Error::NonFiniteInput("exposure linear predictor".into()));
        }
        Ok(expit(eta))
    }

    pub fn is_stratified(&self) -> bool {
        self.stratified_probs.is_some()
    }
}

pub fn exposure_probability(model: &ExposureModel, row: &[f64], response_level: Option<u8>) -> Result<f64> {
    model.probability(row, response_level)
}

/// Response family of the regression model of interest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Gaussian,
    BernoulliLogit,
    BernoulliProbit,
    /// Logit link adjusted for response misclassification.
    BernoulliSslogit { pi00: f64, pi11: f64 },
}

impl Family {
    pub fn is_binary(&self) -> bool {
        !matches!(self, Family::Gaussian)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::BernoulliLogit => "bernoulli-logit",
            Family::BernoulliProbit => "bernoulli-probit",
            Family::BernoulliSslogit { .. } => "bernoulli-sslogit",
        }
    }
}

/// Prior on the residual variance of a Gaussian response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoisePrior {
    Fixed { variance: f64 },
    /// Inverse-gamma(a, b) on the variance, with coefficient prior scaled by it.
    NormalInverseGamma { a: f64, b: f64 },
}

impl Default for NoisePrior {
    fn default() -> Self {
        NoisePrior::NormalInverseGamma { a: 0.01, b: 0.01 }
    }
}

impl NoisePrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoisePrior::Fixed { variance } => variance > 0.0 && variance.is_finite(),
            NoisePrior::NormalInverseGamma { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("noise prior {self:?} must be strictly positive")))
        }
    }
}

/// Regression model of interest: `eta = b0 + bx * x + Z bz`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmSpec {
    pub family: Family,
    pub response: String,
    /// Error-free covariates `Z`.
    pub covariates: Vec<String>,
    /// Error-prone binary covariate, if the model has one.
    pub mc_covariate: Option<String>,
    /// Per-coefficient prior variances; a single entry is broadcast.
    pub prior_beta_variance: Vec<f64>,
    pub noise_prior: NoisePrior,
}

impl GlmSpec {
    pub fn new(family: Family, response: impl Into<String>) -> Self {
        Self {
            family,
            response: response.into(),
            covariates: Vec::new(),
            mc_covariate: None,
            prior_beta_variance: vec![DEFAULT_PRIOR_VARIANCE],
            noise_prior: NoisePrior::default(),
        }
    }

    pub fn with_mc_covariate(mut self, name: impl Into<String>) -> Self {
        self.mc_covariate = Some(name.into());
        self
    }

    pub fn with_covariates<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.covariates = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_noise_prior(mut self, prior: NoisePrior) -> Self {
        self.noise_prior = prior;
        self
    }

    pub fn with_prior_variance(mut self, variances: Vec<f64>) -> Self {
        self.prior_beta_variance = variances;
        self
    }

    /// Names in design-column order: intercept, error-prone covariate, `Z`.
    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        if let Some(mc) = &self.mc_covariate {
            names.push(mc.clone());
        }
        names.extend(self.covariates.iter().cloned());
        names
    }

    pub fn n_coefficients(&self) -> usize {
        1 + usize::from(self.mc_covariate.is_some()) + self.covariates.len()
    }

    /// Index of the error-prone covariate's coefficient.
    pub fn mc_index(&self) -> Option<usize> {
        self.mc_covariate.as_ref().map(|_| 1)
    }

    pub fn prior_variances(&self) -> Result<Vec<f64>> {
        let p = self.n_coefficients();
        let v = match self.prior_beta_variance.len() {
            0 => vec![DEFAULT_PRIOR_VARIANCE; p],
            1 => vec![self.prior_beta_variance[0]; p],
            len if len == p => self.prior_beta_variance.clone(),
            len => {
                return Err(Error::DimensionMismatch(format!(
                    "{len} prior variances for {p} coefficients"
                )))
            }
        };
        if v.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("prior variances must be strictly positive".into()));
        }
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior_variances()?;
        self.noise_prior.validate()?;
        if let Family::BernoulliSslogit { pi00, pi11 } = self.family {
            if !(pi00 + pi11 > 1.0) || !(0.0..=1.0).contains(&pi00) || !(0.0..=1.0).contains(&pi11) {
                return Err(Error::InvalidSensSpec { pi00, pi11 });
            }
        }
        Ok(())
    }
}

/// Column-aligned observation table.
///
/// `mc_observed` holds the error-prone binary covariate with `None` marking a
/// missing entry. Named numeric columns serve both the regression covariates
/// and the exposure model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    response: Vec<f64>,
    mc_observed: Vec<Option<u8>>,
    columns: Vec<(String, Vec<f64>)>,
    truth: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(response: Vec<f64>, mc_observed: Vec<Option<u8>>) -> Result<Self> {
        if response.len() != mc_observed.len() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} rows, error-prone covariate has {}",
                response.len(),
                mc_observed.len()
            )));
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("response at row {i}")));
        }
        if let Some(i) = mc_observed.iter().position(|w| matches!(w, Some(v) if *v > 1)) {
            return Err(Error::OutOfRange {
                context: format!("error-prone covariate at row {i}"),
                value: f64::from(mc_observed[i].unwrap_or(0)),
            });
        }
        Ok(Self {
            response,
            mc_observed,
            columns: Vec::new(),
            truth: None,
        })
    }

    /// Dataset with only a response (no error-prone covariate).
    pub fn response_only(response: Vec<f64>) -> Result<Self> {
        let n = response.len();
        Self::new(response, vec![None; n])
    }

    pub fn with_column(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "column {name} has {} rows, expected {}",
                values.len(),
                self.n()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("{name} at row {i}")));
        }
        self.columns.retain(|(existing, _)| *existing != name);
        self.columns.push((name, values));
        Ok(self)
    }

    /// Attaches the correctly classified covariate (simulation truth).
    pub fn with_truth(mut self, truth: Vec<u8>) -> Result<Self> {
        if truth.len() != self.n() || truth.iter().any(|&x| x > 1) {
            return Err(Error::DimensionMismatch("truth column must be binary with n rows".into()));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn mc_observed(&self) -> &[Option<u8>] {
        &self.mc_observed
    }

    pub fn truth(&self) -> Option<&[u8]> {
        self.truth.as_deref()
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn missing_count(&self) -> usize {
        self.mc_observed.iter().filter(|w| w.is_none()).count()
    }

    /// Binary response level of row `i`, if the response is 0/1.
    pub fn response_level(&self, i: usize) -> Option<u8> {
        match self.response[i] {
            0.0 => Some(0),
            1.0 => Some(1),
            _ => None,
        }
    }

    /// Copy with the error-prone covariate replaced by `x` (no missing entries).
    pub fn with_mc_values(&self, x: &[u8]) -> Self {
        let mut out = self.clone();
        out.mc_observed = x.iter().map(|&v| Some(v)).collect();
        out
    }

    /// Rows where the error-prone covariate is observed.
    pub fn complete_cases(&self) -> Self {
        let keep: Vec<usize> = (0..self.n()).filter(|&i| self.mc_observed[i].is_some()).collect();
        self.subset(&keep)
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            response: rows.iter().map(|&i| self.response[i]).collect(),
            mc_observed: rows.iter().map(|&i| self.mc_observed[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|(n, v)| (n.clone(), rows.iter().map(|&i| v[i]).collect()))
                .collect(),
            truth: self.truth.as_ref().map(|t| rows.iter().map(|&i| t[i]).collect()),
        }
    }

    /// Checks the table against a model specification.
    pub fn validate_for(&self, spec: &GlmSpec) -> Result<()> {
        spec.validate()?;
        for name in &spec.covariates {
            self.column(name)?;
        }
        if spec.family.is_binary() {
            if let Some(i) = (0..self.n()).find(|&i| self.response_level(i).is_none()) {
                return Err(Error::OutOfRange {
                    context: format!("binary response at row {i}"),
                    value: self.response[i],
                });
            }
        }
        if self.n() == 0 {
            return Err(Error::InvalidArgument("dataset has no rows".into()));
        }
        Ok(())
    }
}

/// One row of a validation table: counts of `(y, x, w)` combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationCount {
    pub y: u8,
    pub x: u8,
    pub w: u8,
    pub frequency: u64,
}

/// Misclassification matrices and exposure probabilities estimated per response level.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationEstimate {
    pub matrices: BTreeMap<u8, MisclassMatrix>,
    pub exposure_probs: BTreeMap<u8, f64>,
    /// Total count of each `(y, x)` stratum.
    pub stratum_totals: BTreeMap<(u8, u8), u64>,
}

fn tabulate(counts: &[ValidationCount]) -> Result<BTreeMap<(u8, u8, u8), u64>> {
    let mut table = BTreeMap::new();
    for c in counts {
        if c.y > 1 || c.x > 1 || c.w > 1 {
            return Err(Error::NotSupported("validation values must be binary".into()));
        }
        *table.entry((c.y, c.x, c.w)).or_insert(0) += c.frequency;
    }
    Ok(table)
}

/// Sample proportions `Pr(w=k | x=l, y=m)` and `Pr(x=1 | y=m)` from validation counts.
pub fn estimate_mc_from_validation(counts: &[ValidationCount]) -> Result<ValidationEstimate> {
    let table = tabulate(counts)?;
    let cell = |y: u8, x: u8, w: u8| table.get(&(y, x, w)).copied().unwrap_or(0);
    let levels: Vec<u8> = {
        let mut l: Vec<u8> = counts.iter().map(|c| c.y).collect();
        l.sort_unstable();
        l.dedup();
        l
    };
    let mut matrices = BTreeMap::new();
    let mut exposure_probs = BTreeMap::new();
    let mut stratum_totals = BTreeMap::new();
    for &y in &levels {
        let mut rows = [[0.0; 2]; 2];
        for x in 0..2u8 {
            let total = cell(y, x, 0) + cell(y, x, 1);
            if total == 0 {
                return Err(Error::EmptyCell { y, x });
            }
            stratum_totals.insert((y, x), total);
            rows[x as usize] = [cell(y, x, 0) as f64 / total as f64, cell(y, x, 1) as f64 / total as f64];
        }
        matrices.insert(y, MisclassMatrix::new(rows)?);
        let exposed = stratum_totals[&(y, 1)];
        let all = exposed + stratum_totals[&(y, 0)];
        exposure_probs.insert(y, exposed as f64 / all as f64);
    }
    Ok(ValidationEstimate {
        matrices,
        exposure_probs,
        stratum_totals,
    })
}

/// Nondifferential estimate: one matrix and one exposure probability pooled over `y`.
pub fn estimate_pooled_mc(counts: &[ValidationCount]) -> Result<(MisclassMatrix, f64)> {
    let pooled: Vec<ValidationCount> = counts.iter().map(|c| ValidationCount { y: 0, ..*c }).collect();
    let est = estimate_mc_from_validation(&pooled)?;
    Ok((est.matrices[&0], est.exposure_probs[&0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn simulation_matrix_is_valid() {
        let m = validate_mc_matrix([[0.9, 0.1], [0.2, 0.8]]).unwrap();
        assert_eq!(m.sensitivity(), 0.8);
        assert_eq!(m.specificity(), 0.9);
        assert!(validate_mc_matrix([[1.0, 0.0], [0.0, 1.0]]).unwrap().is_identity());
    }

    #[test]
    fn non_stochastic_and_out_of_range_rows_are_rejected() {
        assert!(matches!(
            validate_mc_matrix([[0.9, 0.2], [0.2, 0.8]]),
            Err(Error::RowNotStochastic { row: 0, .. })
        ));
        assert!(matches!(
            validate_mc_matrix([[1.1, -0.1], [0.2, 0.8]]),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn tiny_row_error_is_absorbed() {
        let m = validate_mc_matrix([[0.9, 0.1 + 5e-10], [0.2, 0.8]]).unwrap();
        let e = m.entries();
        assert_eq!(e[0][0] + e[0][1], 1.0);
    }

    #[test]
    fn k_level_tables_are_not_supported() {
        let rows = vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]];
        assert!(matches!(MisclassMatrix::from_rows(&rows), Err(Error::NotSupported(_))));
    }

    #[test]
    fn exposure_probabilities() {
        let flat = ExposureModel::logistic(0.0, vec![], vec![]).unwrap();
        assert_eq!(exposure_probability(&flat, &[], None).unwrap(), 0.5);
        let sim = ExposureModel::logistic(-0.5, vec![0.25], vec!["z".into()]).unwrap();
        assert_relative_eq!(
            exposure_probability(&sim, &[0.0], None).unwrap(),
            1.0 / (1.0 + 0.5f64.exp()),
            epsilon = 1e-15
        );
        assert_relative_eq!(exposure_probability(&sim, &[0.0], None).unwrap(), 0.37754, epsilon = 1e-5);
        let hsv = ExposureModel::stratified(BTreeMap::from([(1, 0.59), (0, 0.42)])).unwrap();
        assert_eq!(exposure_probability(&hsv, &[], Some(1)).unwrap(), 0.59);
        assert!(matches!(
            exposure_probability(&sim, &[0.0, 1.0], None),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn matrices_per_observation() {
        let m = MisclassMatrix::new([[0.9, 0.1], [0.2, 0.8]]).unwrap();
        assert_eq!(MisclassModel::Uniform(m).matrix_for_observation(7, None, None).unwrap(), m);

        let m1 = MisclassMatrix::new([[0.81, 0.19], [0.22, 0.78]]).unwrap();
        let m0 = MisclassMatrix::new([[0.75, 0.25], [0.5, 0.5]]).unwrap();
        let diff = MisclassModel::Differential(BTreeMap::from([(1, m1), (0, m0)]));
        assert_eq!(diff.matrix_for_observation(0, Some(1), None).unwrap(), m1);
        let only_one = MisclassModel::Differential(BTreeMap::from([(1, m1)]));
        assert!(matches!(
            only_one.matrix_for_observation(0, Some(0), None),
            Err(Error::MissingStratum { level: 0 })
        ));

        let cov = MisclassModel::CovariateDependent {
            gamma: [0.0; 4],
            z_column: "z".into(),
        };
        for z in [-3.0, 0.0, 12.5] {
            let e = cov.matrix_for_observation(0, None, Some(z)).unwrap().entries();
            assert_eq!(e, [[0.5, 0.5], [0.5, 0.5]]);
        }
    }

    fn hsv_validation() -> Vec<ValidationCount> {
        [
            (1, 0, 0, 13),
            (1, 0, 1, 3),
            (1, 1, 0, 5),
            (1, 1, 1, 18),
            (0, 0, 0, 33),
            (0, 0, 1, 11),
            (0, 1, 0, 16),
            (0, 1, 1, 16),
        ]
        .into_iter()
        .map(|(y, x, w, frequency)| ValidationCount { y, x, w, frequency })
        .collect()
    }

    #[test]
    fn validation_estimates_match_table() {
        let est = estimate_mc_from_validation(&hsv_validation()).unwrap();
        let m1 = est.matrices[&1];
        assert_relative_eq!(m1.prob(0, 1), 3.0 / 16.0);
        assert_relative_eq!(m1.prob(1, 0), 5.0 / 23.0);
        let m0 = est.matrices[&0];
        assert_eq!(m0.prob(0, 1), 0.25);
        assert_eq!(m0.prob(1, 0), 0.5);
        assert_relative_eq!(est.exposure_probs[&1], 23.0 / 39.0);
        assert_relative_eq!(est.exposure_probs[&0], 32.0 / 76.0);
    }

    #[test]
    fn empty_stratum_is_reported() {
        let counts: Vec<_> = hsv_validation().into_iter().filter(|c| !(c.y == 0 && c.x == 1)).collect();
        assert_eq!(estimate_mc_from_validation(&counts), Err(Error::EmptyCell { y: 0, x: 1 }));
    }

    proptest! {
        #[test]
        fn covariate_dependent_matrices_are_valid(
            g in proptest::array::uniform4(-5.0f64..5.0),
            z in -10.0f64..10.0,
        ) {
            let model = MisclassModel::CovariateDependent { gamma: g, z_column: "z".into() };
            let m = model.matrix_for_observation(0, None, Some(z)).unwrap();
            prop_assert!(validate_mc_matrix(m.entries()).is_ok());
        }

        #[test]
        fn validation_proportions_round_trip(counts in proptest::collection::vec(1u64..500, 8)) {
            let mut rows = Vec::new();
            let mut k = 0;
            for y in 0..2u8 { for x in 0..2u8 { for w in 0..2u8 {
                rows.push(ValidationCount { y, x, w, frequency: counts[k] });
                k += 1;
            }}}
            let est = estimate_mc_from_validation(&rows).unwrap();
            for r in &rows {
                let total = est.stratum_totals[&(r.y, r.x)] as f64;
                let back = est.matrices[&r.y].prob(r.x, r.w) * total;
                prop_assert_eq!(back.round() as u64, r.frequency);
            }
        }

        #[test]
        fn exposure_is_monotone_and_interior(a0 in -5.0f64..5.0, slope in 0.01f64..3.0, z in -5.0f64..5.0, dz in 0.01f64..2.0) {
            let m = ExposureModel::logistic(a0, vec![slope], vec!["z".into()]).unwrap();
            let p = m.probability(&[z], None).unwrap();
            let q = m.probability(&[z + dz], None).unwrap();
            prop_assert!(p > 0.0 && p < 1.0);
            prop_assert!(q > p);
        }
    }
}
