use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Dataset, ExposureModel, MisclassMatrix, MisclassModel};

/// `Pr(x = 1 | w, exposure)` for one observation.
///
/// For an observed `w = k` this is `pi_k1 p / (pi_k0 (1 - p) + pi_k1 p)` with
/// `pi_lk = Pr(w = k | x = l)`; a missing `w` leaves the exposure probability.
pub fn conditional_success_probability(matrix: &MisclassMatrix, w: Option<u8>, p_x: f64) -> Result<f64> {
    success_probability_at(matrix, w, p_x, 0)
}

fn success_probability_at(matrix: &MisclassMatrix, w: Option<u8>, p_x: f64, row: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_x) {
        return Err(Error::OutOfRange {
            context: format!("exposure probability at row {row}"),
            value: p_x,
        });
    }
    let Some(k) = w else {
        return Ok(p_x);
    };
    if k > 1 {
        return Err(Error::NotSupported(format!("observed level {k} at row {row}; only binary covariates")));
    }
    let given_absent = matrix.prob(0, k);
    let given_present = matrix.prob(1, k);
    if given_absent == given_present {
        // the observation carries no information about x
        return Ok(p_x);
    }
    let numerator = given_present * p_x;
    let denominator = given_absent * (1.0 - p_x) + numerator;
    if denominator == 0.0 {
        return Err(Error::ZeroDenominator { row, w: k });
    }
    Ok(numerator / denominator)
}

/// Values of the exposure-model columns at one row.
fn exposure_row(columns: &[&[f64]], i: usize) -> Vec<f64> {
    columns.iter().map(|c| c[i]).collect()
}

/// Exposure probability `Pr(x_i = 1)` of every observation.
pub fn exposure_probabilities(dataset: &Dataset, exposure: &ExposureModel) -> Result<Vec<f64>> {
    let columns = exposure
        .columns
        .iter()
        .map(|name| dataset.column(name))
        .collect::<Result<Vec<_>>>()?;
    (0..dataset.n())
        .map(|i| {
            let level = if exposure.is_stratified() {
                Some(dataset.response_level(i).ok_or_else(|| Error::OutOfRange {
                    context: format!("binary response needed by the stratified exposure model at row {i}"),
                    value: dataset.response()[i],
                })?)
            } else {
                None
            };
            exposure.probability(&exposure_row(&columns, i), level)
        })
        .collect()
}

/// Proposal success probability `Pr(x_i = 1 | w_i, Z_i)` of every observation.
pub fn proposal_probabilities(
    dataset: &Dataset,
    mc_model: &MisclassModel,
    exposure: &ExposureModel,
) -> Result<Vec<f64>> {
    let p_x = exposure_probabilities(dataset, exposure)?;
    let z_values = match mc_model {
        MisclassModel::CovariateDependent { z_column, .. } => Some(dataset.column(z_column)?),
        _ => None,
    };
    let observed = dataset.mc_observed();
    (0..dataset.n())
        .map(|i| {
            let level = if mc_model.needs_response_level() {
                Some(dataset.response_level(i).ok_or_else(|| Error::OutOfRange {
                    context: format!("binary response needed by differential misclassification at row {i}"),
                    value: dataset.response()[i],
                })?)
            } else {
                None
            };
            let matrix = mc_model.matrix_for_observation(i, level, z_values.map(|z| z[i]))?;
            success_probability_at(&matrix, observed[i], p_x[i], i)
        })
        .collect()
}

/// Independent Bernoulli draws, one uniform per entry so that the stream
/// position after a draw does not depend on the probabilities.
pub fn draw_bernoulli<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> Vec<u8> {
    probabilities
        .iter()
        .map(|&p| u8::from(rng.random::<f64>() < p))
        .collect()
}

/// One draw of the latent covariate vector from `Pr(x | w, Z)`.
pub fn sample_latent_covariate<R: Rng + ?Sized>(
    dataset: &Dataset,
    mc_model: &MisclassModel,
    exposure: &ExposureModel,
    rng: &mut R,
) -> Result<Vec<u8>> {
    let probabilities = proposal_probabilities(dataset, mc_model, exposure)?;
    Ok(draw_bernoulli(&probabilities, rng))
}
