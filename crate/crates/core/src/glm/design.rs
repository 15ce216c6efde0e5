use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Dataset, GlmSpec};

/// Values of the error-prone covariate, from `x` when given, else the observed column.
pub fn mc_column_values(dataset: &Dataset, x: Option<&[u8]>) -> Result<Vec<f64>> {
    match x {
        Some(x) => {
            if x.len() != dataset.n() {
                return Err(Error::DimensionMismatch(format!(
                    "latent covariate has {} entries, dataset has {}",
                    x.len(),
                    dataset.n()
                )));
            }
            Ok(x.iter().map(|&v| f64::from(v)).collect())
        }
        None => dataset
            .mc_observed()
            .iter()
            .enumerate()
            .map(|(i, w)| {
                w.map(f64::from).ok_or_else(|| {
                    Error::InvalidArgument(format!("error-prone covariate missing at row {i}; impute or drop first"))
                })
            })
            .collect(),
    }
}

/// Design matrix `[1, x, Z]` in `GlmSpec::coefficient_names` order.
pub fn design_matrix(dataset: &Dataset, spec: &GlmSpec, x: Option<&[u8]>) -> Result<DMatrix<f64>> {
    let n = dataset.n();
    let p = spec.n_coefficients();
    let mut design = DMatrix::zeros(n, p);
    design.column_mut(0).fill(1.0);
    let mut col = 1;
    if spec.mc_covariate.is_some() {
        let values = mc_column_values(dataset, x)?;
        design.column_mut(col).copy_from_slice(&values);
        col += 1;
    }
    for name in &spec.covariates {
        design.column_mut(col).copy_from_slice(dataset.column(name)?);
        col += 1;
    }
    Ok(design)
}
