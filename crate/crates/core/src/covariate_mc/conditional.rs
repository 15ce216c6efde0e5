use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::glm::{
    design_matrix, fit_conjugate_stats, fit_laplace_glm, fit_laplace_weighted, ConditionalFit, LaplaceFamily,
    NewtonOptions, SufficientStats,
};
use crate::model::{Dataset, Family, GlmSpec, NoisePrior};

/// Packed binary configuration, 64 observations per word.
pub type PackedConfig = Vec<u64>;

pub fn pack(x: &[u8]) -> PackedConfig {
    let mut words = vec![0u64; x.len().div_ceil(64)];
    for (i, &v) in x.iter().enumerate() {
        if v != 0 {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

pub fn unpack(words: &[u64], n: usize) -> Vec<u8> {
    (0..n).map(|i| ((words[i / 64] >> (i % 64)) & 1) as u8).collect()
}

fn set_bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(k, &word)| {
        let mut rest = word;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let bit = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(k * 64 + bit)
        })
    })
}

#[derive(Debug, Clone)]
enum Engine {
    /// Cross-products with the error-prone column zeroed; a configuration
    /// only adds the rows where `x_i = 1`.
    Conjugate {
        base: SufficientStats,
        rows: DMatrix<f64>,
        y: Vec<f64>,
        noise: NoisePrior,
    },
    Laplace {
        base: DMatrix<f64>,
        y: Vec<f64>,
        family: LaplaceFamily,
    },
    /// Rows sharing every column but the open one, and the response, are
    /// collapsed into cells; a configuration only changes how many rows of
    /// each cell have `x = 1`.
    Collapsed {
        /// Two rows per cell, `x = 0` then `x = 1`.
        design: DMatrix<f64>,
        y: Vec<f64>,
        cell_of_row: Vec<usize>,
        cell_sizes: Vec<f64>,
        family: LaplaceFamily,
    },
}

/// Cell design, cell responses, cell of each row and cell sizes.
type Cells = (DMatrix<f64>, Vec<f64>, Vec<usize>, Vec<f64>);

/// Groups rows that agree on everything except column 1; `None` when
/// grouping would not shrink the problem at least fourfold.
fn collapse(base: &DMatrix<f64>, y: &[f64]) -> Option<Cells> {
    let n = base.nrows();
    let p = base.ncols();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut representatives = Vec::new();
    let mut cell_of_row = Vec::with_capacity(n);
    let mut cell_sizes: Vec<f64> = Vec::new();
    for i in 0..n {
        let mut key: Vec<u64> = (0..p).map(|j| base[(i, j)].to_bits()).collect();
        key.push(y[i].to_bits());
        let next = representatives.len();
        let cell = *index.entry(key).or_insert(next);
        if cell == next {
            representatives.push(i);
            cell_sizes.push(0.0);
        }
        cell_sizes[cell] += 1.0;
        cell_of_row.push(cell);
    }
    if 2 * representatives.len() * 4 > n {
        return None;
    }
    let mut design = DMatrix::zeros(2 * representatives.len(), p);
    let mut cell_y = Vec::with_capacity(2 * representatives.len());
    for (c, &i) in representatives.iter().enumerate() {
        for x in 0..2 {
            let r = 2 * c + x;
            design.row_mut(r).copy_from(&base.row(i));
            design[(r, 1)] = x as f64;
            cell_y.push(y[i]);
        }
    }
    Some((design, cell_y, cell_of_row, cell_sizes))
}

/// The regression model of interest with the error-prone column left open,
/// ready to be fitted for any latent configuration `x`.
#[derive(Debug, Clone)]
pub struct ConditionalModel {
    engine: Engine,
    prior: Vec<f64>,
    n: usize,
    coefficient_names: Vec<String>,
}

impl ConditionalModel {
    pub fn new(dataset: &Dataset, spec: &GlmSpec) -> Result<Self> {
        dataset.validate_for(spec)?;
        if spec.mc_covariate.is_none() {
            return Err(Error::InvalidArgument("the model has no error-prone covariate".into()));
        }
        let prior = spec.prior_variances()?;
        let n = dataset.n();
        let zeros = vec![0u8; n];
        let base = design_matrix(dataset, spec, Some(&zeros))?;
        let y = dataset.response().to_vec();
        let engine = match spec.family {
            Family::Gaussian => {
                let stats = SufficientStats::from_design(&base, &y)?;
                let mut rows = base.clone();
                rows.column_mut(1).fill(1.0);
                Engine::Conjugate {
                    base: stats,
                    rows: rows.transpose(),
                    y,
                    noise: spec.noise_prior,
                }
            }
            family => {
                let family = LaplaceFamily::from_family(family)?;
                match collapse(&base, &y) {
                    Some((design, y, cell_of_row, cell_sizes)) => Engine::Collapsed {
                        design,
                        y,
                        cell_of_row,
                        cell_sizes,
                        family,
                    },
                    None => Engine::Laplace { base, y, family },
                }
            }
        };
        Ok(Self {
            engine,
            prior,
            n,
            coefficient_names: spec.coefficient_names(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coefficient_names(&self) -> &[String] {
        &self.coefficient_names
    }

    pub fn is_conjugate(&self) -> bool {
        matches!(self.engine, Engine::Conjugate { .. })
    }

    pub fn fit(&self, x: &[u8]) -> Result<ConditionalFit> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!("configuration of {} for {} rows", x.len(), self.n)));
        }
        self.fit_packed(&pack(x))
    }

    pub fn fit_packed(&self, words: &[u64]) -> Result<ConditionalFit> {
        match &self.engine {
            Engine::Conjugate { base, rows, y, noise } => {
                let mut stats = base.clone();
                let p = rows.nrows();
                for i in set_bits(words) {
                    let r = rows.column(i);
                    for j in 0..p {
                        stats.xtx[(1, j)] += r[j];
                        if j != 1 {
                            stats.xtx[(j, 1)] += r[j];
                        }
                    }
                    stats.xty[1] += y[i];
                }
                fit_conjugate_stats(&stats, &self.prior, *noise)
            }
            Engine::Laplace { base, y, family } => {
                let mut design = base.clone();
                for i in set_bits(words) {
                    design[(i, 1)] = 1.0;
                }
                fit_laplace_glm(&design, y, *family, &self.prior)
            }
            Engine::Collapsed {
                design,
                y,
                cell_of_row,
                cell_sizes,
                family,
            } => {
                let mut weights = vec![0.0; design.nrows()];
                for i in set_bits(words) {
                    weights[2 * cell_of_row[i] + 1] += 1.0;
                }
                for (c, size) in cell_sizes.iter().enumerate() {
                    weights[2 * c] = size - weights[2 * c + 1];
                }
                fit_laplace_weighted(design, y, &weights, *family, &self.prior, &NewtonOptions::default())
            }
        }
    }
}

/// Errors after which a draw is dropped rather than aborting the run.
pub(crate) fn is_fit_failure(err: &Error) -> bool {
    matches!(
        err,
        Error::NotConverged { .. } | Error::HessianNotPd { .. } | Error::SingularSystem(_) | Error::SeparationSuspected { .. }
    )
}
