use thiserror::Error;

/// Errors raised across the adjustment engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("row {row} of the misclassification matrix sums to {sum}, expected 1")]
    RowNotStochastic { row: usize, sum: f64 },

    #[error("probability {value} at {context} is outside [0, 1]")]
    OutOfRange { context: String, value: f64 },

    #[error("not supported: {0}")]
    NotSupported(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no misclassification matrix or exposure probability for response level {level}")]
    MissingStratum { level: i64 },

    #[error("validation stratum y={y}, x={x} has zero total count")]
    EmptyCell { y: u8, x: u8 },

    #[error("observed value w={w} is impossible under the misclassification and exposure models (row {row})")]
    ZeroDenominator { row: usize, w: u8 },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("Newton iterations did not converge after {iterations} steps (gradient norm {gradient_norm:e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },

    #[error("negative Hessian is not positive definite even with ridge {ridge:e}")]
    HessianNotPd { ridge: f64 },

    #[error("coefficient {index} reached {value:e} at the mode; the data look separable")]
    SeparationSuspected { index: usize, value: f64 },

    #[error("every log weight is -inf or NaN")]
    AllWeightsDegenerate,

    #[error("{failed} of {total} conditional fits failed (limit 1%)")]
    TooManyFailedFits { failed: usize, total: usize },

    #[error("sensitivity {pi11} + specificity {pi00} must exceed 1")]
    InvalidSensSpec { pi00: f64, pi11: f64 },

    #[error("grid points carrying {lost_weight} of the weight failed to fit (limit 0.05)")]
    GridFitFailures { lost_weight: f64 },

    #[error("n = {n} exceeds the enumeration limit {max_n}")]
    TooLarge { n: usize, max_n: usize },

    #[error("results are not comparable: {0}")]
    SpecMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
