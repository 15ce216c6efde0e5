use std::fmt;

use serde::Serialize;

/// Non-fatal conditions attached to a result.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Effective sample size fell below the configured fraction of the draws.
    LowEffectiveSampleSize { ess: f64, iterations: usize },
    /// Conditional fits that failed and were left out of the aggregate.
    DroppedFits { dropped: usize, total: usize },
    /// The Newton solver needed a diagonal ridge to stay positive definite.
    Instability { ridge: f64, iterations: usize },
    /// Grid points that failed to fit; the remaining weights were renormalised.
    GridPointsDropped { points: usize, lost_weight: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::LowEffectiveSampleSize { ess, iterations } => {
                write!(f, "low effective sample size {ess:.2} from {iterations} draws")
            }
            Warning::DroppedFits { dropped, total } => write!(f, "{dropped} of {total} conditional fits dropped"),
            Warning::Instability { ridge, iterations } => {
                write!(f, "ridge {ridge:e} was needed (Newton iterations {iterations}); treat with caution")
            }
            Warning::GridPointsDropped { points, lost_weight } => {
                write!(f, "{points} grid points dropped, weight {lost_weight:.4} redistributed")
            }
        }
    }
}

impl Warning {
    /// Short machine-friendly tag, used in CSV reports.
    pub fn tag(&self) -> &'static str {
        match self {
            Warning::LowEffectiveSampleSize { .. } => "low_ess",
            Warning::DroppedFits { .. } => "dropped_fits",
            Warning::Instability { .. } => "instability",
            Warning::GridPointsDropped { .. } => "grid_points_dropped",
        }
    }
}
