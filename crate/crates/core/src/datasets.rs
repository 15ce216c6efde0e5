//! Embedded application data.

use crate::error::Result;
use crate::model::{Dataset, ValidationCount};

/// Cervical cancer (`y`) against an accurate (`x`) and an inaccurate (`w`)
/// HSV-2 test, validation subsample: `(y, x, w, count)`.
pub const HSV_VALIDATION: [(u8, u8, u8, u64); 8] = [
    (1, 0, 0, 13),
    (1, 0, 1, 3),
    (1, 1, 0, 5),
    (1, 1, 1, 18),
    (0, 0, 0, 33),
    (0, 0, 1, 11),
    (0, 1, 0, 16),
    (0, 1, 1, 16),
];

/// Main study, inaccurate test only: `(y, w, count)`.
pub const HSV_MAIN: [(u8, u8, u64); 4] = [(1, 0, 318), (1, 1, 375), (0, 0, 701), (0, 1, 535)];

pub fn hsv_validation_counts() -> Vec<ValidationCount> {
    HSV_VALIDATION
        .iter()
        .map(|&(y, x, w, frequency)| ValidationCount { y, x, w, frequency })
        .collect()
}

/// Main-study rows expanded to one row per patient: response `y`, error-prone `w`.
pub fn hsv_main_study() -> Result<Dataset> {
    let mut y = Vec::new();
    let mut w = Vec::new();
    for &(yi, wi, count) in &HSV_MAIN {
        for _ in 0..count {
            y.push(f64::from(yi));
            w.push(Some(wi));
        }
    }
    Dataset::new(y, w)
}
