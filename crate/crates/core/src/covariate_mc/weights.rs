use crate::error::{Error, Result};

/// Normalises log weights with the log-sum-exp shift and returns them with
/// the effective sample size `1 / sum w^2`.
///
/// NaN entries count as `-inf` (zero weight).
pub fn normalize_weights(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::AllWeightsDegenerate);
    }
    if max == f64::INFINITY {
        return Err(Error::NonFiniteInput("log weight of +inf".into()));
    }
    let shifted: Vec<f64> = log_weights
        .iter()
        .map(|&v| if v.is_nan() { 0.0 } else { (v - max).exp() })
        .collect();
    let total: f64 = shifted.iter().sum();
    let weights: Vec<f64> = shifted.into_iter().map(|s| s / total).collect();
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    Ok((weights, ess))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn equal_weights() {
        let (w, ess) = normalize_weights(&[-3.5; 8]).unwrap();
        assert!(w.iter().all(|&v| v == 0.125));
        assert_eq!(ess, 8.0);
    }

    #[test]
    fn three_to_one() {
        let (w, ess) = normalize_weights(&[0.0, 3f64.ln()]).unwrap();
        assert_relative_eq!(w[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.75, epsilon = 1e-15);
        assert_relative_eq!(ess, 1.6, epsilon = 1e-12);
        let (big, _) = normalize_weights(&[1000.0, 1000.0 + 3f64.ln()]).unwrap();
        assert_relative_eq!(big[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(big[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(normalize_weights(&[f64::NEG_INFINITY, f64::NAN]), Err(Error::AllWeightsDegenerate));
        assert_eq!(normalize_weights(&[]), Err(Error::AllWeightsDegenerate));
        let (w, _) = normalize_weights(&[f64::NAN, 2.0]).unwrap();
        assert_eq!(w, vec![0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn ess_is_bounded_by_the_draw_count(logs in prop::collection::vec(-50.0..50.0f64, 1..200)) {
            let (w, ess) = normalize_weights(&logs).unwrap();
            let m = logs.len() as f64;
            prop_assert!(ess <= m * (1.0 + 1e-12));
            prop_assert!(ess >= 1.0 - 1e-12);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn integer_shifts_leave_weights_unchanged(
            steps in prop::collection::vec(-4096i32..4096, 1..100),
            shift in -100_000i32..100_000,
        ) {
            // multiples of 2^-8 plus an integer shift are added without rounding,
            // so invariance holds bit for bit
            let logs: Vec<f64> = steps.iter().map(|&s| f64::from(s) / 256.0).collect();
            let moved: Vec<f64> = logs.iter().map(|v| v + f64::from(shift)).collect();
            prop_assert_eq!(normalize_weights(&logs).unwrap(), normalize_weights(&moved).unwrap());
        }

        #[test]
        fn arbitrary_shifts_agree_to_rounding(
            logs in prop::collection::vec(-30.0..30.0f64, 1..50),
            shift in -1e4..1e4f64,
        ) {
            let moved: Vec<f64> = logs.iter().map(|v| v + shift).collect();
            let (a, _) = normalize_weights(&logs).unwrap();
            let (b, _) = normalize_weights(&moved).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn full_ess_only_for_equal_weights(logs in prop::collection::vec(-5.0..5.0f64, 2..40)) {
            let (_, ess) = normalize_weights(&logs).unwrap();
            let spread = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - logs.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread > 1e-6 {
                prop_assert!(ess < logs.len() as f64);
            }
        }
    }
}
