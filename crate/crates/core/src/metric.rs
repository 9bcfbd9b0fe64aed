//! Task-metric algebra: the runtime-to-score map and metric comparison.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::types::MetricDirection;

/// Verifier score for a runtime-style metric; higher means faster.
pub fn score_from_runtime<T: Real>(runtime_us: T) -> Result<T> {
    if runtime_us <= T::zero() {
        return Err(Error::Domain(format!(
            "non-positive runtime {runtime_us} (broken verifier)"
        )));
    }
    Ok(T::c(1500.0) / runtime_us)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricOrdering {
    /// `a` improves on `b` under the task's direction.
    Improves,
    Tie,
    Worsens,
}

pub fn compare_metric<T: Real>(a: T, b: T, dir: MetricDirection) -> MetricOrdering {
    if a == b {
        return MetricOrdering::Tie;
    }
    let better = match dir {
        MetricDirection::HigherBetter => a > b,
        MetricDirection::LowerBetter => a < b,
    };
    if better {
        MetricOrdering::Improves
    } else {
        MetricOrdering::Worsens
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn published_score_values() {
        assert!((score_from_runtime(1161.0f64).unwrap() - 1.292).abs() < 1e-3);
        assert!((score_from_runtime(1017.0f64).unwrap() - 1.475).abs() < 1e-3);
        assert!((score_from_runtime(12483.0f64).unwrap() - 0.120).abs() < 1e-3);
    }

    #[test]
    fn unit_score_at_1500() {
        assert_eq!(score_from_runtime(1500.0f64).unwrap(), 1.0);
        assert_eq!(score_from_runtime(1500.0f32).unwrap(), 1.0);
    }

    #[test]
    fn non_positive_runtime_is_domain_error() {
        assert!(score_from_runtime(0.0f64).is_err());
        assert!(score_from_runtime(-3.0f64).is_err());
    }

    #[test]
    fn comparison_examples() {
        use MetricDirection::*;
        assert_eq!(compare_metric(0.289, 0.241, HigherBetter), MetricOrdering::Improves);
        assert_eq!(compare_metric(0.5, 0.5, HigherBetter), MetricOrdering::Tie);
        assert_eq!(compare_metric(1017.0, 12483.0, LowerBetter), MetricOrdering::Improves);
    }

    proptest! {
        #[test]
        fn score_strictly_decreasing(a in 1.0f64..1e6, delta in 1e-3f64..1e3) {
            let s1 = score_from_runtime(a).unwrap();
            let s2 = score_from_runtime(a + delta).unwrap();
            prop_assert!(s2 < s1);
        }

        #[test]
        fn compare_antisymmetric_and_total(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            for dir in [MetricDirection::HigherBetter, MetricDirection::LowerBetter] {
                let fwd = compare_metric(a, b, dir);
                let rev = compare_metric(b, a, dir);
                match fwd {
                    MetricOrdering::Improves => prop_assert_eq!(rev, MetricOrdering::Worsens),
                    MetricOrdering::Worsens => prop_assert_eq!(rev, MetricOrdering::Improves),
                    MetricOrdering::Tie => prop_assert_eq!(rev, MetricOrdering::Tie),
                }
            }
        }
    }
}
