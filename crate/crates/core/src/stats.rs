//! Binomial proportion estimates and order statistics.

use serde::{Deserialize, Serialize};

pub const Z_95: f64 = 1.959_963_984_540_054;
pub const Z_99: f64 = 2.575_829_303_548_901;

/// A Monte Carlo estimate of a probability with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub successes: u64,
    pub trials: u64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn wilson(successes: u64, trials: u64, z: f64) -> Estimate {
        assert!(trials > 0 && successes <= trials);
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        // Exact endpoints at the boundaries; avoids 1e-17 style leakage.
        let ci_low = if successes == 0 {
            0.0
        } else {
            (centre - half).max(0.0)
        };
        let ci_high = if successes == trials {
            1.0
        } else {
            (centre + half).min(1.0)
        };
        Estimate {
            successes,
            trials,
            mean: p,
            ci_low,
            ci_high,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

/// Quantile by the nearest-rank rule on sorted data: the element at index
/// `ceil(q * len) - 1`, clamped to the valid range.
pub fn quantile_sorted<T: Copy>(sorted: &[T], q: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Lower median: index `(len - 1) / 2` of the sorted data.
pub fn lower_median<T: Copy>(sorted: &[T]) -> Option<T> {
    sorted.get(sorted.len().checked_sub(1)? / 2).copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_boundaries_are_exact() {
        let e = Estimate::wilson(0, 100, Z_95);
        assert_eq!((e.mean, e.ci_low), (0.0, 0.0));
        assert!(e.ci_high > 0.0 && e.ci_high < 0.05);
        let e = Estimate::wilson(100, 100, Z_95);
        assert_eq!((e.mean, e.ci_high), (1.0, 1.0));
    }

    #[test]
    fn wilson_matches_reference_value() {
        // Reference: statsmodels proportion_confint(40, 100, method="wilson").
        let e = Estimate::wilson(40, 100, Z_95);
        assert!((e.ci_low - 0.309_401).abs() < 1e-5, "{e:?}");
        assert!((e.ci_high - 0.497_997).abs() < 1e-5, "{e:?}");
    }

    #[test]
    fn quantiles() {
        let v = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        assert_eq!(lower_median(&v), Some(5));
        assert_eq!(quantile_sorted(&v, 0.95), Some(10));
        assert_eq!(quantile_sorted(&v, 0.0), Some(1));
        assert_eq!(lower_median::<u32>(&[]), None);
    }
}
