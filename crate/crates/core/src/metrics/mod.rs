//! Accuracy metrics between true and predicted occupancy distributions.
//!
//! * SAE: mean over rows of the L1 distance (Wasserstein-1 on the lattice).
//! * PARE: mean absolute relative error of a quantile, in percent.
//! * REM: mean absolute relative error of the mean, in percent, relative to
//!   the predicted mean unless [`RemDenominator::Truth`] is requested.

mod report;
mod segment;

use serde::{Deserialize, Serialize};

pub use report::{report, Report, ReportRow, DEFAULT_PERCENTILES};
pub use segment::{all_keys, segment, SegmentKey, SegmentMeta, Segmented};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("row count mismatch: {truth} truth rows vs {pred} predicted rows")]
    RowCount { truth: usize, pred: usize },
    #[error("row {row}: length {got} differs from {expected}")]
    RowLength {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("percentile {0} outside (0, 100]")]
    Percentile(f64),
}

/// Ground-truth and predicted distributions, row aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    truth: Vec<Vec<f64>>,
    pred: Vec<Vec<f64>>,
}

impl EvalPair {
    pub fn new(truth: Vec<Vec<f64>>, pred: Vec<Vec<f64>>) -> Result<Self, MetricsError> {
        if truth.len() != pred.len() {
            return Err(MetricsError::RowCount {
                truth: truth.len(),
                pred: pred.len(),
            });
        }
        let expected = truth.first().map_or(0, |r| r.len());
        for (row, (y, yh)) in truth.iter().zip(&pred).enumerate() {
            for got in [y.len(), yh.len()] {
                if got != expected {
                    return Err(MetricsError::RowLength { row, expected, got });
                }
            }
        }
        Ok(EvalPair { truth, pred })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn truth(&self) -> &[Vec<f64>] {
        &self.truth
    }

    pub fn pred(&self) -> &[Vec<f64>] {
        &self.pred
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, rows: &[usize]) -> EvalPair {
        EvalPair {
            truth: rows.iter().map(|&i| self.truth[i].clone()).collect(),
            pred: rows.iter().map(|&i| self.pred[i].clone()).collect(),
        }
    }

    pub fn sae(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.truth
            .iter()
            .zip(&self.pred)
            .map(|(y, yh)| row_sae(y, yh))
            .sum::<f64>()
            / self.len() as f64
    }

    pub fn pare(&self, percentile: f64) -> Result<RatioOutcome, MetricsError> {
        if !(percentile > 0.0 && percentile <= 100.0) {
            return Err(MetricsError::Percentile(percentile));
        }
        let mut out = RatioAccumulator::default();
        for (y, yh) in self.truth.iter().zip(&self.pred) {
            let qt = quantile(y, percentile);
            let qp = quantile(yh, percentile);
            match (qt, qp) {
                (0, 0) => out.push(0.0),
                (0, _) => out.exclude(),
                _ => out.push((qt as f64 - qp as f64).abs() / qt as f64),
            }
        }
        Ok(out.finish())
    }

    pub fn rem(&self, denominator: RemDenominator) -> RatioOutcome {
        let means: Vec<(f64, f64)> = self
            .truth
            .iter()
            .zip(&self.pred)
            .map(|(y, yh)| (lattice_mean(y), lattice_mean(yh)))
            .collect();
        rem_from_means(&means, denominator)
    }
}

/// Which mean divides the absolute error in REM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemDenominator {
    #[default]
    Predicted,
    Truth,
}

/// Percent-valued mean over contributing rows; `excluded` rows had a zero
/// denominator with a nonzero numerator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioOutcome {
    pub value: f64,
    pub used: usize,
    pub excluded: usize,
}

#[derive(Default)]
struct RatioAccumulator {
    sum: f64,
    used: usize,
    excluded: usize,
}

impl RatioAccumulator {
    fn push(&mut self, r: f64) {
        self.sum += r;
        self.used += 1;
    }

    fn exclude(&mut self) {
        self.excluded += 1;
    }

    fn finish(self) -> RatioOutcome {
        RatioOutcome {
            value: if self.used == 0 {
                f64::NAN
            } else {
                100.0 * self.sum / self.used as f64
            },
            used: self.used,
            excluded: self.excluded,
        }
    }
}

/// REM from `(true mean, predicted mean)` pairs, usable for scalar baselines.
pub fn rem_from_means(means: &[(f64, f64)], denominator: RemDenominator) -> RatioOutcome {
    let mut out = RatioAccumulator::default();
    for &(t, p) in means {
        let d = match denominator {
            RemDenominator::Predicted => p,
            RemDenominator::Truth => t,
        };
        let err = (t - p).abs();
        if d == 0.0 {
            if err == 0.0 {
                out.push(0.0);
            } else {
                out.exclude();
            }
        } else {
            out.push(err / d);
        }
    }
    out.finish()
}

/// `sum_j |y_j - yh_j|`.
pub fn row_sae(y: &[f64], yh: &[f64]) -> f64 {
    y.iter().zip(yh).map(|(a, b)| (a - b).abs()).sum()
}

/// `sum_j j p_j`.
pub fn lattice_mean(p: &[f64]) -> f64 {
    crate::simqueue::mean_of(p)
}

/// Smallest `j` with `CDF(j) >= percentile / 100`; `p.len()` if the
/// truncated mass never reaches the level.
pub fn quantile(p: &[f64], percentile: f64) -> usize {
    let level = percentile / 100.0;
    let mut cdf = 0.0;
    for (j, v) in p.iter().enumerate() {
        cdf += v;
        if cdf >= level {
            return j;
        }
    }
    p.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pad(v: &[f64], l: usize) -> Vec<f64> {
        let mut out = v.to_vec();
        out.resize(l, 0.0);
        out
    }

    #[test]
    fn identical_pairs_score_zero() {
        let rows = vec![pad(&[0.2, 0.3, 0.5], 10), pad(&[1.0], 10), pad(&[0.1, 0.9], 10)];
        let pair = EvalPair::new(rows.clone(), rows).unwrap();
        assert_eq!(pair.sae(), 0.0);
        for p in DEFAULT_PERCENTILES {
            assert_eq!(pair.pare(p).unwrap().value, 0.0);
        }
        assert_eq!(pair.rem(RemDenominator::Predicted).value, 0.0);
    }

    #[test]
    fn sae_hand_example() {
        let pair = EvalPair::new(vec![pad(&[0.5, 0.5], 500)], vec![pad(&[0.6, 0.4], 500)]).unwrap();
        assert!((pair.sae() - 0.2).abs() < 1e-15);
        let swapped = EvalPair::new(vec![pad(&[0.6, 0.4], 500)], vec![pad(&[0.5, 0.5], 500)]).unwrap();
        assert_eq!(pair.sae(), swapped.sae());
    }

    #[test]
    fn pare_hand_example() {
        // true median at 2, predicted median at 3
        let y = pad(&[0.2, 0.2, 0.2, 0.2, 0.2], 20);
        let yh = pad(&[0.1, 0.1, 0.2, 0.3, 0.3], 20);
        assert_eq!(quantile(&y, 50.0), 2);
        assert_eq!(quantile(&yh, 50.0), 3);
        let pair = EvalPair::new(vec![y], vec![yh]).unwrap();
        let r = pair.pare(50.0).unwrap();
        assert_eq!(r.value, 50.0);
        assert_eq!((r.used, r.excluded), (1, 0));
    }

    #[test]
    fn pare_zero_quantile_rules() {
        let both_zero = (pad(&[0.9, 0.1], 5), pad(&[0.8, 0.2], 5));
        let truth_zero = (pad(&[0.9, 0.1], 5), pad(&[0.1, 0.9], 5));
        let pair = EvalPair::new(
            vec![both_zero.0, truth_zero.0],
            vec![both_zero.1, truth_zero.1],
        )
        .unwrap();
        let r = pair.pare(50.0).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!((r.used, r.excluded), (1, 1));
    }

    #[test]
    fn pare_ignores_mass_moves_that_keep_quantiles() {
        let y = pad(&[0.1, 0.2, 0.3, 0.4], 8);
        let yh = pad(&[0.3, 0.0, 0.3, 0.4], 8);
        let pair = EvalPair::new(vec![y], vec![yh]).unwrap();
        assert_eq!(pair.pare(50.0).unwrap().value, 0.0);
    }

    #[test]
    fn rem_hand_example() {
        // true mean 2 (point mass), predicted mean 2.5
        let y = pad(&[0.0, 0.0, 1.0], 6);
        let yh = pad(&[0.0, 0.0, 0.5, 0.5], 6);
        let pair = EvalPair::new(vec![y.clone()], vec![yh]).unwrap();
        assert!((pair.rem(RemDenominator::Predicted).value - 20.0).abs() < 1e-12);
        assert!((pair.rem(RemDenominator::Truth).value - 25.0).abs() < 1e-12);
        // any other predicted law with mean 2.5 scores the same
        let yh2 = pad(&[0.0, 0.5, 0.0, 0.0, 0.5], 6);
        let pair2 = EvalPair::new(vec![y], vec![yh2]).unwrap();
        assert!((pair2.rem(RemDenominator::Predicted).value - 20.0).abs() < 1e-12);
    }

    #[test]
    fn rem_zero_predicted_mean_is_excluded() {
        let r = rem_from_means(&[(1.0, 0.0), (0.0, 0.0), (2.0, 2.5)], RemDenominator::Predicted);
        assert_eq!((r.used, r.excluded), (2, 1));
        assert!((r.value - 10.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        assert!(matches!(
            EvalPair::new(vec![vec![1.0]], vec![]),
            Err(MetricsError::RowCount { truth: 1, pred: 0 })
        ));
        assert!(EvalPair::new(vec![vec![1.0, 0.0]], vec![vec![1.0]]).is_err());
        let pair = EvalPair::new(vec![vec![1.0]], vec![vec![1.0]]).unwrap();
        assert!(pair.pare(0.0).is_err());
        assert!(pair.pare(101.0).is_err());
    }

    #[test]
    fn quantile_beyond_truncated_mass() {
        assert_eq!(quantile(&[0.5, 0.49], 99.9), 2);
        assert_eq!(quantile(&[0.25, 0.25, 0.5], 25.0), 0);
        assert_eq!(quantile(&[0.25, 0.25, 0.5], 25.0001), 1);
    }
}
