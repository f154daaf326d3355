use std::ops::Index;

use serde::{Deserialize, Serialize};

use super::DistError;

/// Raw moments `E[X], E[X^2], ..., E[X^n]` of a nonnegative distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MomentVector(Vec<f64>);

impl MomentVector {
    pub fn new(m: Vec<f64>) -> Result<Self, DistError> {
        if m.is_empty() {
            return Err(DistError::TooFewMoments { needed: 1, got: 0 });
        }
        if let Some(bad) = m.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(DistError::InvalidParameters(format!(
                "moments must be positive and finite, found {bad}"
            )));
        }
        Ok(MomentVector(m))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0[0]
    }

    /// Moments of `X / rate`: entry k is divided by `rate^(k+1)`.
    pub fn scaled(&self, rate: f64) -> MomentVector {
        let mut f = 1.0;
        MomentVector(
            self.0
                .iter()
                .map(|m| {
                    f *= rate;
                    m / f
                })
                .collect(),
        )
    }

    pub fn truncated(&self, n: usize) -> MomentVector {
        MomentVector(self.0[..n.min(self.0.len())].to_vec())
    }

    /// Checks `m2 >= m1^2` and `m[k]^2 <= m[k-1] m[k+1]` with relative slack `tol`.
    pub fn is_log_convex(&self, tol: f64) -> bool {
        let m = &self.0;
        if m.len() >= 2 && m[1] < m[0] * m[0] * (1.0 - tol) {
            return false;
        }
        m.windows(3)
            .all(|w| w[1] * w[1] <= w[0] * w[2] * (1.0 + tol))
    }

    /// Natural log of each moment.
    pub fn log(&self) -> Vec<f64> {
        self.0.iter().map(|m| m.ln()).collect()
    }
}

impl Index<usize> for MomentVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Squared coefficient of variation `(m2 - m1^2) / m1^2`.
pub fn scv(m: &MomentVector) -> Result<f64, DistError> {
    if m.len() < 2 {
        return Err(DistError::TooFewMoments {
            needed: 2,
            got: m.len(),
        });
    }
    Ok((m[1] - m[0] * m[0]) / (m[0] * m[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mv(v: &[f64]) -> MomentVector {
        MomentVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn scv_examples() {
        assert_eq!(scv(&mv(&[1.0, 2.0, 6.0])).unwrap(), 1.0);
        assert_eq!(scv(&mv(&[1.0, 1.5, 3.0])).unwrap(), 0.5);
        assert_eq!(scv(&mv(&[2.0, 8.0])).unwrap(), 1.0);
        assert!(matches!(
            scv(&mv(&[1.0])),
            Err(DistError::TooFewMoments { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn nonpositive_moments_rejected() {
        assert!(MomentVector::new(vec![1.0, 0.0]).is_err());
        assert!(MomentVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(MomentVector::new(vec![]).is_err());
    }

    #[test]
    fn log_convexity_detects_violations() {
        assert!(mv(&[1.0, 2.0, 6.0, 24.0]).is_log_convex(1e-12));
        assert!(!mv(&[1.0, 0.5]).is_log_convex(1e-12));
        assert!(!mv(&[1.0, 2.0, 3.0]).is_log_convex(1e-12));
    }
}
