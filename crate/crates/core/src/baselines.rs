//! Two-moment mean-value approximations for GI/GI/c.
//!
//! These are the comparison stand-ins for the literature baselines: the exact
//! M/M/c mean, the Allen-Cunneen scaling of the M/M/c queue length, and the
//! same scaling multiplied by the Kraemer-Langenbach-Belz correction.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("unstable system: rho = {0} >= 1")]
    Infeasible(f64),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
}

/// First two moments of a GI/GI/c queue, expressed as rates and SCVs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoMomentSpec {
    pub lambda: f64,
    /// Per-server service rate.
    pub mu: f64,
    pub c: usize,
    pub ca2: f64,
    pub cs2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    ExactMarkovian,
    AllenCunneen,
    Klb,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact_markovian" | "exact-markovian" | "markovian" => Ok(Variant::ExactMarkovian),
            "allen_cunneen" | "allen-cunneen" | "ac" => Ok(Variant::AllenCunneen),
            "klb" => Ok(Variant::Klb),
            other => Err(format!("unknown baseline variant '{other}'")),
        }
    }
}

impl TwoMomentSpec {
    pub fn rho(&self) -> f64 {
        self.lambda / (self.c as f64 * self.mu)
    }

    fn check(&self) -> Result<f64, BaselineError> {
        if !(self.lambda > 0.0 && self.mu > 0.0 && self.c >= 1) {
            return Err(BaselineError::InvalidParameters(format!("{self:?}")));
        }
        if !(self.ca2 > 0.0 && self.cs2 > 0.0) {
            return Err(BaselineError::InvalidParameters(format!(
                "SCVs must be positive (ca2={}, cs2={})",
                self.ca2, self.cs2
            )));
        }
        let rho = self.rho();
        if rho >= 1.0 {
            return Err(BaselineError::Infeasible(rho));
        }
        Ok(rho)
    }
}

/// Erlang-C waiting probability via the Erlang-B recurrence.
pub fn erlang_c(spec: &TwoMomentSpec) -> Result<f64, BaselineError> {
    let rho = spec.check()?;
    let a = spec.lambda / spec.mu;
    let mut b = 1.0;
    for k in 1..=spec.c {
        b = a * b / (k as f64 + a * b);
    }
    Ok(b / (1.0 - rho * (1.0 - b)))
}

/// Kraemer-Langenbach-Belz correction factor.
pub fn klb_factor(rho: f64, ca2: f64, cs2: f64) -> f64 {
    if ca2 <= 1.0 {
        (-2.0 * (1.0 - rho) * (1.0 - ca2).powi(2) / (3.0 * rho * (ca2 + cs2))).exp()
    } else {
        (-(1.0 - rho) * (ca2 - 1.0) / (ca2 + 4.0 * cs2)).exp()
    }
}

/// Approximate `E[L]` (queue plus service).
pub fn mean_l(spec: &TwoMomentSpec, variant: Variant) -> Result<f64, BaselineError> {
    let rho = spec.check()?;
    let offered = spec.lambda / spec.mu;
    let lq_markov = erlang_c(spec)? * rho / (1.0 - rho);
    let scaling = 0.5 * (spec.ca2 + spec.cs2);
    let lq = match variant {
        Variant::ExactMarkovian => lq_markov,
        Variant::AllenCunneen => lq_markov * scaling,
        Variant::Klb => lq_markov * scaling * klb_factor(rho, spec.ca2, spec.cs2),
    };
    Ok(lq + offered)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lambda: f64, mu: f64, c: usize, ca2: f64, cs2: f64) -> TwoMomentSpec {
        TwoMomentSpec {
            lambda,
            mu,
            c,
            ca2,
            cs2,
        }
    }

    /// `C(c, a)` from the factorial form.
    fn erlang_c_direct(c: usize, a: f64) -> f64 {
        let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
        let rho = a / c as f64;
        let top = a.powi(c as i32) / fact(c) / (1.0 - rho);
        let bottom: f64 = (0..c).map(|k| a.powi(k as i32) / fact(k)).sum::<f64>() + top;
        top / bottom
    }

    #[test]
    fn erlang_c_examples() {
        assert!((erlang_c(&spec(0.3, 1.0, 1, 1.0, 1.0)).unwrap() - 0.3).abs() < 1e-15);
        assert!((erlang_c(&spec(1.0, 1.0, 2, 1.0, 1.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(erlang_c(&spec(1e-6, 1.0, 3, 1.0, 1.0)).unwrap() < 1e-12);
    }

    #[test]
    fn recurrence_matches_factorial_form() {
        for c in 1..=20 {
            for &rho in &[0.05, 0.3, 0.6, 0.9, 0.99] {
                let a = rho * c as f64;
                let got = erlang_c(&spec(a, 1.0, c, 1.0, 1.0)).unwrap();
                let want = erlang_c_direct(c, a);
                assert!((got - want).abs() < 1e-12, "c={c} rho={rho}");
                assert!((0.0..=1.0).contains(&got));
            }
        }
    }

    #[test]
    fn markovian_mm2_mean() {
        let l = mean_l(&spec(1.0, 1.0, 2, 1.0, 1.0), Variant::ExactMarkovian).unwrap();
        assert!((l - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn variants_coincide_for_markovian_scvs() {
        for c in [1usize, 3, 7] {
            let s = spec(1.0, 1.5 / c as f64, c, 1.0, 1.0);
            let m = mean_l(&s, Variant::ExactMarkovian).unwrap();
            assert_eq!(m, mean_l(&s, Variant::AllenCunneen).unwrap());
            assert_eq!(m, mean_l(&s, Variant::Klb).unwrap());
        }
    }

    #[test]
    fn mean_increases_with_load() {
        for c in [1usize, 2, 5, 10] {
            for &(ca2, cs2) in &[(0.25, 4.0), (4.0, 0.25), (1.0, 1.0), (2.0, 2.0)] {
                for v in [Variant::ExactMarkovian, Variant::AllenCunneen, Variant::Klb] {
                    let mut prev = 0.0;
                    for i in 1..95 {
                        let rho = i as f64 / 100.0;
                        let l = mean_l(&spec(1.0, 1.0 / (c as f64 * rho), c, ca2, cs2), v).unwrap();
                        assert!(l > prev, "c={c} {v:?} rho={rho}");
                        prev = l;
                    }
                }
            }
        }
    }

    #[test]
    fn unstable_is_infeasible() {
        assert!(matches!(
            mean_l(&spec(2.0, 1.0, 2, 1.0, 1.0), Variant::Klb),
            Err(BaselineError::Infeasible(_))
        ));
        assert!(erlang_c(&spec(1.0, 1.0, 1, 1.0, 1.0)).is_err());
    }
}
