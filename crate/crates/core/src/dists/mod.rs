//! Nonnegative continuous distributions used for inter-arrival and service
//! times: phase-type distributions (the training generator) and the closed-form
//! parametric families used by the external benchmark grid.
//!
//! Every distribution can report its first `n` raw moments analytically, be
//! rescaled in time, and be sampled through a precomputed [`DistSampler`].

mod moments;
mod parametric;
mod phase_type;
mod sampler;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use moments::{scv, MomentVector};
pub use parametric::{fit_h2_balanced, ParametricDist};
pub use phase_type::{PhaseType, PhaseTypeSampler};
pub use sampler::{sample_ph, sample_ph_with, PhSamplerConfig, PhStructure};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistError {
    #[error("invalid phase-type representation: {0}")]
    InvalidPhaseType(String),
    #[error("invalid distribution parameters: {0}")]
    InvalidParameters(String),
    #[error("balanced hyperexponential fit requires scv > 1 (got {0})")]
    InfeasibleFamily(f64),
    #[error("need at least {needed} moments, got {got}")]
    TooFewMoments { needed: usize, got: usize },
    #[error("phase-type sampler gave up after {0} rejected candidates")]
    ResampleNeeded(usize),
}

/// A distribution of a nonnegative random time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistRepr", into = "DistRepr")]
pub enum Dist {
    Ph(PhaseType),
    Parametric(ParametricDist),
}

impl Dist {
    pub fn exponential(mean: f64) -> Result<Self, DistError> {
        Ok(Dist::Parametric(ParametricDist::exponential_with_mean(mean)?))
    }

    /// First `n` raw moments.
    pub fn moments(&self, n: usize) -> Result<MomentVector, DistError> {
        match self {
            Dist::Ph(ph) => ph.moments(n),
            Dist::Parametric(p) => p.moments(n),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Dist::Ph(ph) => ph.mean(),
            Dist::Parametric(p) => p.mean(),
        }
    }

    /// Returns the law of `X / rate`.
    pub fn scaled(&self, rate: f64) -> Result<Self, DistError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(DistError::InvalidParameters(format!(
                "scale rate must be positive and finite, got {rate}"
            )));
        }
        Ok(match self {
            Dist::Ph(ph) => Dist::Ph(ph.scaled(rate)),
            Dist::Parametric(p) => Dist::Parametric(p.scaled(rate)),
        })
    }

    /// Prepares per-distribution lookup tables for repeated draws.
    pub fn sampler(&self) -> DistSampler {
        match self {
            Dist::Ph(ph) => DistSampler::Ph(ph.sampler()),
            Dist::Parametric(p) => DistSampler::Parametric(p.sampler()),
        }
    }

    /// Draws a single variate. Builds the sampler each call; use
    /// [`Dist::sampler`] in loops.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }

    /// Short family tag used in dataset metadata.
    pub fn family(&self) -> String {
        match self {
            Dist::Ph(ph) => format!("ph{}", ph.order()),
            Dist::Parametric(p) => p.family(),
        }
    }
}

impl From<PhaseType> for Dist {
    fn from(ph: PhaseType) -> Self {
        Dist::Ph(ph)
    }
}

impl From<ParametricDist> for Dist {
    fn from(p: ParametricDist) -> Self {
        Dist::Parametric(p)
    }
}

/// Ready-to-draw form of a [`Dist`].
#[derive(Debug, Clone)]
pub enum DistSampler {
    Ph(PhaseTypeSampler),
    Parametric(parametric::ParametricSampler),
}

impl DistSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DistSampler::Ph(s) => s.sample(rng),
            DistSampler::Parametric(s) => s.sample(rng),
        }
    }
}

/// Wire format: `{"kind": "ph"|"exp"|"erlang"|"h2"|"lognormal"|"gamma", ...}`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum DistRepr {
    #[serde(rename = "ph")]
    Ph { alpha: Vec<f64>, t: Vec<Vec<f64>> },
    #[serde(rename = "exp")]
    Exp { rate: f64 },
    #[serde(rename = "erlang")]
    Erlang { k: u32, rate: f64 },
    #[serde(rename = "h2")]
    H2 { p1: f64, rate1: f64, rate2: f64 },
    #[serde(rename = "lognormal")]
    LogNormal { mu: f64, sigma: f64 },
    #[serde(rename = "gamma")]
    Gamma { shape: f64, scale: f64 },
}

impl TryFrom<DistRepr> for Dist {
    type Error = DistError;

    fn try_from(r: DistRepr) -> Result<Self, DistError> {
        let p = match r {
            DistRepr::Ph { alpha, t } => {
                let order = alpha.len();
                if t.len() != order || t.iter().any(|row| row.len() != order) {
                    return Err(DistError::InvalidPhaseType(format!(
                        "T must be {order}x{order}"
                    )));
                }
                let flat: Vec<f64> = t.into_iter().flatten().collect();
                return Ok(Dist::Ph(PhaseType::new(alpha, flat)?));
            }
            DistRepr::Exp { rate } => ParametricDist::Exponential { rate },
            DistRepr::Erlang { k, rate } => ParametricDist::Erlang { k, rate },
            DistRepr::H2 { p1, rate1, rate2 } => ParametricDist::HyperExp2 { p1, rate1, rate2 },
            DistRepr::LogNormal { mu, sigma } => ParametricDist::LogNormal { mu, sigma },
            DistRepr::Gamma { shape, scale } => ParametricDist::Gamma { shape, scale },
        };
        p.validate()?;
        Ok(Dist::Parametric(p))
    }
}

impl From<Dist> for DistRepr {
    fn from(d: Dist) -> Self {
        match d {
            Dist::Ph(ph) => DistRepr::Ph {
                alpha: ph.alpha().to_vec(),
                t: ph.generator_rows(),
            },
            Dist::Parametric(p) => match p {
                ParametricDist::Exponential { rate } => DistRepr::Exp { rate },
                ParametricDist::Erlang { k, rate } => DistRepr::Erlang { k, rate },
                ParametricDist::HyperExp2 { p1, rate1, rate2 } => DistRepr::H2 { p1, rate1, rate2 },
                ParametricDist::LogNormal { mu, sigma } => DistRepr::LogNormal { mu, sigma },
                ParametricDist::Gamma { shape, scale } => DistRepr::Gamma { shape, scale },
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_keeps_kind_tags() {
        let dists = [
            Dist::exponential(2.0).unwrap(),
            Dist::Parametric(ParametricDist::erlang_with_mean(4, 1.0).unwrap()),
            Dist::Parametric(fit_h2_balanced(1.0, 4.0).unwrap()),
            Dist::Parametric(ParametricDist::lognormal_with_mean_scv(1.0, 0.25).unwrap()),
            Dist::Parametric(ParametricDist::gamma_with_mean_scv(1.0, 4.0).unwrap()),
            Dist::Ph(PhaseType::new(vec![0.3, 0.7], vec![-2.0, 1.0, 0.0, -3.0]).unwrap()),
        ];
        let kinds = ["exp", "erlang", "h2", "lognormal", "gamma", "ph"];
        for (d, kind) in dists.iter().zip(kinds) {
            let s = serde_json::to_string(d).unwrap();
            let v: serde_json::Value = serde_json::from_str(&s).unwrap();
            assert_eq!(v["kind"], kind);
            let back: Dist = serde_json::from_str(&s).unwrap();
            assert_eq!(&back, d);
        }
    }

    #[test]
    fn ph_json_stores_rows() {
        let s = r#"{"kind":"ph","alpha":[1.0,0.0],"t":[[-2.0,2.0],[0.0,-2.0]]}"#;
        let d: Dist = serde_json::from_str(s).unwrap();
        let m = d.moments(3).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12);
        assert!((m[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_json_is_rejected() {
        for s in [
            r#"{"kind":"exp","rate":-1.0}"#,
            r#"{"kind":"ph","alpha":[1.0],"t":[[1.0]]}"#,
            r#"{"kind":"ph","alpha":[0.5,0.5],"t":[[-1.0]]}"#,
            r#"{"kind":"h2","p1":1.5,"rate1":1.0,"rate2":1.0}"#,
            r#"{"kind":"weibull","shape":1.0}"#,
        ] {
            assert!(serde_json::from_str::<Dist>(s).is_err(), "{s}");
        }
    }
}
