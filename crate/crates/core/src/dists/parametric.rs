use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, LogNormal};

use super::{DistError, MomentVector};

/// Closed-form families used for the benchmark grid.
///
/// `Erlang::rate` is the rate of each of the `k` exponential stages, so the
/// mean is `k / rate`. `LogNormal` is parameterized by the mean and standard
/// deviation of `ln X`.
#[derive(Debug, Clone, PartialEq)]
pub enum ParametricDist {
    Exponential { rate: f64 },
    Erlang { k: u32, rate: f64 },
    HyperExp2 { p1: f64, rate1: f64, rate2: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Gamma { shape: f64, scale: f64 },
}

fn positive(name: &str, v: f64) -> Result<(), DistError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(DistError::InvalidParameters(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl ParametricDist {
    pub fn exponential_with_mean(mean: f64) -> Result<Self, DistError> {
        positive("mean", mean)?;
        Ok(ParametricDist::Exponential { rate: 1.0 / mean })
    }

    /// Erlang-k with the given mean; its SCV is `1/k`.
    pub fn erlang_with_mean(k: u32, mean: f64) -> Result<Self, DistError> {
        positive("mean", mean)?;
        let d = ParametricDist::Erlang {
            k,
            rate: k as f64 / mean,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn lognormal_with_mean_scv(mean: f64, scv: f64) -> Result<Self, DistError> {
        positive("mean", mean)?;
        positive("scv", scv)?;
        let s2 = scv.ln_1p();
        Ok(ParametricDist::LogNormal {
            mu: mean.ln() - 0.5 * s2,
            sigma: s2.sqrt(),
        })
    }

    pub fn gamma_with_mean_scv(mean: f64, scv: f64) -> Result<Self, DistError> {
        positive("mean", mean)?;
        positive("scv", scv)?;
        Ok(ParametricDist::Gamma {
            shape: 1.0 / scv,
            scale: mean * scv,
        })
    }

    pub fn validate(&self) -> Result<(), DistError> {
        match *self {
            ParametricDist::Exponential { rate } => positive("rate", rate),
            ParametricDist::Erlang { k, rate } => {
                if k == 0 {
                    return Err(DistError::InvalidParameters("Erlang k must be >= 1".into()));
                }
                positive("rate", rate)
            }
            ParametricDist::HyperExp2 { p1, rate1, rate2 } => {
                if !(p1 > 0.0 && p1 < 1.0) {
                    return Err(DistError::InvalidParameters(format!(
                        "H2 branch probability must lie in (0,1), got {p1}"
                    )));
                }
                positive("rate1", rate1)?;
                positive("rate2", rate2)
            }
            ParametricDist::LogNormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(DistError::InvalidParameters(format!("lognormal mu {mu}")));
                }
                positive("sigma", sigma)
            }
            ParametricDist::Gamma { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ParametricDist::Exponential { rate } => 1.0 / rate,
            ParametricDist::Erlang { k, rate } => k as f64 / rate,
            ParametricDist::HyperExp2 { p1, rate1, rate2 } => p1 / rate1 + (1.0 - p1) / rate2,
            ParametricDist::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            ParametricDist::Gamma { shape, scale } => shape * scale,
        }
    }

    pub fn moments(&self, n: usize) -> Result<MomentVector, DistError> {
        if n == 0 {
            return Err(DistError::TooFewMoments { needed: 1, got: 0 });
        }
        self.validate()?;
        let m = (1..=n)
            .map(|j| {
                let jf = j as f64;
                match *self {
                    ParametricDist::Exponential { rate } => factorial(j) / rate.powi(j as i32),
                    ParametricDist::Erlang { k, rate } => {
                        rising(k as f64, j) / rate.powi(j as i32)
                    }
                    ParametricDist::HyperExp2 { p1, rate1, rate2 } => {
                        factorial(j)
                            * (p1 / rate1.powi(j as i32) + (1.0 - p1) / rate2.powi(j as i32))
                    }
                    ParametricDist::LogNormal { mu, sigma } => {
                        (jf * mu + 0.5 * jf * jf * sigma * sigma).exp()
                    }
                    ParametricDist::Gamma { shape, scale } => {
                        scale.powi(j as i32) * rising(shape, j)
                    }
                }
            })
            .collect();
        MomentVector::new(m)
    }

    pub fn scaled(&self, r: f64) -> ParametricDist {
        match *self {
            ParametricDist::Exponential { rate } => ParametricDist::Exponential { rate: rate * r },
            ParametricDist::Erlang { k, rate } => ParametricDist::Erlang { k, rate: rate * r },
            ParametricDist::HyperExp2 { p1, rate1, rate2 } => ParametricDist::HyperExp2 {
                p1,
                rate1: rate1 * r,
                rate2: rate2 * r,
            },
            ParametricDist::LogNormal { mu, sigma } => ParametricDist::LogNormal {
                mu: mu - r.ln(),
                sigma,
            },
            ParametricDist::Gamma { shape, scale } => ParametricDist::Gamma {
                shape,
                scale: scale / r,
            },
        }
    }

    pub fn family(&self) -> String {
        let scv = self
            .moments(2)
            .ok()
            .and_then(|m| super::scv(&m).ok())
            .unwrap_or(f64::NAN);
        let short = |v: f64| format!("{}", (v * 1e4).round() / 1e4);
        match *self {
            ParametricDist::Exponential { .. } => "M".into(),
            ParametricDist::Erlang { k, .. } => format!("E{k}"),
            ParametricDist::HyperExp2 { .. } => format!("H2({})", short(scv)),
            ParametricDist::LogNormal { .. } => format!("LN({})", short(scv)),
            ParametricDist::Gamma { .. } => format!("G({})", short(scv)),
        }
    }

    pub fn sampler(&self) -> ParametricSampler {
        match *self {
            ParametricDist::Exponential { rate } => ParametricSampler::Exp { rate },
            ParametricDist::Erlang { k, rate } => {
                if k == 1 {
                    ParametricSampler::Exp { rate }
                } else {
                    ParametricSampler::Gamma(Gamma::new(k as f64, 1.0 / rate).expect("validated"))
                }
            }
            ParametricDist::HyperExp2 { p1, rate1, rate2 } => {
                ParametricSampler::H2 { p1, rate1, rate2 }
            }
            ParametricDist::LogNormal { mu, sigma } => {
                ParametricSampler::LogNormal(LogNormal::new(mu, sigma).expect("validated"))
            }
            ParametricDist::Gamma { shape, scale } => {
                ParametricSampler::Gamma(Gamma::new(shape, scale).expect("validated"))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum ParametricSampler {
    Exp { rate: f64 },
    H2 { p1: f64, rate1: f64, rate2: f64 },
    Gamma(Gamma<f64>),
    LogNormal(LogNormal<f64>),
}

impl ParametricSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ParametricSampler::Exp { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            ParametricSampler::H2 { p1, rate1, rate2 } => {
                let rate = if rng.random::<f64>() < *p1 { rate1 } else { rate2 };
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            ParametricSampler::Gamma(g) => g.sample(rng),
            ParametricSampler::LogNormal(ln) => ln.sample(rng),
        }
    }
}

fn factorial(j: usize) -> f64 {
    (1..=j).map(|i| i as f64).product()
}

/// `x (x+1) ... (x+j-1)`.
fn rising(x: f64, j: usize) -> f64 {
    (0..j).map(|i| x + i as f64).product()
}

/// Two-branch hyperexponential with balanced means (`p1/rate1 = p2/rate2`)
/// matching the target mean and SCV.
pub fn fit_h2_balanced(mean: f64, scv: f64) -> Result<ParametricDist, DistError> {
    positive("mean", mean)?;
    if !(scv > 1.0) || !scv.is_finite() {
        return Err(DistError::InfeasibleFamily(scv));
    }
    let p1 = 0.5 * (1.0 + ((scv - 1.0) / (scv + 1.0)).sqrt());
    Ok(ParametricDist::HyperExp2 {
        p1,
        rate1: 2.0 * p1 / mean,
        rate2: 2.0 * (1.0 - p1) / mean,
    })
}
