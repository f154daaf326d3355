//! Random phase-type generator used to build training inputs.
//!
//! Each candidate picks a structure class, an order and log-uniform rates,
//! is rescaled to unit mean, and is kept only if its SCV falls inside the
//! configured window.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::{scv, DistError, PhaseType};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhStructure {
    /// Mixture of Erlang branches, each with its own stage rate.
    HyperErlang,
    /// Chain with per-stage continuation probabilities.
    Coxian,
    /// Sparse random sub-generator with exits from every phase.
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhSamplerConfig {
    pub min_order: usize,
    pub max_order: usize,
    pub rate_min: f64,
    pub rate_max: f64,
    pub scv_min: f64,
    pub scv_max: f64,
    pub max_attempts: usize,
    /// Restricts the structure class; `None` samples all three uniformly.
    pub structure: Option<PhStructure>,
}

impl Default for PhSamplerConfig {
    fn default() -> Self {
        PhSamplerConfig {
            min_order: 2,
            max_order: 100,
            rate_min: 1e-2,
            rate_max: 1e2,
            scv_min: 0.0025,
            scv_max: 20.0,
            max_attempts: 1000,
            structure: None,
        }
    }
}

/// Unit-mean phase-type distribution for the given seed.
pub fn sample_ph(seed: u64, cfg: &PhSamplerConfig) -> Result<PhaseType, DistError> {
    let mut rng = rng_from_seed(seed);
    sample_ph_with(&mut rng, cfg)
}

pub fn sample_ph_with<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &PhSamplerConfig,
) -> Result<PhaseType, DistError> {
    if cfg.min_order < 1 || cfg.max_order < cfg.min_order {
        return Err(DistError::InvalidParameters(format!(
            "order range [{}, {}]",
            cfg.min_order, cfg.max_order
        )));
    }
    if !(cfg.rate_min > 0.0 && cfg.rate_max >= cfg.rate_min) {
        return Err(DistError::InvalidParameters(format!(
            "rate range [{}, {}]",
            cfg.rate_min, cfg.rate_max
        )));
    }
    for _ in 0..cfg.max_attempts {
        let structure = cfg.structure.unwrap_or_else(|| match rng.random_range(0..3) {
            0 => PhStructure::HyperErlang,
            1 => PhStructure::Coxian,
            _ => PhStructure::General,
        });
        let order = rng.random_range(cfg.min_order..=cfg.max_order);
        let (alpha, t) = match structure {
            PhStructure::HyperErlang => hyper_erlang(rng, cfg, order),
            PhStructure::Coxian => coxian(rng, cfg, order),
            PhStructure::General => general(rng, cfg, order),
        };
        let Ok(ph) = PhaseType::new(alpha, t) else {
            continue;
        };
        let Ok(m) = ph.moments(2) else { continue };
        let unit = ph.scaled(m[0]);
        let Ok(m) = unit.moments(2) else { continue };
        let Ok(s) = scv(&m) else { continue };
        if s.is_finite() && s >= cfg.scv_min && s <= cfg.scv_max {
            return Ok(unit);
        }
    }
    Err(DistError::ResampleNeeded(cfg.max_attempts))
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Flat Dirichlet(1, ..., 1) weights.
fn dirichlet<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e + 1e-12
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn hyper_erlang<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &PhSamplerConfig,
    order: usize,
) -> (Vec<f64>, Vec<f64>) {
    let branches = rng.random_range(1..=order.min(10));
    // Split `order` stages into `branches` nonempty blocks via sorted cut points.
    let mut cuts = rand::seq::index::sample(rng, order - 1, branches - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect::<Vec<_>>();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(order);
    let probs = dirichlet(rng, branches);
    let mut alpha = vec![0.0; order];
    let mut t = vec![0.0; order * order];
    for (b, w) in bounds.windows(2).enumerate() {
        let (start, end) = (w[0], w[1]);
        let rate = log_uniform(rng, cfg.rate_min, cfg.rate_max);
        alpha[start] = probs[b];
        for i in start..end {
            t[i * order + i] = -rate;
            if i + 1 < end {
                t[i * order + i + 1] = rate;
            }
        }
    }
    (alpha, t)
}

fn coxian<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &PhSamplerConfig,
    order: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut alpha = vec![0.0; order];
    alpha[0] = 1.0;
    let mut t = vec![0.0; order * order];
    for i in 0..order {
        let rate = log_uniform(rng, cfg.rate_min, cfg.rate_max);
        t[i * order + i] = -rate;
        if i + 1 < order {
            let q: f64 = rng.random();
            t[i * order + i + 1] = q * rate;
        }
    }
    (alpha, t)
}

fn general<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &PhSamplerConfig,
    order: usize,
) -> (Vec<f64>, Vec<f64>) {
    let alpha = dirichlet(rng, order);
    let mut t = vec![0.0; order * order];
    for i in 0..order {
        let rate = log_uniform(rng, cfg.rate_min, cfg.rate_max);
        t[i * order + i] = -rate;
        let fanout = (order - 1).min(3);
        let others: Vec<usize> = rand::seq::index::sample(rng, order - 1, fanout)
            .into_iter()
            .map(|j| if j >= i { j + 1 } else { j })
            .collect();
        // Last weight is the exit; the row sum is -rate * exit_weight < 0.
        let w = dirichlet(rng, fanout + 1);
        for (k, &j) in others.iter().enumerate() {
            t[i * order + j] = rate * w[k];
        }
    }
    (alpha, t)
}
