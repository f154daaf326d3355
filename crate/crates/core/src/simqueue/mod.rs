//! FCFS multi-server queue simulation and exact Markovian reference solutions.
//!
//! [`simulate`] produces the time-averaged distribution of the number in
//! system, truncated to `l` states, after discarding a warm-up prefix of
//! arrivals. [`mmc_exact`] gives the closed-form M/M/c law used as an oracle.

mod engine;
mod exact;
mod replication;

use serde::{Deserialize, Serialize};

use crate::dists::{Dist, DistError};

pub use engine::{simulate, simulate_hetero, IdleRule};
pub use exact::{mmc_exact, MmcSolution};
pub use replication::{replication_ci, replication_ci_with_seeds, ReplicationCi};

/// Largest server count covered by the training generator.
pub const TRAINING_MAX_SERVERS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid queue spec: {0}")]
    InvalidSpec(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("unstable system: offered load {0} >= 1")]
    Unstable(f64),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// One queue instance: inter-arrival law, one shared service law (`c`
/// identical servers) or two per-server laws (`c = 2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSpec {
    pub arrival: Dist,
    pub services: Vec<Dist>,
    pub c: usize,
}

impl QueueSpec {
    pub fn homogeneous(arrival: Dist, service: Dist, c: usize) -> Result<Self, SimError> {
        let s = QueueSpec {
            arrival,
            services: vec![service],
            c,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn heterogeneous(arrival: Dist, first: Dist, second: Dist) -> Result<Self, SimError> {
        let s = QueueSpec {
            arrival,
            services: vec![first, second],
            c: 2,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match self.services.len() {
            1 if self.c >= 1 => Ok(()),
            1 => Err(SimError::InvalidSpec("server count must be >= 1".into())),
            2 if self.c == 2 => Ok(()),
            2 => Err(SimError::InvalidSpec(format!(
                "two service laws require c = 2, got {}",
                self.c
            ))),
            n => Err(SimError::InvalidSpec(format!(
                "expected 1 or 2 service laws, got {n}"
            ))),
        }
    }

    pub fn is_heterogeneous(&self) -> bool {
        self.services.len() == 2
    }

    /// `c <= 10`; larger systems can still be simulated and scored.
    pub fn in_training_domain(&self) -> bool {
        self.c <= TRAINING_MAX_SERVERS
    }

    pub fn arrival_rate(&self) -> f64 {
        1.0 / self.arrival.mean()
    }

    /// Per-server service rates (`1 / E[S]`), one entry per service law.
    pub fn service_rates(&self) -> Vec<f64> {
        self.services.iter().map(|s| 1.0 / s.mean()).collect()
    }

    /// `lambda / total service capacity`.
    pub fn offered_load(&self) -> f64 {
        let lambda = self.arrival_rate();
        let capacity: f64 = if self.is_heterogeneous() {
            self.service_rates().iter().sum()
        } else {
            self.c as f64 * self.service_rates()[0]
        };
        lambda / capacity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub num_arrivals: u64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub truncation: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_arrivals: 1_000_000,
            warmup_fraction: 0.01,
            seed: 0,
            truncation: 500,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_arrivals < 1 {
            return Err(SimError::InvalidConfig("num_arrivals must be >= 1".into()));
        }
        if self.truncation < 1 {
            return Err(SimError::InvalidConfig("truncation l must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(SimError::InvalidConfig(format!(
                "warmup fraction {} outside [0, 1)",
                self.warmup_fraction
            )));
        }
        Ok(())
    }
}

/// Probability vector over the number in system, `p[j] = P(N = j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SteadyStateVector(Vec<f64>);

impl SteadyStateVector {
    pub fn new(p: Vec<f64>) -> Result<Self, SimError> {
        if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SimError::InvalidSpec(format!("probability {bad} outside [0,1]")));
        }
        let s: f64 = p.iter().sum();
        if s > 1.0 + 1e-9 {
            return Err(SimError::InvalidSpec(format!("probabilities sum to {s} > 1")));
        }
        Ok(SteadyStateVector(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `sum_j j p[j]`.
    pub fn mean(&self) -> f64 {
        mean_of(&self.0)
    }
}

pub(crate) fn mean_of(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(j, v)| j as f64 * v).sum()
}

/// Output of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub probs: SteadyStateVector,
    /// Time fraction with `N >= l`.
    pub tail_mass: f64,
    /// Fraction of the observation window each server was busy.
    pub busy: Vec<f64>,
    #[serde(rename = "mean_L")]
    pub mean_l: f64,
    pub sim_time: f64,
    /// Mean sojourn of customers arriving inside the window.
    pub mean_sojourn: f64,
    /// Arrivals observed inside the window.
    pub arrivals: u64,
    pub seed: u64,
}

impl SimResult {
    /// Average busy fraction across servers.
    pub fn measured_rho(&self) -> f64 {
        self.busy.iter().sum::<f64>() / self.busy.len() as f64
    }

    pub fn throughput(&self) -> f64 {
        self.arrivals as f64 / self.sim_time
    }

    pub fn exceeds_truncation(&self, delta: f64) -> bool {
        self.tail_mass > delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        let e = Dist::exponential(1.0).unwrap();
        assert!(QueueSpec::homogeneous(e.clone(), e.clone(), 0).is_err());
        let bad = QueueSpec {
            arrival: e.clone(),
            services: vec![e.clone(), e.clone()],
            c: 3,
        };
        assert!(bad.validate().is_err());
        let s = QueueSpec::homogeneous(e.clone(), Dist::exponential(2.0).unwrap(), 2).unwrap();
        assert!((s.offered_load() - 1.0).abs() < 1e-12);
        let h = QueueSpec::heterogeneous(
            e.clone(),
            Dist::exponential(0.5).unwrap(),
            Dist::exponential(1.0).unwrap(),
        )
        .unwrap();
        assert!((h.offered_load() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn steady_state_vector_rejects_excess_mass() {
        assert!(SteadyStateVector::new(vec![0.6, 0.5]).is_err());
        assert!(SteadyStateVector::new(vec![-0.1, 0.5]).is_err());
        let v = SteadyStateVector::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(v.mean(), 0.75);
    }
}
