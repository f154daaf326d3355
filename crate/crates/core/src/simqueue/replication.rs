use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{simulate_hetero, IdleRule, QueueSpec, SimConfig, SimError};
use crate::seed::derive_seed;

/// Mean number in system over independent replications with a 95% Student-t
/// interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationCi {
    pub reps: usize,
    pub mean_l: f64,
    pub std_dev: f64,
    pub half_width: f64,
    /// Full interval length, `2 * half_width`.
    pub ci_length: f64,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// Replicates with seeds derived from `cfg.seed` and the replication index.
pub fn replication_ci(
    spec: &QueueSpec,
    cfg: &SimConfig,
    reps: usize,
    idle_rule: IdleRule,
) -> Result<ReplicationCi, SimError> {
    let seeds: Vec<u64> = (0..reps as u64).map(|r| derive_seed(cfg.seed, &[r])).collect();
    replication_ci_with_seeds(spec, cfg, &seeds, idle_rule)
}

pub fn replication_ci_with_seeds(
    spec: &QueueSpec,
    cfg: &SimConfig,
    seeds: &[u64],
    idle_rule: IdleRule,
) -> Result<ReplicationCi, SimError> {
    use rayon::prelude::*;

    let reps = seeds.len();
    if reps < 2 {
        return Err(SimError::InvalidConfig(format!(
            "confidence interval needs >= 2 replications, got {reps}"
        )));
    }
    let values = seeds
        .par_iter()
        .map(|&seed| {
            let c = SimConfig { seed, ..cfg.clone() };
            let r = if spec.is_heterogeneous() {
                simulate_hetero(spec, &c, idle_rule)?
            } else {
                super::simulate(spec, &c)?
            };
            Ok(r.mean_l)
        })
        .collect::<Result<Vec<f64>, SimError>>()?;
    let n = reps as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("df >= 1")
        .inverse_cdf(0.975);
    let half_width = t * (var / n).sqrt();
    Ok(ReplicationCi {
        reps,
        mean_l: mean,
        std_dev: var.sqrt(),
        half_width,
        ci_length: 2.0 * half_width,
        values,
        seeds: seeds.to_vec(),
    })
}
