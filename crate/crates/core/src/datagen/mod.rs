//! Training and test instance generation.
//!
//! A GI/GI/c instance draws unit-mean phase-type inter-arrival and service
//! laws, a server count and a target utilization, then rescales the service
//! law. A GI/GI_i/2 instance draws a total service capacity and splits it
//! between two servers. Labels come from simulation (or from the exact M/M/c
//! solution for the Markovian family).

mod dataset;
mod testset;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dists::{
    fit_h2_balanced, sample_ph_with, Dist, DistError, ParametricDist, PhSamplerConfig,
};
use crate::seed::{derive_seed, rng_from_seed};
use crate::simqueue::{
    mmc_exact, simulate, simulate_hetero, IdleRule, QueueSpec, SimConfig, SimError, SimResult,
};
use crate::SystemKind;

pub use dataset::{
    generate_dataset, generate_in_memory, generate_row, read_dataset, write_dataset, Dataset, DatasetHeader, GenerateOptions,
    GenerateSummary, SCHEMA_VERSION,
};
pub use testset::{build_testset2, TestSpec, UTILIZATION_GRID};

/// Moments stored per row so features can be rebuilt for any `n <= 10`.
pub const STORED_MOMENTS: usize = 10;
/// Default number of moments per distribution in the feature vector.
pub const DEFAULT_MOMENTS: usize = 4;
/// Truncation tolerance on the probability mass beyond `l`.
pub const DEFAULT_DELTA: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("row {row}: {source}")]
    Io {
        row: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset header mismatch: {0}")]
    Header(String),
    #[error("row {row}: no acceptable instance after {attempts} attempts")]
    Exhausted { row: usize, attempts: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Which generator produces the queue specs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpecFamily {
    /// Random phase-type laws (the training distribution).
    #[default]
    Ph,
    /// Exponential inter-arrival and service times.
    Markovian,
    /// Each law is Erlang-k (k in 1..=10) or balanced H2 (SCV in (1, 10]).
    ErlangH2,
}

impl std::str::FromStr for SpecFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ph" => Ok(SpecFamily::Ph),
            "mmc" | "markovian" => Ok(SpecFamily::Markovian),
            "erlang-h2" => Ok(SpecFamily::ErlangH2),
            other => Err(format!("unknown family '{other}' (expected ph, mmc or erlang-h2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub family: SpecFamily,
    pub ph: PhSamplerConfig,
    pub rho_min: f64,
    pub rho_max: f64,
    pub c_max: usize,
    /// Smallest per-server rate in the two-server split.
    pub phi: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            family: SpecFamily::Ph,
            ph: PhSamplerConfig::default(),
            rho_min: 0.01,
            rho_max: 0.95,
            c_max: 10,
            phi: 0.01,
        }
    }
}

fn unit_mean_law<R: Rng + ?Sized>(rng: &mut R, cfg: &GenConfig) -> Result<Dist, DistError> {
    match cfg.family {
        SpecFamily::Ph => Ok(Dist::Ph(sample_ph_with(rng, &cfg.ph)?)),
        SpecFamily::Markovian => Dist::exponential(1.0),
        SpecFamily::ErlangH2 => {
            if rng.random_bool(0.5) {
                let k = rng.random_range(1..=10u32);
                Ok(Dist::Parametric(ParametricDist::erlang_with_mean(k, 1.0)?))
            } else {
                let target: f64 = rng.random_range(1.0..10.0);
                Ok(Dist::Parametric(fit_h2_balanced(1.0, target.max(1.0 + 1e-6))?))
            }
        }
    }
}

/// Random GI/GI/c spec and its target utilization.
pub fn gen_ggc_spec(seed: u64, cfg: &GenConfig) -> Result<(QueueSpec, f64), DatagenError> {
    let mut rng = rng_from_seed(seed);
    let arrival = unit_mean_law(&mut rng, cfg)?;
    let service = unit_mean_law(&mut rng, cfg)?;
    let c = rng.random_range(1..=cfg.c_max);
    let rho = rng.random_range(cfg.rho_min..cfg.rho_max);
    // lambda = 1, so rho = 1 / (c mu)
    let mu = 1.0 / (c as f64 * rho);
    let service = service.scaled(mu * service.mean())?;
    Ok((QueueSpec::homogeneous(arrival, service, c)?, rho))
}

/// Random GI/GI_i/2 spec in canonical order (faster server first) and the
/// single-server utilization `1 / (mu1 + mu2)` used to draw it.
pub fn gen_gg2_spec(seed: u64, cfg: &GenConfig) -> Result<(QueueSpec, f64), DatagenError> {
    let mut rng = rng_from_seed(seed);
    let arrival = unit_mean_law(&mut rng, cfg)?;
    let s1 = unit_mean_law(&mut rng, cfg)?;
    let s2 = unit_mean_law(&mut rng, cfg)?;
    let inv_mu: f64 = rng.random_range(cfg.rho_min..cfg.rho_max);
    let mu = 1.0 / inv_mu;
    let mu1 = rng.random_range(cfg.phi..(mu - cfg.phi));
    let mu2 = mu - mu1;
    let s1 = s1.scaled(mu1 * s1.mean())?;
    let s2 = s2.scaled(mu2 * s2.mean())?;
    let spec = QueueSpec::heterogeneous(arrival, s1, s2)?;
    Ok((canonicalize(spec), inv_mu))
}

/// Orders the two service laws of a GI/GI_i/2 spec by decreasing rate.
pub fn canonicalize(mut spec: QueueSpec) -> QueueSpec {
    if spec.is_heterogeneous() {
        let r = spec.service_rates();
        if r[0] < r[1] {
            spec.services.swap(0, 1);
        }
    }
    spec
}

/// Raw moments of the arrival law and of each service law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecMoments {
    pub arrival: Vec<f64>,
    pub services: Vec<Vec<f64>>,
}

impl SpecMoments {
    pub fn of(spec: &QueueSpec, n: usize) -> Result<Self, DistError> {
        Ok(SpecMoments {
            arrival: spec.arrival.moments(n)?.into_vec(),
            services: spec
                .services
                .iter()
                .map(|s| s.moments(n).map(|m| m.into_vec()))
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn scv_arrival(&self) -> f64 {
        (self.arrival[1] - self.arrival[0].powi(2)) / self.arrival[0].powi(2)
    }

    pub fn scv_services(&self) -> Vec<f64> {
        self.services
            .iter()
            .map(|m| (m[1] - m[0].powi(2)) / m[0].powi(2))
            .collect()
    }
}

/// Feature vector from stored moments: `ln` of the first `n` arrival
/// moments, then of each service law's first `n` moments, then `c` for
/// GI/GI/c. Service blocks are taken in the stored order.
pub fn features_from_moments(
    kind: SystemKind,
    moments: &SpecMoments,
    c: usize,
    n: usize,
) -> Result<Vec<f64>, DatagenError> {
    let mut out = Vec::with_capacity(3 * n + 1);
    let blocks = std::iter::once(&moments.arrival).chain(&moments.services);
    for block in blocks {
        if block.len() < n {
            return Err(DistError::TooFewMoments {
                needed: n,
                got: block.len(),
            }
            .into());
        }
        for &m in &block[..n] {
            if !(m > 0.0 && m.is_finite()) {
                return Err(DistError::InvalidParameters(format!(
                    "moment {m} cannot be log-transformed"
                ))
                .into());
            }
            out.push(m.ln());
        }
    }
    if kind == SystemKind::Ggc {
        out.push(c as f64);
    }
    Ok(out)
}

pub fn feature_dim(kind: SystemKind, n: usize) -> usize {
    match kind {
        SystemKind::Ggc => 2 * n + 1,
        SystemKind::Gg2 => 3 * n,
    }
}

pub fn system_of(spec: &QueueSpec) -> SystemKind {
    if spec.is_heterogeneous() {
        SystemKind::Gg2
    } else {
        SystemKind::Ggc
    }
}

/// Log-moment features of a spec; two-server specs are canonicalized first.
pub fn preprocess(spec: &QueueSpec, n: usize) -> Result<Vec<f64>, DatagenError> {
    if n == 0 {
        return Err(DistError::TooFewMoments { needed: 1, got: 0 }.into());
    }
    let spec = canonicalize(spec.clone());
    let m = SpecMoments::of(&spec, n)?;
    features_from_moments(system_of(&spec), &m, spec.c, n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelConfig {
    pub sim: SimConfig,
    pub delta: f64,
    pub idle_rule: IdleRule,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            sim: SimConfig::default(),
            delta: DEFAULT_DELTA,
            idle_rule: IdleRule::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub result: SimResult,
    /// Truncated mass exceeded `delta`.
    pub flagged: bool,
}

/// Simulates a spec and checks the truncation tolerance.
pub fn label(spec: &QueueSpec, cfg: &LabelConfig) -> Result<Labeled, DatagenError> {
    let result = if spec.is_heterogeneous() {
        simulate_hetero(spec, &cfg.sim, cfg.idle_rule)?
    } else {
        simulate(spec, &cfg.sim)?
    };
    let flagged = result.exceeds_truncation(cfg.delta);
    Ok(Labeled { result, flagged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub seed: u64,
    pub family: String,
    pub target_rho: f64,
    pub measured_rho: f64,
    pub scv_arrival: f64,
    pub scv_services: Vec<f64>,
    pub c: usize,
    pub n_moments: usize,
    pub tail_mass: f64,
    pub flagged: bool,
    /// Two-server row emitted with the slower server first.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub swapped: bool,
    pub service_rates: Vec<f64>,
    pub moments: SpecMoments,
}

impl InstanceMeta {
    /// Grouping attributes; GI/GI_i/2 rows use the measured utilization.
    pub fn segment_meta(&self) -> crate::metrics::SegmentMeta {
        let heterogeneous = self.scv_services.len() == 2;
        crate::metrics::SegmentMeta {
            scv_arrival: self.scv_arrival,
            scv_services: self.scv_services.clone(),
            rho: if heterogeneous {
                self.measured_rho
            } else {
                self.target_rho
            },
            c: self.c,
        }
    }

    pub fn system(&self) -> SystemKind {
        if self.scv_services.len() == 2 {
            SystemKind::Gg2
        } else {
            SystemKind::Ggc
        }
    }

    /// Rates and SCVs of a GI/GI/c row; `None` for two-server rows.
    pub fn two_moment_spec(&self) -> Option<crate::baselines::TwoMomentSpec> {
        if self.system() != SystemKind::Ggc {
            return None;
        }
        Some(crate::baselines::TwoMomentSpec {
            lambda: 1.0 / self.moments.arrival[0],
            mu: self.service_rates[0],
            c: self.c,
            ca2: self.scv_arrival,
            cs2: self.scv_services[0],
        })
    }
}

/// One dataset row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub label: Vec<f64>,
    pub meta: InstanceMeta,
}

impl Instance {
    pub fn build(
        spec: &QueueSpec,
        target_rho: f64,
        seed: u64,
        probs: Vec<f64>,
        tail_mass: f64,
        busy: &[f64],
        flagged: bool,
        n: usize,
    ) -> Result<Self, DatagenError> {
        let moments = SpecMoments::of(spec, STORED_MOMENTS.max(n))?;
        let features = features_from_moments(system_of(spec), &moments, spec.c, n)?;
        let family = std::iter::once(&spec.arrival)
            .chain(&spec.services)
            .map(|d| d.family())
            .collect::<Vec<_>>()
            .join("/");
        Ok(Instance {
            features,
            label: probs,
            meta: InstanceMeta {
                seed,
                family,
                target_rho,
                measured_rho: busy.iter().sum::<f64>() / busy.len().max(1) as f64,
                scv_arrival: moments.scv_arrival(),
                scv_services: moments.scv_services(),
                c: spec.c,
                n_moments: n,
                tail_mass,
                flagged,
                swapped: false,
                service_rates: spec.service_rates(),
                moments,
            },
        })
    }

    /// Same row with the two service blocks exchanged.
    pub fn swapped(&self) -> Instance {
        let mut out = self.clone();
        let m = &mut out.meta;
        if m.moments.services.len() == 2 {
            m.moments.services.swap(0, 1);
            m.scv_services.swap(0, 1);
            m.service_rates.swap(0, 1);
            m.swapped = !m.swapped;
            out.features = features_from_moments(SystemKind::Gg2, &m.moments, m.c, m.n_moments)
                .expect("moments were valid before the swap");
        }
        out
    }
}

/// Labels from the closed-form M/M/c law instead of simulation.
pub fn exact_mmc_instance(
    seed: u64,
    cfg: &GenConfig,
    l: usize,
    n: usize,
) -> Result<Instance, DatagenError> {
    let markov = GenConfig {
        family: SpecFamily::Markovian,
        ..cfg.clone()
    };
    let (spec, rho) = gen_ggc_spec(seed, &markov)?;
    let mu = spec.service_rates()[0];
    let exact = mmc_exact(1.0, mu, spec.c, l)?;
    let busy = vec![rho; spec.c];
    Instance::build(
        &spec,
        rho,
        seed,
        exact.probs.into_vec(),
        exact.tail_mass,
        &busy,
        false,
        n,
    )
}

/// Labels fixed specs by simulation. Rows over the truncation tolerance are
/// kept and marked `flagged` since a fixed spec cannot be redrawn.
pub fn label_specs(
    specs: &[TestSpec],
    cfg: &LabelConfig,
    master_seed: u64,
    n: usize,
) -> Result<Vec<Instance>, DatagenError> {
    use rayon::prelude::*;

    specs
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let seed = derive_seed(master_seed, &[i as u64]);
            let mut c = cfg.clone();
            c.sim.seed = seed;
            let spec = canonicalize(t.spec.clone());
            let out = label(&spec, &c)?;
            let r = out.result;
            let mut inst = Instance::build(
                &spec,
                t.rho,
                seed,
                r.probs.into_vec(),
                r.tail_mass,
                &r.busy,
                out.flagged,
                n,
            )?;
            inst.meta.family = t.families.join("/");
            Ok(inst)
        })
        .collect()
}

/// Seed for attempt `attempt` of dataset row `row`.
pub fn row_seed(master: u64, row: u64, attempt: u64) -> u64 {
    derive_seed(master, &[row, attempt])
}
