use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{QueueSpec, SimConfig, SimError, SimResult, SteadyStateVector};
use crate::dists::DistSampler;
use crate::seed::{rng_from_seed, SimRng};

/// Which idle server takes an arrival that finds several idle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdleRule {
    #[default]
    Random,
    FastestFirst,
    FixedPriority,
}

impl std::str::FromStr for IdleRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(IdleRule::Random),
            "fastest-first" => Ok(IdleRule::FastestFirst),
            "fixed-priority" => Ok(IdleRule::FixedPriority),
            other => Err(format!(
                "unknown idle rule '{other}' (expected random, fastest-first or fixed-priority)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Arrival,
    /// End of the observation window; no further arrivals are generated.
    Horizon,
    Departure {
        server: usize,
        arrived_at: f64,
        observed: bool,
    },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event; equal times pop in
    // scheduling order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Default)]
struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }
}

struct Stations {
    samplers: Vec<DistSampler>,
    /// Index into `samplers` for each server.
    law_of: Vec<usize>,
    busy: Vec<bool>,
    /// Servers ordered by decreasing service rate, for `FastestFirst`.
    speed_order: Vec<usize>,
    rule: IdleRule,
}

impl Stations {
    fn choose_idle(&self, rng: &mut SimRng) -> Option<usize> {
        match self.rule {
            IdleRule::FixedPriority => self.busy.iter().position(|b| !b),
            IdleRule::FastestFirst => self.speed_order.iter().copied().find(|&s| !self.busy[s]),
            IdleRule::Random => {
                let idle = self.busy.iter().filter(|b| !**b).count();
                match idle {
                    0 => None,
                    1 => self.busy.iter().position(|b| !b),
                    k => {
                        let pick = rng.random_range(0..k);
                        self.busy
                            .iter()
                            .enumerate()
                            .filter(|(_, b)| !**b)
                            .nth(pick)
                            .map(|(i, _)| i)
                    }
                }
            }
        }
    }

    #[inline]
    fn service_time(&self, server: usize, rng: &mut SimRng) -> f64 {
        self.samplers[self.law_of[server]].sample(rng)
    }
}

/// Simulates a homogeneous GI/GI/c queue. Two-law specs are routed to
/// [`simulate_hetero`] with the default (random) idle rule.
pub fn simulate(spec: &QueueSpec, cfg: &SimConfig) -> Result<SimResult, SimError> {
    if spec.is_heterogeneous() {
        return simulate_hetero(spec, cfg, IdleRule::default());
    }
    // All servers are exchangeable, so the idle rule does not affect N(t).
    run(spec, cfg, IdleRule::FixedPriority)
}

/// Simulates a two-server queue with distinct service laws.
pub fn simulate_hetero(
    spec: &QueueSpec,
    cfg: &SimConfig,
    idle_rule: IdleRule,
) -> Result<SimResult, SimError> {
    if !spec.is_heterogeneous() {
        return Err(SimError::InvalidSpec(
            "heterogeneous simulation needs two service laws".into(),
        ));
    }
    run(spec, cfg, idle_rule)
}

fn run(spec: &QueueSpec, cfg: &SimConfig, rule: IdleRule) -> Result<SimResult, SimError> {
    spec.validate()?;
    cfg.validate()?;
    let c = spec.c;
    let l = cfg.truncation;
    let mut rng = rng_from_seed(cfg.seed);

    let samplers: Vec<DistSampler> = spec.services.iter().map(|d| d.sampler()).collect();
    let law_of: Vec<usize> = if spec.is_heterogeneous() {
        vec![0, 1]
    } else {
        vec![0; c]
    };
    let rates = spec.service_rates();
    let mut speed_order: Vec<usize> = (0..c).collect();
    speed_order.sort_by(|&a, &b| rates[law_of[b]].total_cmp(&rates[law_of[a]]));
    let mut st = Stations {
        samplers,
        law_of,
        busy: vec![false; c],
        speed_order,
        rule,
    };
    let inter = spec.arrival.sampler();

    let warmup = (cfg.warmup_fraction * cfg.num_arrivals as f64).floor() as u64;
    let mut events = EventQueue::default();
    let mut waiting: VecDeque<(f64, bool)> = VecDeque::new();

    let mut occupancy = vec![0.0f64; l];
    let mut tail_time = 0.0;
    let mut area = 0.0;
    let mut busy_time = vec![0.0f64; c];
    let mut window_start = 0.0;
    let mut collecting = warmup == 0;
    let mut window_end = f64::NAN;

    let mut n_in_system: usize = 0;
    let mut t_last = 0.0;
    let mut next_arrival: u64 = 0;
    let mut observed_arrivals: u64 = 0;
    let mut sojourn_sum = 0.0;
    let mut sojourn_count: u64 = 0;

    events.push(inter.sample(&mut rng), EventKind::Arrival);

    while let Some(ev) = events.pop() {
        let now = ev.time;
        if collecting {
            let dt = now - t_last;
            if n_in_system < l {
                occupancy[n_in_system] += dt;
            } else {
                tail_time += dt;
            }
            area += n_in_system as f64 * dt;
            for (s, b) in st.busy.iter().enumerate() {
                if *b {
                    busy_time[s] += dt;
                }
            }
        }
        t_last = now;

        match ev.kind {
            EventKind::Arrival => {
                if next_arrival == warmup && !collecting {
                    collecting = true;
                    window_start = now;
                }
                let observed = next_arrival >= warmup;
                if observed {
                    observed_arrivals += 1;
                }
                next_arrival += 1;
                n_in_system += 1;
                match st.choose_idle(&mut rng) {
                    Some(server) => {
                        st.busy[server] = true;
                        let s = st.service_time(server, &mut rng);
                        events.push(
                            now + s,
                            EventKind::Departure {
                                server,
                                arrived_at: now,
                                observed,
                            },
                        );
                    }
                    None => waiting.push_back((now, observed)),
                }
                let gap = inter.sample(&mut rng);
                let kind = if next_arrival < cfg.num_arrivals {
                    EventKind::Arrival
                } else {
                    EventKind::Horizon
                };
                events.push(now + gap, kind);
            }
            EventKind::Horizon => {
                collecting = false;
                window_end = now;
            }
            EventKind::Departure {
                server,
                arrived_at,
                observed,
            } => {
                n_in_system -= 1;
                if observed {
                    sojourn_sum += now - arrived_at;
                    sojourn_count += 1;
                }
                match waiting.pop_front() {
                    Some((arrived, obs)) => {
                        let s = st.service_time(server, &mut rng);
                        events.push(
                            now + s,
                            EventKind::Departure {
                                server,
                                arrived_at: arrived,
                                observed: obs,
                            },
                        );
                    }
                    None => st.busy[server] = false,
                }
            }
        }
    }

    let horizon = window_end - window_start;
    if !(horizon > 0.0) {
        return Err(SimError::InvalidConfig(
            "observation window has zero length".into(),
        ));
    }
    let total: f64 = occupancy.iter().sum::<f64>() + tail_time;
    let probs: Vec<f64> = occupancy.iter().map(|v| v / total).collect();
    Ok(SimResult {
        probs: SteadyStateVector(probs),
        tail_mass: tail_time / total,
        busy: busy_time.iter().map(|b| (b / horizon).min(1.0)).collect(),
        mean_l: area / horizon,
        sim_time: horizon,
        mean_sojourn: if sojourn_count > 0 {
            sojourn_sum / sojourn_count as f64
        } else {
            0.0
        },
        arrivals: observed_arrivals,
        seed: cfg.seed,
    })
}
