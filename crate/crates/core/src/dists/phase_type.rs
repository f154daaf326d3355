use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use super::{DistError, MomentVector};

/// Absorption time of a finite continuous-time Markov chain.
///
/// `alpha` is the initial distribution over the transient phases (no atom at
/// zero) and `t` the row-major sub-generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseType {
    alpha: Vec<f64>,
    t: Vec<f64>,
    order: usize,
}

const PROB_TOL: f64 = 1e-9;

impl PhaseType {
    pub fn new(alpha: Vec<f64>, t: Vec<f64>) -> Result<Self, DistError> {
        let order = alpha.len();
        let bad = |msg: String| Err(DistError::InvalidPhaseType(msg));
        if order == 0 {
            return bad("empty phase set".into());
        }
        if t.len() != order * order {
            return bad(format!("T has {} entries, expected {}", t.len(), order * order));
        }
        if alpha.iter().chain(&t).any(|v| !v.is_finite()) {
            return bad("non-finite entry".into());
        }
        if alpha.iter().any(|&a| a < 0.0) {
            return bad("negative initial probability".into());
        }
        let total: f64 = alpha.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return bad(format!("initial probabilities sum to {total}"));
        }
        let mut any_exit = false;
        for i in 0..order {
            let row = &t[i * order..(i + 1) * order];
            let diag = row[i];
            if !(diag < 0.0) {
                return bad(format!("diagonal entry {i} is {diag}, must be negative"));
            }
            if row.iter().enumerate().any(|(j, &v)| j != i && v < 0.0) {
                return bad(format!("row {i} has a negative off-diagonal rate"));
            }
            let sum: f64 = row.iter().sum();
            if sum > PROB_TOL * diag.abs() {
                return bad(format!("row {i} sums to {sum} > 0"));
            }
            if sum < -PROB_TOL * diag.abs() {
                any_exit = true;
            }
        }
        if !any_exit {
            return bad("no phase leads to absorption".into());
        }
        let ph = PhaseType { alpha, t, order };
        ph.check_absorbing()?;
        Ok(ph)
    }

    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        PhaseType::new(vec![1.0], vec![-rate])
    }

    /// Erlang-k as a chain of `k` stages of the given per-stage rate.
    pub fn erlang(k: usize, rate: f64) -> Result<Self, DistError> {
        let mut t = vec![0.0; k * k];
        for i in 0..k {
            t[i * k + i] = -rate;
            if i + 1 < k {
                t[i * k + i + 1] = rate;
            }
        }
        let mut alpha = vec![0.0; k];
        alpha[0] = 1.0;
        PhaseType::new(alpha, t)
    }

    /// Every phase must have a path to absorption, otherwise `-T` is singular.
    fn check_absorbing(&self) -> Result<(), DistError> {
        let p = self.order;
        let exits = self.exit_rates();
        let mut reaches: Vec<bool> = exits.iter().map(|&e| e > 0.0).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..p {
                if reaches[i] {
                    continue;
                }
                if (0..p).any(|j| j != i && reaches[j] && self.rate(i, j) > 0.0) {
                    reaches[i] = true;
                    changed = true;
                }
            }
        }
        match reaches.iter().position(|r| !r) {
            Some(i) => Err(DistError::InvalidPhaseType(format!(
                "phase {i} cannot reach absorption"
            ))),
            None => Ok(()),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.order + j]
    }

    pub fn generator_rows(&self) -> Vec<Vec<f64>> {
        self.t.chunks(self.order).map(|r| r.to_vec()).collect()
    }

    /// Absorption rate out of each phase, `-T 1`, clamped at zero.
    pub fn exit_rates(&self) -> Vec<f64> {
        self.t
            .chunks(self.order)
            .map(|row| (-row.iter().sum::<f64>()).max(0.0))
            .collect()
    }

    /// `m_k = k! alpha (-T)^{-k} 1`, by `k` successive solves against `-T`.
    pub fn moments(&self, n: usize) -> Result<MomentVector, DistError> {
        if n == 0 {
            return Err(DistError::TooFewMoments { needed: 1, got: 0 });
        }
        let p = self.order;
        let neg_t = DMatrix::from_row_slice(p, p, &self.t).map(|v| -v);
        let lu = neg_t.lu();
        let mut v = nalgebra::DVector::from_element(p, 1.0);
        let mut fact = 1.0;
        let mut out = Vec::with_capacity(n);
        for k in 1..=n {
            v = lu
                .solve(&v)
                .ok_or_else(|| DistError::InvalidPhaseType("-T is singular".into()))?;
            fact *= k as f64;
            let dot: f64 = self.alpha.iter().zip(v.iter()).map(|(a, x)| a * x).sum();
            out.push(fact * dot);
        }
        MomentVector::new(out)
    }

    pub fn mean(&self) -> f64 {
        self.moments(1).map(|m| m[0]).unwrap_or(f64::NAN)
    }

    /// Law of `X / rate`: every rate in `T` is multiplied by `rate`.
    pub fn scaled(&self, rate: f64) -> PhaseType {
        PhaseType {
            alpha: self.alpha.clone(),
            t: self.t.iter().map(|v| v * rate).collect(),
            order: self.order,
        }
    }

    pub fn sampler(&self) -> PhaseTypeSampler {
        PhaseTypeSampler::new(self)
    }
}

const ABSORB: usize = usize::MAX;

#[derive(Debug, Clone)]
enum Holding {
    Exp(f64),
    /// `m` consecutive stages sharing one rate collapse to a single gamma draw.
    Run(Gamma<f64>),
}

#[derive(Debug, Clone)]
struct Step {
    holding: Holding,
    cum: Vec<f64>,
    targets: Vec<usize>,
}

/// Draws absorption times by walking the chain.
#[derive(Debug, Clone)]
pub struct PhaseTypeSampler {
    init_cum: Vec<f64>,
    init_targets: Vec<usize>,
    steps: Vec<Step>,
}

fn cumulative(weights: impl Iterator<Item = (usize, f64)>) -> (Vec<f64>, Vec<usize>) {
    let pairs: Vec<(usize, f64)> = weights.filter(|(_, w)| *w > 0.0).collect();
    let total: f64 = pairs.iter().map(|(_, w)| w).sum();
    let mut acc = 0.0;
    let mut cum = Vec::with_capacity(pairs.len());
    let mut targets = Vec::with_capacity(pairs.len());
    for (t, w) in pairs {
        acc += w / total;
        cum.push(acc);
        targets.push(t);
    }
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    (cum, targets)
}

impl PhaseTypeSampler {
    fn new(ph: &PhaseType) -> Self {
        let p = ph.order;
        let exits = ph.exit_rates();
        let tables: Vec<(Vec<f64>, Vec<usize>)> = (0..p)
            .map(|i| {
                let others = (0..p)
                    .filter(move |&j| j != i)
                    .map(move |j| (j, ph.rate(i, j)));
                cumulative(others.chain(std::iter::once((ABSORB, exits[i]))))
            })
            .collect();
        let rate = |i: usize| -ph.rate(i, i);
        // Phase i hands over deterministically to a stage with identical rate.
        let forward = |i: usize| -> Option<usize> {
            let (_, targets) = &tables[i];
            match targets.as_slice() {
                [j] if *j != ABSORB && rate(*j) == rate(i) => Some(*j),
                _ => None,
            }
        };
        let steps = (0..p)
            .map(|i| {
                let mut end = i;
                let mut len = 1usize;
                while let Some(j) = forward(end) {
                    if len > p {
                        break;
                    }
                    end = j;
                    len += 1;
                }
                let holding = if len == 1 {
                    Holding::Exp(rate(i))
                } else {
                    Holding::Run(Gamma::new(len as f64, 1.0 / rate(i)).expect("positive rate"))
                };
                let (cum, targets) = tables[end].clone();
                Step {
                    holding,
                    cum,
                    targets,
                }
            })
            .collect();
        let (init_cum, init_targets) = cumulative(ph.alpha.iter().copied().enumerate());
        PhaseTypeSampler {
            init_cum,
            init_targets,
            steps,
        }
    }

    #[inline]
    fn pick<R: Rng + ?Sized>(rng: &mut R, cum: &[f64], targets: &[usize]) -> usize {
        if targets.len() == 1 {
            return targets[0];
        }
        let u: f64 = rng.random();
        let idx = cum.partition_point(|&c| c <= u).min(targets.len() - 1);
        targets[idx]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut phase = Self::pick(rng, &self.init_cum, &self.init_targets);
        let mut x = 0.0;
        while phase != ABSORB {
            let step = &self.steps[phase];
            x += match &step.holding {
                Holding::Exp(r) => {
                    let e: f64 = Exp1.sample(rng);
                    e / r
                }
                Holding::Run(g) => g.sample(rng),
            };
            phase = Self::pick(rng, &step.cum, &step.targets);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn unit_exponential_moments_are_factorials() {
        let m = PhaseType::exponential(1.0).unwrap().moments(4).unwrap();
        for (a, b) in m.as_slice().iter().zip([1.0, 2.0, 6.0, 24.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn erlang2_moments() {
        let m = PhaseType::erlang(2, 2.0).unwrap().moments(3).unwrap();
        for (a, b) in m.as_slice().iter().zip([1.0, 1.5, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_exponential() {
        let m = PhaseType::exponential(1.0).unwrap().scaled(2.0).moments(4).unwrap();
        for (a, b) in m.as_slice().iter().zip([0.5, 0.5, 0.75, 1.5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_generators() {
        // positive diagonal
        assert!(PhaseType::new(vec![1.0], vec![1.0]).is_err());
        // alpha does not sum to one
        assert!(PhaseType::new(vec![0.5], vec![-1.0]).is_err());
        // positive row sum
        assert!(PhaseType::new(vec![1.0, 0.0], vec![-1.0, 2.0, 0.0, -1.0]).is_err());
        // phases 0 and 1 trap each other
        assert!(PhaseType::new(
            vec![1.0, 0.0, 0.0],
            vec![-1.0, 1.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0]
        )
        .is_err());
        // negative off-diagonal
        assert!(PhaseType::new(vec![1.0, 0.0], vec![-1.0, -0.5, 0.0, -1.0]).is_err());
    }

    #[test]
    fn erlang_chain_collapses_into_one_gamma_run() {
        let s = PhaseType::erlang(5, 1.0).unwrap().sampler();
        assert!(matches!(s.steps[0].holding, Holding::Run(_)));
        assert_eq!(s.steps[0].targets, vec![ABSORB]);
        assert!(matches!(s.steps[4].holding, Holding::Exp(_)));
    }

    #[test]
    fn coxian_draws_match_mean() {
        // Coxian: phase 0 rate 3 continues w.p. 1/3 to phase 1 (rate 0.5).
        let ph = PhaseType::new(vec![1.0, 0.0], vec![-3.0, 1.0, 0.0, -0.5]).unwrap();
        let m = ph.moments(2).unwrap();
        let s = ph.sampler();
        let mut rng = rng_from_seed(5);
        let n = 400_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (m[1] - m[0] * m[0]).sqrt();
        assert!((mean - m[0]).abs() < 4.0 * sd / (n as f64).sqrt());
        assert!(xs.iter().all(|&x| x > 0.0));
    }
}
