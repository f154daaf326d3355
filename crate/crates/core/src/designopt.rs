//! Brute-force server design: pick the per-server service rate and server
//! count minimizing `C1(rate) * c + C2 * E[L]`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{features_from_moments, SpecMoments};
use crate::dists::Dist;
use crate::neuralnet::ModelFile;
use crate::simqueue::{mmc_exact, simulate, QueueSpec, SimConfig};
use crate::SystemKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub c1_base: f64,
    pub c1_exponent: f64,
    /// Cost per unit of the mean number in system.
    pub c2: f64,
    pub rate_min: f64,
    /// Exclusive upper end of the rate grid.
    pub rate_max: f64,
    pub rate_step: f64,
    pub c_max: usize,
    /// Charge `E[Lq]` (waiting customers only) instead of `E[L]`.
    pub queue_only: bool,
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec {
            c1_base: 500.0,
            c1_exponent: 5.0,
            c2: 100.0,
            rate_min: 0.1,
            rate_max: 0.3,
            rate_step: 0.001,
            c_max: 10,
            queue_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DesignError {
    #[error("invalid cost spec: {0}")]
    Spec(String),
    #[error("evaluator: {0}")]
    Evaluator(String),
}

impl CostSpec {
    pub fn validate(&self) -> Result<(), DesignError> {
        if !(self.rate_step > 0.0 && self.rate_step.is_finite()) {
            return Err(DesignError::Spec("rate_step must be > 0".into()));
        }
        if !(self.rate_min >= 0.0 && self.rate_max > self.rate_min) {
            return Err(DesignError::Spec(format!(
                "empty rate domain [{}, {})",
                self.rate_min, self.rate_max
            )));
        }
        if self.c_max < 1 {
            return Err(DesignError::Spec("c_max must be >= 1".into()));
        }
        Ok(())
    }

    /// `rate_min, rate_min + step, ...` strictly below `rate_max`.
    pub fn rates(&self) -> Vec<f64> {
        let n = ((self.rate_max - self.rate_min) / self.rate_step - 1e-9).ceil() as usize;
        (0..n)
            .map(|i| ((self.rate_min + i as f64 * self.rate_step) * 1e12).round() / 1e12)
            .collect()
    }

    /// All `(rate, c)` cells ordered by `c`, then rate.
    pub fn cells(&self) -> Vec<(f64, usize)> {
        let rates = self.rates();
        (1..=self.c_max)
            .flat_map(|c| rates.iter().map(move |&r| (r, c)))
            .collect()
    }
}

/// `C1(rate) * c + C2 * el` with `C1(rate) = base * (1 + rate)^exponent`.
pub fn cost(rate: f64, c: usize, el: f64, spec: &CostSpec) -> f64 {
    spec.c1_base * (1.0 + rate).powf(spec.c1_exponent) * c as f64 + spec.c2 * el
}

/// Mean occupancy for a batch of `(rate, c)` designs. Each entry is the
/// mean number in system and the mean number waiting.
pub trait Evaluator: Sync {
    fn evaluate(&self, cells: &[(f64, usize)]) -> Vec<Result<(f64, f64), String>>;
}

fn utilization(lambda: f64, rate: f64, c: usize) -> f64 {
    lambda / (c as f64 * rate)
}

fn unstable(rho: f64) -> String {
    format!("unstable design (rho = {rho:.4})")
}

/// Closed-form M/M/c with Poisson arrivals at rate `lambda`.
#[derive(Debug, Clone, Copy)]
pub struct ExactMmcEvaluator {
    pub lambda: f64,
}

impl Evaluator for ExactMmcEvaluator {
    fn evaluate(&self, cells: &[(f64, usize)]) -> Vec<Result<(f64, f64), String>> {
        cells
            .iter()
            .map(|&(rate, c)| {
                let s = mmc_exact(self.lambda, rate, c, 1).map_err(|e| e.to_string())?;
                Ok((s.mean_l, s.mean_l - self.lambda / rate))
            })
            .collect()
    }
}

fn queue_mean(p: &[f64], c: usize) -> f64 {
    p.iter()
        .enumerate()
        .skip(c)
        .map(|(j, v)| (j - c) as f64 * v)
        .sum()
}

fn lattice_mean(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(j, v)| j as f64 * v).sum()
}

/// Trained GI/GI/c surrogate. The service shape is rescaled to mean
/// `1 / rate` for each cell.
pub struct NnEvaluator<'a> {
    pub model: &'a ModelFile,
    pub arrival: Dist,
    pub service_shape: Dist,
    /// Cells above this utilization are outside the training domain.
    pub rho_max: f64,
}

impl NnEvaluator<'_> {
    fn features(&self, rate: f64, c: usize) -> Result<Vec<f64>, String> {
        let n = self.model.n_moments;
        let service = self
            .service_shape
            .scaled(rate * self.service_shape.mean())
            .map_err(|e| e.to_string())?;
        let spec = QueueSpec::homogeneous(self.arrival.clone(), service, c)
            .map_err(|e| e.to_string())?;
        let m = SpecMoments::of(&spec, n).map_err(|e| e.to_string())?;
        features_from_moments(SystemKind::Ggc, &m, c, n).map_err(|e| e.to_string())
    }
}

impl Evaluator for NnEvaluator<'_> {
    fn evaluate(&self, cells: &[(f64, usize)]) -> Vec<Result<(f64, f64), String>> {
        let lambda = 1.0 / self.arrival.mean();
        let mut out: Vec<Result<(f64, f64), String>> = Vec::with_capacity(cells.len());
        let mut rows = Vec::new();
        let mut slots = Vec::new();
        for (i, &(rate, c)) in cells.iter().enumerate() {
            let rho = utilization(lambda, rate, c);
            let f = if rho > self.rho_max {
                Err(format!("outside the training domain (rho = {rho:.4})"))
            } else {
                self.features(rate, c)
            };
            match f {
                Ok(f) => {
                    rows.push(f);
                    slots.push(i);
                    out.push(Ok((0.0, 0.0)));
                }
                Err(e) => out.push(Err(e)),
            }
        }
        match self.model.predict(&rows) {
            Ok(pred) => {
                for (p, &i) in pred.iter().zip(&slots) {
                    out[i] = Ok((lattice_mean(p), queue_mean(p, cells[i].1)));
                }
            }
            Err(e) => {
                for &i in &slots {
                    out[i] = Err(e.to_string());
                }
            }
        }
        out
    }
}

/// Simulation of every cell; slow but model-free.
pub struct SimEvaluator {
    pub arrival: Dist,
    pub service_shape: Dist,
    pub sim: SimConfig,
}

impl Evaluator for SimEvaluator {
    fn evaluate(&self, cells: &[(f64, usize)]) -> Vec<Result<(f64, f64), String>> {
        let lambda = 1.0 / self.arrival.mean();
        cells
            .par_iter()
            .map(|&(rate, c)| {
                let rho = utilization(lambda, rate, c);
                if rho >= 1.0 {
                    return Err(unstable(rho));
                }
                let service = self
                    .service_shape
                    .scaled(rate * self.service_shape.mean())
                    .map_err(|e| e.to_string())?;
                let spec = QueueSpec::homogeneous(self.arrival.clone(), service, c)
                    .map_err(|e| e.to_string())?;
                let r = simulate(&spec, &self.sim).map_err(|e| e.to_string())?;
                Ok((r.mean_l, queue_mean(r.probs.as_slice(), c)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub rate: f64,
    pub c: usize,
    pub rho: f64,
    pub mean_l: Option<f64>,
    pub cost: Option<f64>,
    /// Why the evaluator rejected the cell.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasible: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub cells: Vec<Cell>,
    pub optimum: Option<Cell>,
}

/// Evaluates every grid cell and returns the cheapest feasible one (ties
/// go to the lower `c`, then the lower rate).
pub fn brute_force(
    evaluator: &dyn Evaluator,
    lambda: f64,
    spec: &CostSpec,
) -> Result<Surface, DesignError> {
    spec.validate()?;
    let grid = spec.cells();
    let values = evaluator.evaluate(&grid);
    if values.len() != grid.len() {
        return Err(DesignError::Evaluator(format!(
            "returned {} values for {} cells",
            values.len(),
            grid.len()
        )));
    }
    let mut cells = Vec::with_capacity(grid.len());
    let mut best: Option<usize> = None;
    for (i, (&(rate, c), v)) in grid.iter().zip(values).enumerate() {
        let rho = utilization(lambda, rate, c);
        let cell = match v {
            Ok((l, lq)) if l.is_finite() && l >= 0.0 => {
                let charged = if spec.queue_only { lq.max(0.0) } else { l };
                let total = cost(rate, c, charged, spec);
                if best.is_none_or(|b| total < cells_cost(&cells, b)) {
                    best = Some(i);
                }
                Cell {
                    rate,
                    c,
                    rho,
                    mean_l: Some(l),
                    cost: Some(total),
                    infeasible: None,
                }
            }
            Ok((l, _)) => Cell {
                rate,
                c,
                rho,
                mean_l: None,
                cost: None,
                infeasible: Some(format!("evaluator returned {l}")),
            },
            Err(e) => Cell {
                rate,
                c,
                rho,
                mean_l: None,
                cost: None,
                infeasible: Some(e),
            },
        };
        cells.push(cell);
    }
    let optimum = best.map(|b| cells[b].clone());
    Ok(Surface { cells, optimum })
}

fn cells_cost(cells: &[Cell], i: usize) -> f64 {
    cells[i].cost.expect("best cell is feasible")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Surface {
    pub fn feasible(&self) -> usize {
        self.cells.iter().filter(|c| c.cost.is_some()).count()
    }

    /// `kind,rate,c,rho,mean_l,cost` with one row per cell and a final
    /// `optimum` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,rate,c,rho,mean_l,cost\n");
        let rows = self
            .cells
            .iter()
            .map(|c| (if c.cost.is_some() { "cell" } else { "infeasible" }, c))
            .chain(self.optimum.iter().map(|c| ("optimum", c)));
        for (kind, c) in rows {
            let _ = writeln!(
                out,
                "{kind},{},{},{},{},{}",
                c.rate,
                c.c,
                c.rho,
                opt(c.mean_l),
                opt(c.cost)
            );
        }
        out
    }
}
