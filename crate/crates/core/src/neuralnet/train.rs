use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{Grads, Layer, Mlp, DEFAULT_HIDDEN};
use super::{loss, ModelFile, NnError};
use crate::datagen::Dataset;
use crate::metrics::row_sae;
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Moments per distribution; features are rebuilt when it differs
    /// from the dataset header.
    pub n_moments: usize,
    /// Trailing fraction of rows held out for model selection. When it
    /// rounds to zero rows the training rows double as validation.
    pub val_fraction: f64,
    pub seed: u64,
    pub patience: usize,
    pub hidden: Vec<usize>,
    /// Start the softmax head at the average training label.
    pub init_output_bias: bool,
    /// Decoupled weight decay applied to weight matrices each step.
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 256,
            lr: 1e-3,
            epochs: 200,
            n_moments: 4,
            val_fraction: 0.1,
            seed: 0,
            patience: 10,
            hidden: DEFAULT_HIDDEN.to_vec(),
            init_output_bias: true,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), NnError> {
        if self.batch < 1 {
            return Err(NnError::Config("batch size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(NnError::Config(format!("learning rate {} must be > 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(NnError::Config("validation fraction must lie in [0, 1)".into()));
        }
        if self.epochs < 1 {
            return Err(NnError::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_sae: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ModelFile,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl Trained {
    pub fn best(&self) -> &EpochStats {
        &self.history[self.best_epoch]
    }
}

struct Adam {
    m: Vec<Layer<f32>>,
    v: Vec<Layer<f32>>,
    t: i32,
    lr: f32,
    decay: f32,
}

impl Adam {
    const B1: f32 = 0.9;
    const B2: f32 = 0.999;
    const EPS: f32 = 1e-8;

    fn new(model: &Mlp<f32>, lr: f64, weight_decay: f64) -> Self {
        let zeros = || {
            model
                .layers
                .iter()
                .map(|l| Layer {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect()
        };
        Adam {
            m: zeros(),
            v: zeros(),
            t: 0,
            lr: lr as f32,
            decay: (lr * weight_decay) as f32,
        }
    }

    fn step(&mut self, model: &mut Mlp<f32>, grads: &Grads<f32>) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        let eps = Self::EPS * c2.sqrt();
        for (k, g) in grads.layers.iter().enumerate() {
            let p = &mut model.layers[k];
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            if self.decay > 0.0 {
                p.w.mapv_inplace(|w| w * (1.0 - self.decay));
            }
            Zip::from(&mut p.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .and(&g.w)
                .for_each(|p, m, v, g| update(p, m, v, *g, step, eps));
            Zip::from(&mut p.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .and(&g.b)
                .for_each(|p, m, v, g| update(p, m, v, *g, step, eps));
        }
    }
}

#[inline]
fn update(p: &mut f32, m: &mut f32, v: &mut f32, g: f32, step: f32, eps: f32) {
    *m = Adam::B1 * *m + (1.0 - Adam::B1) * g;
    *v = Adam::B2 * *v + (1.0 - Adam::B2) * g * g;
    *p -= step * *m / (v.sqrt() + eps);
}

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f32>, NnError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(NnError::Shape("rows have differing lengths".into()));
    }
    Ok(Array2::from_shape_fn((rows.len(), cols), |(i, j)| {
        rows[i][j] as f32
    }))
}

fn gather(src: &Array2<f32>, idx: &[usize]) -> Array2<f32> {
    src.select(Axis(0), idx)
}

/// Loss and mean SAE of `model` on `(x, y)`, evaluated in chunks.
pub fn evaluate(
    model: &Mlp<f32>,
    x: ArrayView2<f32>,
    y: ArrayView2<f32>,
) -> Result<(f64, f64), NnError> {
    let n = x.nrows();
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let mut loss_sum = 0.0;
    let mut sae_sum = 0.0;
    let chunk = 1024;
    for start in (0..n).step_by(chunk) {
        let end = (start + chunk).min(n);
        let xs = x.slice(ndarray::s![start..end, ..]);
        let ys = y.slice(ndarray::s![start..end, ..]);
        let p = model.infer_batch(xs)?;
        loss_sum += loss(ys, p.view())? as f64 * (end - start) as f64;
        for (yr, pr) in ys.rows().into_iter().zip(p.rows()) {
            let yv: Vec<f64> = yr.iter().map(|v| *v as f64).collect();
            let pv: Vec<f64> = pr.iter().map(|v| *v as f64).collect();
            sae_sum += row_sae(&yv, &pv);
        }
    }
    Ok((loss_sum / n as f64, sae_sum / n as f64))
}

pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<Trained, NnError> {
    train_with_progress(data, cfg, &mut |_| {})
}

/// Minibatch Adam on the combined L1 + max loss, keeping the parameters
/// with the lowest validation SAE.
pub fn train_with_progress(
    data: &Dataset,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&EpochStats),
) -> Result<Trained, NnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NnError::Config("dataset has no rows".into()));
    }
    let data = if data.header.n != cfg.n_moments {
        data.with_moments(cfg.n_moments)?
    } else {
        data.clone()
    };
    let x_all = to_matrix(&data.features())?;
    let y_all = to_matrix(&data.labels())?;
    let n = data.len();
    let n_val = (n as f64 * cfg.val_fraction).floor() as usize;
    let n_train = n - n_val;
    let (x_tr, y_tr) = (
        x_all.slice(ndarray::s![..n_train, ..]).to_owned(),
        y_all.slice(ndarray::s![..n_train, ..]).to_owned(),
    );
    let (x_val, y_val) = if n_val == 0 {
        (x_tr.clone(), y_tr.clone())
    } else {
        (
            x_all.slice(ndarray::s![n_train.., ..]).to_owned(),
            y_all.slice(ndarray::s![n_train.., ..]).to_owned(),
        )
    };

    let mut init_rng = rng_from_seed(derive_seed(cfg.seed, &[0]));
    let mut model: Mlp<f32> =
        Mlp::new(x_all.ncols(), &cfg.hidden, y_all.ncols(), &mut init_rng)?;
    model.fit_standardization(x_tr.view());
    if cfg.init_output_bias {
        let mean = y_tr.mean_axis(Axis(0)).expect("nonempty training set");
        let head = model.layers.last_mut().expect("output layer");
        head.b = mean.mapv(|p| p.max(1e-7).ln());
    }

    let mut adam = Adam::new(&model, cfg.lr, cfg.weight_decay);
    let mut shuffle_rng = rng_from_seed(derive_seed(cfg.seed, &[1]));
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.clone());
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch).enumerate() {
            let xb = gather(&x_tr, idx);
            let yb = gather(&y_tr, idx);
            let (l, g) = model.loss_and_grad(xb.view(), yb.view())?;
            if !l.is_finite() {
                return Err(NnError::NonFinite(format!(
                    "loss {l} at epoch {epoch}, batch {b} with learning rate {}; \
                     lower the learning rate or check feature scaling",
                    cfg.lr
                )));
            }
            loss_sum += l as f64 * idx.len() as f64;
            adam.step(&mut model, &g);
        }
        if !model.all_finite() {
            return Err(NnError::NonFinite(format!(
                "parameters diverged at epoch {epoch} with learning rate {}",
                cfg.lr
            )));
        }
        let (val_loss, val_sae) = evaluate(&model, x_val.view(), y_val.view())?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / n_train as f64,
            val_loss,
            val_sae,
        };
        progress(&stats);
        history.push(stats);
        if val_sae < best.0 {
            best = (val_sae, epoch, model.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    Ok(Trained {
        model: ModelFile {
            system: data.header.system,
            n_moments: cfg.n_moments,
            mlp: best.2,
        },
        history,
        best_epoch: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{exact_mmc_instance, DatasetHeader, GenConfig};
    use crate::SystemKind;

    fn mmc_data(count: usize, seed: u64) -> Dataset {
        let cfg = GenConfig::default();
        let rows = (0..count as u64)
            .map(|i| exact_mmc_instance(derive_seed(seed, &[i]), &cfg, 500, 4).unwrap())
            .collect();
        Dataset {
            header: DatasetHeader::new(SystemKind::Ggc, 4, 500),
            rows,
        }
    }

    #[test]
    fn memorizes_single_instance() {
        let data = mmc_data(1, 3);
        let cfg = TrainConfig {
            epochs: 1000,
            patience: 1000,
            lr: 1e-2,
            hidden: vec![32, 32],
            init_output_bias: false,
            ..Default::default()
        };
        let t = train(&data, &cfg).unwrap();
        assert!(t.history[0].train_loss > 0.5);
        assert!(t.best().val_loss < 0.02, "{:?}", t.best());
    }

    #[test]
    fn history_and_early_stop() {
        let data = mmc_data(60, 4);
        let cfg = TrainConfig {
            epochs: 50,
            patience: 3,
            batch: 16,
            hidden: vec![16],
            lr: 1e-2,
            ..Default::default()
        };
        let t = train(&data, &cfg).unwrap();
        assert!(!t.history.is_empty() && t.history.len() <= 50);
        let best = t.best().val_sae;
        assert!(t.history.iter().all(|h| h.val_sae >= best));
        assert_eq!(t.model.mlp.input_dim(), 9);
    }

    #[test]
    fn deterministic_given_seed() {
        let data = mmc_data(20, 5);
        let cfg = TrainConfig {
            epochs: 3,
            hidden: vec![8],
            ..Default::default()
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.model.mlp, b.model.mlp);
    }

    #[test]
    fn bad_config_is_rejected() {
        let data = mmc_data(2, 6);
        for cfg in [
            TrainConfig { batch: 0, ..Default::default() },
            TrainConfig { lr: 0.0, ..Default::default() },
        ] {
            assert!(matches!(train(&data, &cfg), Err(NnError::Config(_))));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let data = mmc_data(8, 7);
        let cfg = TrainConfig {
            lr: 1e30,
            epochs: 5,
            hidden: vec![8],
            ..Default::default()
        };
        assert!(matches!(train(&data, &cfg), Err(NnError::NonFinite(_))));
    }
}
