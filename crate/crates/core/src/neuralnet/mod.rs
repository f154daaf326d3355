//! Feed-forward surrogate from moment features to the occupancy distribution.

mod io;
mod loss;
mod mlp;
mod train;

use serde::{Deserialize, Serialize};

use crate::datagen::{DatagenError, Dataset};

pub use io::{ModelFile, MODEL_VERSION};
pub use loss::{loss, loss_grad};
pub use mlp::{Grads, Layer, Mlp, DEFAULT_HIDDEN, OUTPUT_DIM};
pub use train::{evaluate, train, train_with_progress, EpochStats, TrainConfig, Trained};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite training state: {0}")]
    NonFinite(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(std::io::Error),
    #[error(transparent)]
    Data(#[from] DatagenError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub val_sae: f64,
    pub test_sae: f64,
    pub best_epoch: usize,
}

/// Trains one model per moment count on the same rows and scores each on
/// `test`.
pub fn moment_sweep(
    train_set: &Dataset,
    test_set: &Dataset,
    ns: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<SweepPoint>, NnError> {
    ns.iter()
        .map(|&n| {
            let cfg = TrainConfig {
                n_moments: n,
                ..cfg.clone()
            };
            let trained = train(train_set, &cfg)?;
            let test = test_set.with_moments(n)?;
            let pred = trained.model.predict(&test.features())?;
            let truth = test.labels();
            let sae = truth
                .iter()
                .zip(&pred)
                .map(|(y, p)| crate::metrics::row_sae(y, p))
                .sum::<f64>()
                / truth.len().max(1) as f64;
            Ok(SweepPoint {
                n,
                val_sae: trained.best().val_sae,
                test_sae: sae,
                best_epoch: trained.best_epoch,
            })
        })
        .collect()
}
