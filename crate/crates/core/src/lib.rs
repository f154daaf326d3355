pub mod baselines;
pub mod datagen;
pub mod designopt;
pub mod dists;
pub mod metrics;
pub mod neuralnet;
pub mod seed;
pub mod simqueue;
mod system;

pub use system::SystemKind;
