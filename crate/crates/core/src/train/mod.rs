//! Optimization loop, evaluation, the component ablation and gradient
//! checks.

mod ablation;
mod eval;
pub mod gradcheck;
mod optim;
mod trainer;

use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::tensor::TensorError;
use crate::weather::WeatherError;

pub use ablation::{run_ablation, AblationRow, AblationSettings, AblationTable, FULL_SCALE_NET5};
pub use eval::{evaluate, time_inference, EvalReport, KindScore};
pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport, GroupReport};
pub use optim::{cosine_lr, Adam, AdamConfig};
pub use trainer::{curve_csv, smoothed_ends, train, LossPoint, TrainOptions, TrainState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Weather(#[from] WeatherError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
