//! Transformer-encoder / LSTM-decoder sequence model for the basic-melody,
//! rhythm and melody tasks.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod train;

pub use config::ModelConfig;
pub use model::{decoder_step, encode, forward, loss, DecoderState};
pub use optim::{lr_schedule, OptimizerState};
pub use params::{ModelParams, ParamGroup};
pub use scalar::Scalar;
pub use train::{accuracy, train, TrainConfig, TrainLog};

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at step {step} (non-finite loss)")]
    DivergenceDetected { step: u64 },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
