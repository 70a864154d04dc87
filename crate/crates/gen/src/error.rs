use mf_core::features::Task;
use mf_neural::NeuralError;

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("no trained {0} model loaded")]
    ModelMissing(Task),
    #[error("empty input sequence")]
    EmptyInput,
    #[error("invalid sampling policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Core(#[from] mf_core::Error),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

pub type Result<T, E = GenError> = std::result::Result<T, E>;
