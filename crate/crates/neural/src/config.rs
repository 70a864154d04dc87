use mf_core::features::{InputSchema, Task};
use serde::{Deserialize, Serialize};

use crate::NeuralError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: Task,
    pub projection_size: usize,
    pub ff_channels: usize,
    pub encoder_layers: usize,
    pub attention_heads: usize,
    pub lstm_hidden: usize,
    pub decoder_input_projection: usize,
    /// Hidden width of the first per-step convolution.
    pub conv_channels: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub input: InputSchema,
}

impl ModelConfig {
    pub fn for_task(task: Task) -> Self {
        ModelConfig {
            task,
            projection_size: 128,
            ff_channels: 128,
            encoder_layers: 2,
            attention_heads: 8,
            lstm_hidden: 64,
            decoder_input_projection: task.decoder_projection(),
            conv_channels: 64,
            dropout: task.dropout(),
            vocab_size: task.vocab(),
            input: task.schema(),
        }
    }

    /// A small configuration for gradient checks and fast tests.
    pub fn tiny(task: Task) -> Self {
        ModelConfig {
            projection_size: 8,
            ff_channels: 8,
            attention_heads: 2,
            lstm_hidden: 4,
            decoder_input_projection: 3,
            conv_channels: 4,
            ..ModelConfig::for_task(task)
        }
    }

    pub fn head_size(&self) -> usize {
        self.projection_size / self.attention_heads
    }

    /// Decoder token vocabulary including the start-of-sequence token.
    pub fn token_vocab(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn start_token(&self) -> usize {
        self.vocab_size
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::InvalidConfig(m.to_string()));
        if self.attention_heads == 0 || self.projection_size % self.attention_heads != 0 {
            return bad("projection size must be divisible by the head count");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.vocab_size == 0 || self.lstm_hidden == 0 || self.conv_channels == 0 || self.ff_channels == 0 {
            return bad("zero-sized layer");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_per_task() {
        let r = ModelConfig::for_task(Task::Rhythm);
        assert_eq!((r.vocab_size, r.decoder_input_projection, r.dropout), (256, 8, 0.1));
        let m = ModelConfig::for_task(Task::Melody);
        assert_eq!((m.vocab_size, m.decoder_input_projection, m.dropout), (16, 17, 0.2));
        assert_eq!(m.head_size(), 16);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ModelConfig::for_task(Task::Melody);
        c.attention_heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::for_task(Task::Melody);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }
}
