//! JSON checkpoint container: config header plus flat single-precision weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::params::{Layout, ModelParams};
use crate::NeuralError;

pub const FORMAT: &str = "musicframeworks-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    tensors: Vec<TensorHeader>,
    params: Vec<f32>,
}

pub fn to_bytes(p: &ModelParams<f32>) -> Vec<u8> {
    let c = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        config: p.config.clone(),
        tensors: p.layout.tensors.iter().map(|t| TensorHeader { name: t.name.clone(), rows: t.rows, cols: t.cols }).collect(),
        params: p.data.clone(),
    };
    serde_json::to_vec(&c).expect("checkpoint serializes")
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams<f32>, NeuralError> {
    let c: Checkpoint = serde_json::from_slice(bytes)?;
    if c.format != FORMAT || c.version != VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported checkpoint {} v{}", c.format, c.version)));
    }
    c.config.validate()?;
    let layout = Layout::new(&c.config);
    let shapes_match = layout.tensors.len() == c.tensors.len()
        && layout.tensors.iter().zip(&c.tensors).all(|(a, b)| a.name == b.name && a.rows == b.rows && a.cols == b.cols);
    if !shapes_match || c.params.len() != layout.size {
        return Err(NeuralError::Checkpoint("tensor shapes do not match the config".into()));
    }
    let p = ModelParams { config: c.config, layout, data: c.params };
    if !p.is_finite() {
        return Err(NeuralError::Checkpoint("non-finite weights".into()));
    }
    Ok(p)
}

pub fn save(path: &Path, p: &ModelParams<f32>) -> Result<(), NeuralError> {
    std::fs::write(path, to_bytes(p))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParams<f32>, NeuralError> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mf_core::features::Task;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = ModelParams::<f32>::init(&ModelConfig::for_task(Task::Rhythm), 8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rhythm.json");
        save(&path, &p).unwrap();
        let q = load(&path).unwrap();
        assert_eq!(q.config, p.config);
        assert!(q.data.iter().zip(&p.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let p = ModelParams::<f32>::init(&ModelConfig::tiny(Task::Melody), 0);
        let mut v: serde_json::Value = serde_json::from_slice(&to_bytes(&p)).unwrap();
        v["params"].as_array_mut().unwrap().pop();
        assert!(matches!(from_bytes(&serde_json::to_vec(&v).unwrap()), Err(NeuralError::Checkpoint(_))));
        v["format"] = "other".into();
        assert!(from_bytes(&serde_json::to_vec(&v).unwrap()).is_err());
        assert!(from_bytes(b"{").is_err());
    }
}
