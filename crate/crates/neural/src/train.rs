//! Mini-batch training with per-epoch validation and best-model selection.

use log::info;
use mf_core::features::TaskSequence;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::model::{backward, forward, forward_trace};
use crate::optim::OptimizerState;
use crate::params::ModelParams;
use crate::scalar::Scalar;
use crate::NeuralError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    /// Validate every this many epochs (the last epoch is always validated).
    pub eval_every: usize,
    /// Stop once validation accuracy reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { max_steps: 2000, batch_size: 16, seed: 0, eval_every: 1, target_accuracy: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub step: u64,
    pub train_loss: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub steps: u64,
    pub best_epoch: usize,
    pub best_accuracy: f64,
}

/// Mean loss over `batch` and its gradient, accumulated one sequence at a
/// time in batch order.
pub fn batch_gradient<T: Scalar>(
    p: &ModelParams<T>,
    batch: &[&TaskSequence],
    mut rng: Option<&mut ChaCha8Rng>,
    grads: &mut [T],
) -> Result<f64, NeuralError> {
    let tokens: usize = batch.iter().map(|s| s.len()).sum();
    let weight = T::of(1.0 / tokens.max(1) as f64);
    let mut total = 0.0;
    for s in batch {
        let trace = forward_trace(p, &s.rows, &s.targets, rng.as_deref_mut())?;
        total += s.targets.iter().enumerate().map(|(i, &t)| -trace.probs[(i, t as usize)].f64().ln()).sum::<f64>();
        backward(p, &trace, &s.targets, weight, grads);
    }
    Ok(total / tokens.max(1) as f64)
}

/// Teacher-forced next-token accuracy; argmax ties go to the lowest class.
pub fn accuracy<T: Scalar>(p: &ModelParams<T>, seqs: &[TaskSequence]) -> Result<f64, NeuralError> {
    let (mut hit, mut total) = (0usize, 0usize);
    for s in seqs {
        let probs = forward(p, &s.rows, &s.targets)?;
        for (row, &t) in probs.rows().into_iter().zip(&s.targets) {
            let best = row.iter().enumerate().fold(0, |b, (k, &v)| if v > row[b] { k } else { b });
            hit += (best == t as usize) as usize;
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

/// Trains from a seeded initialization. Validation falls back to the
/// training set when `validation` is empty. Returns the parameters with the
/// best validation accuracy (earliest on ties).
pub fn train(
    config: &ModelConfig,
    training: &[TaskSequence],
    validation: &[TaskSequence],
    tc: &TrainConfig,
) -> Result<(ModelParams<f32>, TrainLog), NeuralError> {
    config.validate()?;
    train_from(ModelParams::init(config, tc.seed), training, validation, tc)
}

/// Like [`train`] but from given initial parameters.
pub fn train_from(
    mut params: ModelParams<f32>,
    training: &[TaskSequence],
    validation: &[TaskSequence],
    tc: &TrainConfig,
) -> Result<(ModelParams<f32>, TrainLog), NeuralError> {
    let config = params.config.clone();
    let training: Vec<&TaskSequence> = training.iter().filter(|s| !s.is_empty()).collect();
    if training.is_empty() {
        return Err(NeuralError::EmptyTrainingSet);
    }
    let owned: Vec<TaskSequence>;
    let validation = if validation.is_empty() {
        owned = training.iter().map(|s| (*s).clone()).collect();
        &owned[..]
    } else {
        validation
    };

    let mut opt = OptimizerState::new(params.len(), config.projection_size);
    let mut order_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    order_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    dropout_rng.set_stream(2);

    let mut log = TrainLog { epochs: Vec::new(), steps: 0, best_epoch: 0, best_accuracy: f64::NEG_INFINITY };
    let mut best = params.clone();
    let mut order: Vec<usize> = (0..training.len()).collect();
    let mut grads = vec![0f32; params.len()];
    let mut epoch = 0;
    while opt.step < tc.max_steps {
        epoch += 1;
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut batches) = (0.0, 0);
        for chunk in order.chunks(tc.batch_size.max(1)) {
            if opt.step >= tc.max_steps {
                break;
            }
            let batch: Vec<&TaskSequence> = chunk.iter().map(|&i| training[i]).collect();
            grads.fill(0.0);
            let loss = batch_gradient(&params, &batch, Some(&mut dropout_rng), &mut grads)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(NeuralError::DivergenceDetected { step: opt.step + 1 });
            }
            opt.update(&mut params.data, &grads);
            loss_sum += loss;
            batches += 1;
        }
        let last = opt.step >= tc.max_steps;
        let validation_accuracy =
            if last || epoch % tc.eval_every.max(1) == 0 { Some(accuracy(&params, validation)?) } else { None };
        let train_loss = loss_sum / batches.max(1) as f64;
        info!("epoch {epoch} step {} loss {train_loss:.4} accuracy {validation_accuracy:?}", opt.step);
        log.epochs.push(EpochLog { epoch, step: opt.step, train_loss, validation_accuracy });
        if let Some(acc) = validation_accuracy {
            if acc > log.best_accuracy {
                log.best_accuracy = acc;
                log.best_epoch = epoch;
                best.data.copy_from_slice(&params.data);
            }
            if tc.target_accuracy.is_some_and(|t| acc >= t) {
                break;
            }
        }
    }
    log.steps = opt.step;
    Ok((best, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::loss;
    use mf_core::features::{song_sequences, Task};
    use mf_core::toy::toy_corpus;

    fn toy(task: Task) -> Vec<TaskSequence> {
        toy_corpus().iter().flat_map(|s| song_sequences(task, s)).collect()
    }

    fn mean_loss(p: &ModelParams<f32>, seqs: &[TaskSequence]) -> f64 {
        seqs.iter().map(|s| loss(&forward(p, &s.rows, &s.targets).unwrap(), &s.targets)).sum::<f64>() / seqs.len() as f64
    }

    #[test]
    fn loss_drops_below_uniform() {
        let data = toy(Task::BasicMelody);
        let config = ModelConfig::tiny(Task::BasicMelody);
        let tc = TrainConfig { max_steps: 500, seed: 1, eval_every: 50, ..Default::default() };
        let (p, log) = train(&config, &data, &[], &tc).unwrap();
        assert_eq!(log.steps, 500);
        assert!(mean_loss(&p, &data) < 16f64.ln());
        assert!(log.epochs.last().unwrap().train_loss < 16f64.ln());
    }

    #[test]
    fn same_seed_same_params() {
        let data = toy(Task::Rhythm);
        let config = ModelConfig::tiny(Task::Rhythm);
        let tc = TrainConfig { max_steps: 20, seed: 9, ..Default::default() };
        let (a, la) = train(&config, &data, &[], &tc).unwrap();
        let (b, lb) = train(&config, &data, &[], &tc).unwrap();
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(la, lb);
    }

    #[test]
    fn constant_targets_are_learned() {
        let mut data = toy(Task::Melody);
        for s in &mut data {
            s.targets.iter_mut().for_each(|t| *t = 8);
        }
        let config = ModelConfig::tiny(Task::Melody);
        let tc = TrainConfig { max_steps: 400, seed: 2, target_accuracy: Some(1.0), ..Default::default() };
        let (p, log) = train(&config, &data, &[], &tc).unwrap();
        assert_eq!(log.best_accuracy, 1.0);
        assert_eq!(accuracy(&p, &data).unwrap(), 1.0);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let config = ModelConfig::tiny(Task::Melody);
        assert!(matches!(train(&config, &[], &[], &TrainConfig::default()), Err(NeuralError::EmptyTrainingSet)));
    }

    #[test]
    fn nan_loss_is_divergence() {
        let data = toy(Task::BasicMelody);
        let mut p = ModelParams::<f32>::init(&ModelConfig::tiny(Task::BasicMelody), 0);
        let r = p.layout.tensors[p.layout.conv2_b].range();
        p.data[r].fill(f32::NAN);
        let err = train_from(p, &data, &[], &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, NeuralError::DivergenceDetected { step: 1 }));
    }
}
