//! Finite-difference verification of the analytic gradients.

use std::collections::BTreeMap;

use mf_core::features::TaskSequence;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::params::{ModelParams, ParamGroup};
use crate::train::batch_gradient;
use crate::NeuralError;

pub const STEP: f64 = 1e-5;
/// Denominator floor. Central differences at `STEP` resolve the loss only to
/// about one ulp / (2 * STEP), so gradients below the floor (for example the
/// exactly-zero key-bias gradient) are compared on an absolute scale.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub per_group: BTreeMap<ParamGroup, f64>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compares analytic and central-difference gradients of the mean batch loss
/// on up to `max_params` parameters, sampled evenly across groups.
pub fn grad_check(p: &ModelParams<f64>, batch: &[TaskSequence], max_params: usize, seed: u64) -> Result<GradCheckReport, NeuralError> {
    let refs: Vec<&TaskSequence> = batch.iter().collect();
    let mut analytic = vec![0.0; p.len()];
    batch_gradient(p, &refs, None, &mut analytic)?;

    let mut by_group: BTreeMap<ParamGroup, Vec<usize>> = BTreeMap::new();
    for t in &p.layout.tensors {
        by_group.entry(t.group).or_default().extend(t.range());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let share = max_params / by_group.len().max(1);
    let mut picked = Vec::new();
    for idx in by_group.values() {
        let k = share.min(idx.len());
        picked.extend(sample(&mut rng, idx.len(), k).into_iter().map(|j| idx[j]));
    }

    let mut probe = p.clone();
    let mut scratch = vec![0.0; p.len()];
    let mut eval = |probe: &ModelParams<f64>| -> Result<f64, NeuralError> { batch_gradient(probe, &refs, None, &mut scratch) };
    let mut per_group: BTreeMap<ParamGroup, f64> = BTreeMap::new();
    for &i in &picked {
        let x = probe.data[i];
        probe.data[i] = x + STEP;
        let up = eval(&probe)?;
        probe.data[i] = x - STEP;
        let down = eval(&probe)?;
        probe.data[i] = x;
        let err = relative_error(analytic[i], (up - down) / (2.0 * STEP));
        let e = per_group.entry(p.layout.group_of(i)).or_insert(0.0);
        *e = e.max(err);
    }
    let max_relative_error = per_group.values().cloned().fold(0.0, f64::max);
    Ok(GradCheckReport { max_relative_error, per_group, checked: picked.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::params::ModelParams;
    use mf_core::features::{phrase_sequence, Task};
    use mf_core::score::SectionKind;
    use mf_core::toy::toy_phrase;

    #[test]
    fn tiny_models_pass() {
        for task in Task::ALL {
            let p = ModelParams::<f64>::init(&ModelConfig::tiny(task), 11);
            let batch: Vec<_> = (0..2).map(|i| phrase_sequence(task, &toy_phrase(i), SectionKind::Theme)).collect();
            let r = grad_check(&p, &batch, 300, 0).unwrap();
            assert!(r.max_relative_error < 1e-4, "{task}: {r:?}");
            assert_eq!(r.per_group.len(), 6);
        }
    }

    #[test]
    fn floor_only_matters_for_tiny_gradients() {
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!(relative_error(0.0, 2.2e-11) < 1e-4);
        assert!(relative_error(1e-3, 1.1e-3) > 1e-4);
    }

    #[test]
    fn perfect_predictions_give_zero_output_gradient() {
        let task = Task::BasicMelody;
        let mut p = ModelParams::<f64>::init(&ModelConfig::tiny(task), 1);
        let s = phrase_sequence(task, &toy_phrase(0), SectionKind::Theme);
        // Constant targets with a huge output bias make the prediction one-hot.
        let seq = TaskSequence { targets: vec![5; s.len()], ..s };
        let r = p.layout.tensors[p.layout.conv2_b].range();
        p.data[r.clone()].fill(0.0);
        p.data[r.start + 5] = 200.0;
        let mut g = vec![0.0; p.len()];
        let loss = batch_gradient(&p, &[&seq], None, &mut g).unwrap();
        assert!(loss < 1e-12);
        for slot in [p.layout.conv2_w, p.layout.conv2_b] {
            assert!(g[p.layout.tensors[slot].range()].iter().all(|v| v.abs() < 1e-12));
        }
    }
}
