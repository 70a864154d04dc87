use mf_core::features::{phrase_sequence, Task};
use mf_core::score::SectionKind;
use mf_core::toy::toy_phrase;
use mf_neural::model::forward_trace;
use mf_neural::{forward, lr_schedule, ModelConfig, ModelParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn dropout_expectation_matches_off_value() {
    let task = Task::Melody;
    let mut p = ModelParams::<f64>::init(&ModelConfig::for_task(task), 21);
    // Cut the encoder out of the decoder so that only the output-side
    // dropout remains; the logits are then linear in its mask.
    let d = p.config.projection_size;
    let wx = p.layout.lstm_wx;
    p.view_mut(wx).slice_mut(ndarray::s![..d, ..]).fill(0.0);
    let s = phrase_sequence(task, &toy_phrase(4), SectionKind::Theme);
    let off = forward_trace::<f64, ChaCha8Rng>(&p, &s.rows, &s.targets, None).unwrap().logits;
    let (step, class) = (3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<f64> = (0..1000).map(|_| forward_trace(&p, &s.rows, &s.targets, Some(&mut rng)).unwrap().logits[(step, class)]).collect();
    let mean = samples.iter().sum::<f64>() / 1000.0;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
    let se = (var / 1000.0).sqrt();
    assert!(var > 0.0);
    assert!((mean - off[(step, class)]).abs() <= 3.0 * se, "mean {mean} off {} se {se}", off[(step, class)]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outputs_are_distributions(seed in 0u64..1000, phrase in 0usize..8, task in 0usize..3) {
        let task = Task::ALL[task];
        let p = ModelParams::<f32>::init(&ModelConfig::tiny(task), seed);
        let s = phrase_sequence(task, &toy_phrase(phrase), SectionKind::Theme);
        let probs = forward(&p, &s.rows, &s.targets).unwrap();
        for row in probs.rows() {
            prop_assert!((row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn causal_in_teacher_tokens(seed in 0u64..1000, j in 0usize..8, shift in 1u16..16) {
        let p = ModelParams::<f64>::init(&ModelConfig::tiny(Task::BasicMelody), seed);
        let s = phrase_sequence(Task::BasicMelody, &toy_phrase(seed as usize % 8), SectionKind::Theme);
        let base = forward(&p, &s.rows, &s.targets).unwrap();
        let mut t = s.targets.clone();
        t[j] = (t[j] + shift) % 16;
        let out = forward(&p, &s.rows, &t).unwrap();
        for i in 0..=j {
            prop_assert_eq!(out.row(i), base.row(i));
        }
    }

    #[test]
    fn schedule_peaks_at_warmup(step in 1u64..100_000) {
        prop_assert!(lr_schedule(step, 128, 2000) <= lr_schedule(2000, 128, 2000) + 1e-15);
    }
}
