//! Autoregressive decoding: ancestral draws, best-of-N and beam search.

use std::cmp::Ordering;

use mf_core::features::EncoderFeatures;
use mf_neural::{decoder_step, encode, DecoderState, ModelParams};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GenError, Result};
use crate::seed::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyKind {
    Ancestral,
    BestOfN { n: usize },
    Beam { width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SamplingPolicy {
    pub fn ancestral() -> Self {
        SamplingPolicy { kind: PolicyKind::Ancestral, temperature: 1.0, seed: 0 }
    }

    pub fn best_of(n: usize) -> Self {
        SamplingPolicy { kind: PolicyKind::BestOfN { n }, ..Self::ancestral() }
    }

    pub fn beam(width: usize) -> Self {
        SamplingPolicy { kind: PolicyKind::Beam { width }, ..Self::ancestral() }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SamplingPolicy { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GenError::InvalidPolicy(m.into()));
        match self.kind {
            PolicyKind::BestOfN { n: 0 } => bad("best-of-N needs N >= 1"),
            PolicyKind::Beam { width: 0 } => bad("beam width must be >= 1"),
            _ if !(self.temperature > 0.0 && self.temperature.is_finite()) => bad("temperature must be positive"),
            _ => Ok(()),
        }
    }
}

/// Restrictions on decoding: classes that may be drawn, and tokens forced
/// at the start of the sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Constraints {
    pub allowed: Option<Vec<bool>>,
    pub prefix: Vec<u16>,
}

impl Constraints {
    pub fn without(vocab: usize, banned: &[u16]) -> Self {
        let mut allowed = vec![true; vocab];
        for &b in banned {
            allowed[b as usize] = false;
        }
        Constraints { allowed: Some(allowed), prefix: Vec::new() }
    }

    pub fn with_prefix(self, prefix: Vec<u16>) -> Self {
        Constraints { prefix, ..self }
    }

    fn allows(&self, k: usize) -> bool {
        self.allowed.as_ref().is_none_or(|a| a[k])
    }
}

/// A decoded sequence and its total log-probability under the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampled {
    pub tokens: Vec<u16>,
    pub log_prob: f64,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - z).collect()
}

fn draw<R: Rng>(logits: &[f64], temperature: f64, c: &Constraints, rng: &mut R) -> u16 {
    let allowed: Vec<usize> = (0..logits.len()).filter(|&k| c.allows(k)).collect();
    let max = allowed.iter().map(|&k| logits[k]).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = allowed.iter().map(|&k| ((logits[k] - max) / temperature).exp()).collect();
    let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (&k, w) in allowed.iter().zip(&weights) {
        if u < *w {
            return k as u16;
        }
        u -= w;
    }
    *allowed.last().expect("at least one allowed class") as u16
}

fn ancestral(model: &ModelParams<f32>, enc: &Array2<f32>, policy: &SamplingPolicy, c: &Constraints, stream: u64) -> Sampled {
    let mut rng = rng(policy.seed, stream);
    let mut state = DecoderState::new(model);
    let mut tokens = Vec::with_capacity(enc.nrows());
    let mut log_prob = 0.0;
    for i in 0..enc.nrows() {
        let (logits, next) = decoder_step(model, enc.row(i), tokens.last().copied(), &state);
        let tok = c.prefix.get(i).copied().unwrap_or_else(|| draw(&logits, policy.temperature, c, &mut rng));
        log_prob += log_softmax(&logits)[tok as usize];
        tokens.push(tok);
        state = next;
    }
    Sampled { tokens, log_prob }
}

fn beam(model: &ModelParams<f32>, enc: &Array2<f32>, width: usize, c: &Constraints) -> Sampled {
    let mut beams = vec![(Vec::<u16>::new(), 0.0f64, DecoderState::new(model))];
    for i in 0..enc.nrows() {
        let mut cand: Vec<(usize, u16, f64)> = Vec::new();
        let mut states = Vec::with_capacity(beams.len());
        for (b, (tokens, score, state)) in beams.iter().enumerate() {
            let (logits, next) = decoder_step(model, enc.row(i), tokens.last().copied(), state);
            let lp = log_softmax(&logits);
            match c.prefix.get(i) {
                Some(&t) => cand.push((b, t, score + lp[t as usize])),
                None => cand.extend((0..lp.len()).filter(|&k| c.allows(k)).map(|k| (b, k as u16, score + lp[k]))),
            }
            states.push(next);
        }
        cand.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal).then((a.0, a.1).cmp(&(b.0, b.1))));
        cand.truncate(width);
        beams = cand
            .into_iter()
            .map(|(b, t, s)| {
                let mut tokens = beams[b].0.clone();
                tokens.push(t);
                (tokens, s, states[b].clone())
            })
            .collect();
    }
    let (tokens, log_prob, _) = beams.swap_remove(0);
    Sampled { tokens, log_prob }
}

/// Decodes one sequence for `rows`. Best-of-N keeps the first candidate
/// with the highest log-probability; candidate `k` draws from its own stream.
pub fn sample_sequence(model: &ModelParams<f32>, rows: &[EncoderFeatures], policy: &SamplingPolicy, c: &Constraints) -> Result<Sampled> {
    policy.validate()?;
    if let Some(a) = &c.allowed {
        if a.len() != model.config.vocab_size || !a.iter().any(|&x| x) {
            return Err(GenError::InvalidPolicy("mask must match the vocabulary and allow a class".into()));
        }
    }
    if c.prefix.iter().any(|&t| t as usize >= model.config.vocab_size) {
        return Err(GenError::InvalidPolicy("prefix token outside vocabulary".into()));
    }
    let enc = encode(model, rows)?;
    Ok(match policy.kind {
        PolicyKind::Ancestral => ancestral(model, &enc, policy, c, 0),
        PolicyKind::BestOfN { n } => (0..n as u64)
            .map(|k| ancestral(model, &enc, policy, c, k))
            .reduce(|best, s| if s.log_prob > best.log_prob { s } else { best })
            .expect("n >= 1"),
        PolicyKind::Beam { width } => beam(model, &enc, width, c),
    })
}

/// Total log-probability of `tokens` under teacher forcing.
pub fn sequence_log_prob(model: &ModelParams<f32>, rows: &[EncoderFeatures], tokens: &[u16]) -> Result<f64> {
    let probs = mf_neural::forward(model, rows, tokens)?;
    Ok(tokens.iter().enumerate().map(|(i, &t)| (probs[(i, t as usize)] as f64).ln()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mf_core::features::{phrase_sequence, Task};
    use mf_core::score::SectionKind;
    use mf_core::toy::toy_phrase;
    use mf_neural::ModelConfig;

    fn setup(task: Task) -> (ModelParams<f32>, Vec<EncoderFeatures>) {
        let p = ModelParams::init(&ModelConfig::tiny(task), 3);
        (p, phrase_sequence(task, &toy_phrase(0), SectionKind::Theme).rows)
    }

    /// Forces the output toward `token` regardless of context.
    fn peaked(mut p: ModelParams<f32>, token: usize) -> ModelParams<f32> {
        let r = p.layout.tensors[p.layout.conv2_b].range();
        p.data[r.clone()].fill(0.0);
        p.data[r.start + token] = 60.0;
        p
    }

    #[test]
    fn policies_agree_on_peaked_model() {
        let (p, rows) = setup(Task::Melody);
        let p = peaked(p, 9);
        let c = Constraints::default();
        let seqs: Vec<_> = [SamplingPolicy::ancestral(), SamplingPolicy::best_of(10), SamplingPolicy::beam(4)]
            .iter()
            .map(|pol| sample_sequence(&p, &rows, pol, &c).unwrap().tokens)
            .collect();
        assert!(seqs.iter().all(|s| s == &vec![9; rows.len()]));
    }

    #[test]
    fn best_of_n_beats_median() {
        let (p, rows) = setup(Task::BasicMelody);
        let pol = SamplingPolicy::best_of(25).with_seed(5);
        let best = sample_sequence(&p, &rows, &pol, &Constraints::default()).unwrap();
        let enc = encode(&p, &rows).unwrap();
        let mut lps: Vec<f64> = (0..25).map(|k| ancestral(&p, &enc, &pol, &Constraints::default(), k).log_prob).collect();
        lps.sort_by(f64::total_cmp);
        assert_eq!(best.log_prob, *lps.last().unwrap());
        assert!(best.log_prob >= lps[12]);
        let check = sequence_log_prob(&p, &rows, &best.tokens).unwrap();
        assert!((check - best.log_prob).abs() < 1e-4);
    }

    #[test]
    fn beam_one_is_greedy() {
        let (p, rows) = setup(Task::Rhythm);
        let enc = encode(&p, &rows).unwrap();
        let mut state = DecoderState::new(&p);
        let mut greedy = Vec::new();
        for i in 0..rows.len() {
            let (logits, next) = decoder_step(&p, enc.row(i), greedy.last().copied(), &state);
            let best = (0..logits.len()).fold(0, |b, k| if logits[k] > logits[b] { k } else { b });
            greedy.push(best as u16);
            state = next;
        }
        let b = sample_sequence(&p, &rows, &SamplingPolicy::beam(1), &Constraints::default()).unwrap();
        assert_eq!(b.tokens, greedy);
        let wide = sample_sequence(&p, &rows, &SamplingPolicy::beam(8), &Constraints::default()).unwrap();
        assert!(wide.log_prob >= b.log_prob - 1e-9);
    }

    #[test]
    fn mask_and_prefix_are_respected() {
        let (p, rows) = setup(Task::Melody);
        let p = peaked(p, 0);
        let c = Constraints::without(16, &[0]).with_prefix(vec![3, 4]);
        for pol in [SamplingPolicy::ancestral(), SamplingPolicy::best_of(5), SamplingPolicy::beam(3)] {
            let s = sample_sequence(&p, &rows, &pol, &c).unwrap();
            assert_eq!(&s.tokens[..2], &[3, 4]);
            assert!(s.tokens.iter().all(|&t| t != 0));
        }
    }

    #[test]
    fn seeded_draws_repeat() {
        let (p, rows) = setup(Task::Melody);
        let pol = SamplingPolicy::ancestral().with_seed(42);
        let a = sample_sequence(&p, &rows, &pol, &Constraints::default()).unwrap();
        assert_eq!(a, sample_sequence(&p, &rows, &pol, &Constraints::default()).unwrap());
    }

    #[test]
    fn invalid_policies() {
        let (p, rows) = setup(Task::Melody);
        for pol in [SamplingPolicy::best_of(0), SamplingPolicy::beam(0), SamplingPolicy { temperature: 0.0, ..SamplingPolicy::ancestral() }] {
            assert!(matches!(sample_sequence(&p, &rows, &pol, &Constraints::default()), Err(GenError::InvalidPolicy(_))));
        }
    }
}
