//! The three conditioned generators and single-phrase realization.

use log::warn;
use mf_core::analysis::{BasicMelody, MeasureRhythmDescriptor, PhraseFramework};
use mf_core::features::{basic_melody_encoder, melody_encoder, rhythm_encoder, Task};
use mf_core::rhythm::{legato_durations, patterns_to_onsets, phrase_patterns, RhythmPatternCode};
use mf_core::score::{NoteEvent, Phrase, Pitch, MEASURE};
use serde::{Deserialize, Serialize};

use crate::dtw::dtw_contour_similarity;
use crate::error::Result;
use crate::models::ModelSet;
use crate::sampling::{sample_sequence, Constraints, SamplingPolicy};
use crate::seed::derive_seed;

pub const CONTOUR_THRESHOLD: f64 = 0.7;
pub const MAX_ATTEMPTS: u32 = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicMelodyOutcome {
    pub melody: BasicMelody,
    pub log_prob: f64,
    pub attempts: u32,
    /// Similarity to the reference, when one was given.
    pub similarity: Option<f64>,
    /// Set when no attempt reached the threshold and the best one was kept.
    pub below_threshold: bool,
}

fn to_melody(tokens: &[u16]) -> BasicMelody {
    BasicMelody(tokens.iter().map(|&t| Pitch::new(t as u8).expect("token within pitch vocabulary")).collect())
}

/// Samples a basic melody for `pf`. With a reference, draws are repeated
/// until the contour similarity reaches the threshold.
pub fn generate_basic_melody(
    models: &ModelSet,
    pf: &PhraseFramework,
    policy: &SamplingPolicy,
    reference: Option<&BasicMelody>,
) -> Result<BasicMelodyOutcome> {
    let model = models.get(Task::BasicMelody)?;
    let rows = basic_melody_encoder(pf);
    let Some(reference) = reference else {
        let s = sample_sequence(model, &rows, policy, &Constraints::default())?;
        return Ok(BasicMelodyOutcome { melody: to_melody(&s.tokens), log_prob: s.log_prob, attempts: 1, similarity: None, below_threshold: false });
    };
    let mut best: Option<BasicMelodyOutcome> = None;
    for attempt in 0..MAX_ATTEMPTS {
        let p = policy.with_seed(derive_seed(policy.seed, &[attempt as u64]));
        let s = sample_sequence(model, &rows, &p, &Constraints::default())?;
        let melody = to_melody(&s.tokens);
        let sim = dtw_contour_similarity(&melody, reference)?;
        let outcome = BasicMelodyOutcome { melody, log_prob: s.log_prob, attempts: attempt + 1, similarity: Some(sim), below_threshold: false };
        if sim >= CONTOUR_THRESHOLD {
            return Ok(outcome);
        }
        if best.as_ref().is_none_or(|b| sim > b.similarity.unwrap_or(0.0)) {
            best = Some(outcome);
        }
    }
    let mut best = best.expect("at least one attempt");
    warn!("no basic melody reached contour similarity {CONTOUR_THRESHOLD} in {MAX_ATTEMPTS} attempts");
    best.attempts = MAX_ATTEMPTS;
    best.below_threshold = true;
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhythmOutcome {
    pub codes: Vec<RhythmPatternCode>,
    pub onsets: Vec<u32>,
    pub log_prob: f64,
}

/// Samples one pattern code per half measure and decodes the onsets.
pub fn generate_rhythm(
    models: &ModelSet,
    measures: u32,
    form: &[MeasureRhythmDescriptor],
    section_end: bool,
    policy: &SamplingPolicy,
    prefix: &[u16],
) -> Result<RhythmOutcome> {
    let model = models.get(Task::Rhythm)?;
    let rows = rhythm_encoder(measures, form, section_end);
    let s = sample_sequence(model, &rows, policy, &Constraints::default().with_prefix(prefix.to_vec()))?;
    let codes: Vec<RhythmPatternCode> = s.tokens.iter().map(|&t| RhythmPatternCode(t as u8)).collect();
    let onsets = patterns_to_onsets(&codes);
    Ok(RhythmOutcome { codes, onsets, log_prob: s.log_prob })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelodyOutcome {
    pub notes: Vec<NoteEvent>,
    pub log_prob: f64,
}

/// Samples one sounding pitch per onset; durations follow the legato rule.
pub fn generate_melody(models: &ModelSet, pf: &PhraseFramework, onsets: &[u32], policy: &SamplingPolicy, prefix: &[u16]) -> Result<MelodyOutcome> {
    let model = models.get(Task::Melody)?;
    if onsets.is_empty() {
        return Ok(MelodyOutcome { notes: Vec::new(), log_prob: 0.0 });
    }
    let rows = melody_encoder(pf, onsets);
    let c = Constraints::without(model.config.vocab_size, &[0]).with_prefix(prefix.to_vec());
    let s = sample_sequence(model, &rows, policy, &c)?;
    let durations = legato_durations(onsets, pf.len_sixteenths());
    let notes = s
        .tokens
        .iter()
        .zip(onsets.iter().zip(durations))
        .map(|(&t, (&o, d))| NoteEvent::new(Pitch::new(t as u8).expect("token within pitch vocabulary"), o, d))
        .collect();
    Ok(MelodyOutcome { notes, log_prob: s.log_prob })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policies {
    pub basic_melody: SamplingPolicy,
    pub rhythm: SamplingPolicy,
    pub melody: SamplingPolicy,
}

impl Default for Policies {
    fn default() -> Self {
        Policies { basic_melody: SamplingPolicy::ancestral(), rhythm: SamplingPolicy::beam(8), melody: SamplingPolicy::best_of(100) }
    }
}

/// Teacher-forced copy of the first `measures` measures of an earlier phrase.
#[derive(Debug, Clone, Copy)]
pub struct CopySource<'a> {
    pub phrase: &'a Phrase,
    pub measures: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizeStats {
    pub rhythm_log_prob: f64,
    pub melody_log_prob: f64,
    pub copied_measures: u32,
}

/// Generates rhythm then melody for `pf`, keeping its chords. Copied measures
/// keep the source notes' pitches, onsets and (clipped) durations.
pub fn realize_phrase(models: &ModelSet, pf: &PhraseFramework, policies: &Policies, seed: u64, copy: Option<CopySource>) -> Result<(Phrase, RealizeStats)> {
    let k = copy.map_or(0, |c| c.measures.min(c.phrase.measures).min(pf.measures));
    let boundary = k * MEASURE;
    let copied: Vec<NoteEvent> = copy.map_or(Vec::new(), |c| c.phrase.sounding().filter(|n| n.onset < boundary).copied().collect());
    let rhythm_prefix: Vec<u16> = copy.map_or(Vec::new(), |c| {
        phrase_patterns(&c.phrase.melody, c.phrase.measures).iter().take(2 * k as usize).map(|p| p.0 as u16).collect()
    });
    let rhythm = generate_rhythm(
        models,
        pf.measures,
        &pf.rhythm_form,
        pf.section_end,
        &policies.rhythm.with_seed(derive_seed(seed, &[1])),
        &rhythm_prefix,
    )?;
    let pitch_prefix: Vec<u16> = copied.iter().map(|n| n.pitch.value() as u16).collect();
    let melody = generate_melody(models, pf, &rhythm.onsets, &policies.melody.with_seed(derive_seed(seed, &[2])), &pitch_prefix)?;
    let mut notes = melody.notes;
    for (i, src) in copied.iter().enumerate() {
        let limit = notes.get(i + 1).map_or(pf.len_sixteenths(), |n| n.onset) - notes[i].onset;
        notes[i].duration = src.duration.min(limit);
    }
    let phrase = Phrase { label: pf.label.clone(), measures: pf.measures, melody: notes, chords: pf.chords.clone(), section_end: pf.section_end };
    Ok((phrase, RealizeStats { rhythm_log_prob: rhythm.log_prob, melody_log_prob: melody.log_prob, copied_measures: k }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mf_core::score::{validate_song, Mode, Section, SectionKind, Song};
    use mf_core::toy::toy_phrase;
    use mf_neural::{ModelConfig, ModelParams};

    fn untrained() -> ModelSet {
        let mut m = ModelSet::default();
        for task in Task::ALL {
            m.insert(ModelParams::init(&ModelConfig::tiny(task), 7));
        }
        m
    }

    fn quick() -> Policies {
        Policies { melody: SamplingPolicy::best_of(4), rhythm: SamplingPolicy::beam(2), ..Policies::default() }
    }

    #[test]
    fn missing_model() {
        let pf = PhraseFramework::analyze(&toy_phrase(0), SectionKind::Theme);
        let r = generate_basic_melody(&ModelSet::default(), &pf, &SamplingPolicy::ancestral(), None);
        assert!(matches!(r, Err(crate::GenError::ModelMissing(Task::BasicMelody))));
    }

    #[test]
    fn shapes_and_validity() {
        let models = untrained();
        let pf = PhraseFramework::analyze(&toy_phrase(3), SectionKind::Theme);
        let bm = generate_basic_melody(&models, &pf, &SamplingPolicy::ancestral(), None).unwrap();
        assert_eq!((bm.melody.len(), bm.attempts), (8, 1));
        let r = generate_rhythm(&models, 4, &pf.rhythm_form, false, &SamplingPolicy::beam(3), &[]).unwrap();
        assert_eq!(r.codes.len(), 8);
        let m = generate_melody(&models, &pf, &r.onsets, &SamplingPolicy::best_of(3), &[]).unwrap();
        assert_eq!(m.notes.len(), r.onsets.len());
        assert!(m.notes.iter().all(|n| (1..=15).contains(&n.pitch.value())));
        assert_eq!(m.notes.iter().map(|n| n.duration).sum::<u32>(), 64 - r.onsets.first().copied().unwrap_or(64));
        let (phrase, _) = realize_phrase(&models, &pf, &quick(), 1, None).unwrap();
        let song = Song::new("x", 0, Mode::Major, vec![Section { kind: SectionKind::Theme, phrases: vec![phrase] }]);
        assert!(validate_song(&song).is_empty());
    }

    #[test]
    fn rest_patterns_give_no_notes() {
        let models = untrained();
        let pf = PhraseFramework::analyze(&toy_phrase(0), SectionKind::Theme);
        let r = generate_rhythm(&models, 4, &pf.rhythm_form, false, &SamplingPolicy::beam(2), &[0; 8]).unwrap();
        assert!(r.onsets.is_empty());
        assert!(generate_melody(&models, &pf, &r.onsets, &SamplingPolicy::best_of(2), &[]).unwrap().notes.is_empty());
    }

    #[test]
    fn full_copy_reproduces_source() {
        let models = untrained();
        for i in 0..8 {
            let src = toy_phrase(i);
            let pf = PhraseFramework::analyze(&src, SectionKind::Theme);
            let (out, stats) = realize_phrase(&models, &pf, &quick(), 9, Some(CopySource { phrase: &src, measures: src.measures })).unwrap();
            let sounding: Vec<_> = src.sounding().copied().collect();
            assert_eq!(out.melody, sounding);
            assert_eq!(stats.copied_measures, 4);
        }
    }

    #[test]
    fn rejection_cap_sets_warning() {
        let mut models = untrained();
        // A model pinned to pitch 1 can never follow a contour at pitch 15.
        let mut p = models.basic_melody.take().unwrap();
        let r = p.layout.tensors[p.layout.conv2_b].range();
        p.data[r.clone()].fill(-80.0);
        p.data[r.start + 1] = 80.0;
        models.insert(p);
        let pf = PhraseFramework::analyze(&toy_phrase(0), SectionKind::Theme);
        let reference = BasicMelody(vec![Pitch::new(15).unwrap(); 8]);
        let out = generate_basic_melody(&models, &pf, &SamplingPolicy::ancestral(), Some(&reference)).unwrap();
        assert!(out.below_threshold);
        assert_eq!(out.attempts, MAX_ATTEMPTS);
        assert!(out.similarity.unwrap() < CONTOUR_THRESHOLD);
    }
}
