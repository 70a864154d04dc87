//! Whole-song generation from a music framework.

use log::warn;
use mf_core::analysis::{extract_basic_melody, extract_basic_rhythm_form, BasicMelody, MeasureRhythmDescriptor, MusicFramework, PhraseFramework};
use mf_core::score::{Mode, Phrase, Section, Song};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dtw::dtw_contour_similarity;
use crate::error::{GenError, Result};
use crate::generate::{generate_basic_melody, realize_phrase, CopySource, Policies, RealizeStats, CONTOUR_THRESHOLD};
use crate::models::ModelSet;
use crate::seed::{derive_seed, rng};

/// Upper bound on whole-phrase retries when the realized contour misses.
pub const REALIZE_ATTEMPTS: u32 = 20;

/// How a phrase repeating an earlier letter relates to that phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepetitionStrategy {
    /// Copy the opening measures, then continue autoregressively.
    CopyPrefix,
    /// New basic melody with a similar contour.
    SimilarContour,
    /// Reuse the earlier phrase's basic rhythm form.
    ReuseRhythmForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasicMelodySource {
    #[default]
    Framework,
    Generate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseOverride {
    pub phrase: usize,
    #[serde(default)]
    pub basic_melody: Option<BasicMelodySource>,
    #[serde(default)]
    pub rhythm_form: Option<Vec<MeasureRhythmDescriptor>>,
    #[serde(default)]
    pub strategy: Option<RepetitionStrategy>,
}

fn default_copy_measures() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub framework: MusicFramework,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub overrides: Vec<PhraseOverride>,
    #[serde(default)]
    pub policies: Policies,
    #[serde(default = "default_copy_measures")]
    pub copy_measures: u32,
}

impl GenerationRequest {
    pub fn new(framework: MusicFramework, seed: u64) -> Self {
        GenerationRequest { framework, seed, overrides: Vec::new(), policies: Policies::default(), copy_measures: default_copy_measures() }
    }

    pub fn validate(&self) -> Result<()> {
        self.framework.validate()?;
        for o in &self.overrides {
            let Some(pf) = self.framework.phrases.get(o.phrase) else {
                return Err(GenError::InvalidRequest(format!("override for missing phrase {}", o.phrase)));
            };
            if let Some(form) = &o.rhythm_form {
                let check = PhraseFramework { rhythm_form: form.clone(), ..pf.clone() };
                check.validate()?;
            }
        }
        for p in [&self.policies.basic_melody, &self.policies.rhythm, &self.policies.melody] {
            p.validate()?;
        }
        Ok(())
    }

    fn override_for(&self, i: usize) -> Option<&PhraseOverride> {
        self.overrides.iter().rev().find(|o| o.phrase == i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseProvenance {
    pub index: usize,
    pub label: String,
    pub seed: u64,
    pub strategy: Option<RepetitionStrategy>,
    /// Earlier phrase the repetition strategy refers to.
    pub source: Option<usize>,
    pub basic_melody: BasicMelodySource,
    pub basic_melody_attempts: u32,
    pub realize_attempts: u32,
    pub contour_similarity: Option<f64>,
    pub below_threshold: bool,
    pub copied_measures: u32,
    pub rhythm_log_prob: f64,
    pub melody_log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub seed: u64,
    pub phrases: Vec<PhraseProvenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSong {
    pub song: Song,
    pub report: GenerationReport,
}

struct Realized {
    phrase: Phrase,
    stats: RealizeStats,
    basic_melody_attempts: u32,
    realize_attempts: u32,
    similarity: Option<f64>,
    below_threshold: bool,
}

fn plain(phrase: Phrase, stats: RealizeStats) -> Realized {
    Realized { phrase, stats, basic_melody_attempts: 0, realize_attempts: 1, similarity: None, below_threshold: false }
}

/// New basic melody near `reference`, realized and re-analyzed until the
/// realized contour also clears the threshold.
fn similar_contour(models: &ModelSet, pf: &PhraseFramework, policies: &Policies, seed: u64, reference: &BasicMelody) -> Result<Realized> {
    let mut best: Option<Realized> = None;
    let mut drawn = 0;
    for attempt in 0..REALIZE_ATTEMPTS {
        let s = derive_seed(seed, &[3, attempt as u64]);
        let bm = generate_basic_melody(models, pf, &policies.basic_melody.with_seed(derive_seed(s, &[0])), Some(reference))?;
        drawn += bm.attempts;
        let target = PhraseFramework { basic_melody: bm.melody, ..pf.clone() };
        let (phrase, stats) = realize_phrase(models, &target, policies, s, None)?;
        let sim = dtw_contour_similarity(&extract_basic_melody(&phrase), reference)?;
        let r = Realized { phrase, stats, basic_melody_attempts: drawn, realize_attempts: attempt + 1, similarity: Some(sim), below_threshold: false };
        if sim >= CONTOUR_THRESHOLD {
            return Ok(r);
        }
        if best.as_ref().is_none_or(|b| sim > b.similarity.unwrap_or(0.0)) {
            best = Some(r);
        }
    }
    warn!("realized contour stayed below {CONTOUR_THRESHOLD} after {REALIZE_ATTEMPTS} attempts");
    let mut best = best.expect("at least one attempt");
    best.basic_melody_attempts = drawn;
    best.realize_attempts = REALIZE_ATTEMPTS;
    best.below_threshold = true;
    Ok(best)
}

/// Generates every phrase of the framework in order. Chords come from the
/// framework; each phrase draws from its own seed derived from the request
/// seed and its index.
pub fn assemble_song(request: &GenerationRequest, models: &ModelSet) -> Result<GeneratedSong> {
    request.validate()?;
    let fw = &request.framework;
    let mut generated: Vec<Phrase> = Vec::with_capacity(fw.phrases.len());
    let mut provenance = Vec::with_capacity(fw.phrases.len());
    for (i, original) in fw.phrases.iter().enumerate() {
        let seed = derive_seed(request.seed, &[i as u64]);
        let mut choice = rng(seed, 7);
        let ov = request.override_for(i);
        let mut pf = original.clone();
        if let Some(form) = ov.and_then(|o| o.rhythm_form.clone()) {
            pf.rhythm_form = form;
        }
        let source = fw.previous_occurrence(i);
        let strategy = source.map(|_| {
            ov.and_then(|o| o.strategy).unwrap_or_else(|| {
                if choice.random_bool(0.5) {
                    RepetitionStrategy::CopyPrefix
                } else {
                    RepetitionStrategy::SimilarContour
                }
            })
        });
        let bm_source = ov.and_then(|o| o.basic_melody).unwrap_or_default();
        let mut bm_attempts = 0;
        if bm_source == BasicMelodySource::Generate && strategy != Some(RepetitionStrategy::SimilarContour) {
            let bm = generate_basic_melody(models, &pf, &request.policies.basic_melody.with_seed(derive_seed(seed, &[0])), None)?;
            pf.basic_melody = bm.melody;
            bm_attempts = bm.attempts;
        }
        let realized = match (strategy, source) {
            (Some(RepetitionStrategy::CopyPrefix), Some(j)) => {
                let copy = CopySource { phrase: &generated[j], measures: request.copy_measures };
                let (phrase, stats) = realize_phrase(models, &pf, &request.policies, seed, Some(copy))?;
                plain(phrase, stats)
            }
            (Some(RepetitionStrategy::SimilarContour), Some(j)) => {
                let reference = extract_basic_melody(&generated[j]);
                similar_contour(models, &pf, &request.policies, seed, &reference)?
            }
            (Some(RepetitionStrategy::ReuseRhythmForm), Some(j)) => {
                let earlier = extract_basic_rhythm_form(&generated[j]);
                for (d, e) in pf.rhythm_form.iter_mut().zip(earlier) {
                    *d = e;
                }
                let (phrase, stats) = realize_phrase(models, &pf, &request.policies, seed, None)?;
                plain(phrase, stats)
            }
            _ => {
                let (phrase, stats) = realize_phrase(models, &pf, &request.policies, seed, None)?;
                plain(phrase, stats)
            }
        };
        provenance.push(PhraseProvenance {
            index: i,
            label: pf.label.clone(),
            seed,
            strategy,
            source,
            basic_melody: if strategy == Some(RepetitionStrategy::SimilarContour) { BasicMelodySource::Generate } else { bm_source },
            basic_melody_attempts: bm_attempts.max(realized.basic_melody_attempts),
            realize_attempts: realized.realize_attempts,
            contour_similarity: realized.similarity,
            below_threshold: realized.below_threshold,
            copied_measures: realized.stats.copied_measures,
            rhythm_log_prob: realized.stats.rhythm_log_prob,
            melody_log_prob: realized.stats.melody_log_prob,
        });
        generated.push(realized.phrase);
    }
    let song = Song::new(format!("{}-{}", fw.id, request.seed), 0, Mode::Major, group_sections(fw, generated));
    Ok(GeneratedSong { song, report: GenerationReport { seed: request.seed, phrases: provenance } })
}

fn group_sections(fw: &MusicFramework, phrases: Vec<Phrase>) -> Vec<Section> {
    let mut sections: Vec<Section> = Vec::new();
    let mut open = false;
    for (pf, phrase) in fw.phrases.iter().zip(phrases) {
        if !open {
            sections.push(Section { kind: pf.kind, phrases: Vec::new() });
        }
        sections.last_mut().expect("section opened").phrases.push(phrase);
        open = !pf.section_end;
    }
    sections
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SamplingPolicy;
    use mf_core::analysis::analyze_framework;
    use mf_core::features::Task;
    use mf_core::score::{validate_song, SectionKind};
    use mf_core::toy::{toy_corpus, toy_phrase};
    use mf_neural::{ModelConfig, ModelParams};

    fn untrained() -> ModelSet {
        let mut m = ModelSet::default();
        for task in Task::ALL {
            m.insert(ModelParams::init(&ModelConfig::tiny(task), 7));
        }
        m
    }

    fn quick(fw: MusicFramework, seed: u64) -> GenerationRequest {
        let mut r = GenerationRequest::new(fw, seed);
        r.policies = Policies { melody: SamplingPolicy::best_of(3), rhythm: SamplingPolicy::beam(2), ..Policies::default() };
        r
    }

    fn aa() -> MusicFramework {
        let pf = PhraseFramework::analyze(&toy_phrase(1), SectionKind::Theme);
        MusicFramework::new("aa", vec![pf.clone(), PhraseFramework { section_end: true, ..pf }])
    }

    #[test]
    fn song_keeps_framework_shape_and_chords() {
        let fw = analyze_framework(&toy_corpus()[0]).unwrap();
        let out = assemble_song(&quick(fw.clone(), 1), &untrained()).unwrap();
        assert!(validate_song(&out.song).is_empty());
        assert_eq!(out.song.sections.len(), 2);
        for (p, pf) in out.song.phrases().zip(&fw.phrases) {
            assert_eq!(p.chords, pf.chords);
            assert_eq!(p.measures, pf.measures);
        }
        assert!(out.report.phrases.iter().all(|p| p.strategy.is_none() && p.source.is_none()));
        assert_eq!(analyze_framework(&out.song).unwrap().structure, fw.structure);
    }

    #[test]
    fn full_copy_repeats_phrase() {
        let mut r = quick(aa(), 4);
        r.copy_measures = 4;
        r.overrides.push(PhraseOverride { phrase: 1, basic_melody: None, rhythm_form: None, strategy: Some(RepetitionStrategy::CopyPrefix) });
        let out = assemble_song(&r, &untrained()).unwrap();
        let p: Vec<_> = out.song.phrases().collect();
        assert_eq!(p[0].melody, p[1].melody);
        assert_eq!(out.report.phrases[1].source, Some(0));
        assert_eq!(out.report.phrases[1].copied_measures, 4);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let fw = analyze_framework(&toy_corpus()[1]).unwrap();
        let models = untrained();
        let a = assemble_song(&quick(fw.clone(), 11), &models).unwrap();
        assert_eq!(a, assemble_song(&quick(fw.clone(), 11), &models).unwrap());
        assert_ne!(a.song, assemble_song(&quick(fw, 12), &models).unwrap().song);
    }

    #[test]
    fn default_strategy_is_copy_or_contour() {
        let models = untrained();
        let picks: Vec<_> = (0..12).map(|s| assemble_song(&quick(aa(), s), &models).unwrap().report.phrases[1].strategy.unwrap()).collect();
        assert!(picks.contains(&RepetitionStrategy::CopyPrefix));
        assert!(picks.contains(&RepetitionStrategy::SimilarContour));
        assert!(!picks.contains(&RepetitionStrategy::ReuseRhythmForm));
    }

    #[test]
    fn reuse_rhythm_form() {
        let mut r = quick(aa(), 2);
        r.overrides.push(PhraseOverride { phrase: 1, basic_melody: None, rhythm_form: None, strategy: Some(RepetitionStrategy::ReuseRhythmForm) });
        let out = assemble_song(&r, &untrained()).unwrap();
        assert_eq!(out.report.phrases[1].strategy, Some(RepetitionStrategy::ReuseRhythmForm));
        assert!(validate_song(&out.song).is_empty());
    }

    #[test]
    fn bad_requests() {
        let mut r = quick(aa(), 0);
        r.overrides.push(PhraseOverride { phrase: 5, basic_melody: None, rhythm_form: None, strategy: None });
        assert!(matches!(assemble_song(&r, &untrained()), Err(GenError::InvalidRequest(_))));
        let mut fw = aa();
        fw.structure = "AB".into();
        assert!(matches!(assemble_song(&quick(fw, 0), &untrained()), Err(GenError::Core(_))));
        assert!(matches!(assemble_song(&quick(aa(), 0), &ModelSet::default()), Err(GenError::ModelMissing(_))));
    }
}
