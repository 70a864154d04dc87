//! Per-step conditioning features for the basic-melody, rhythm and melody tasks.
//!
//! Features are emitted as small integer indices (one per categorical field)
//! plus a few normalized scalars; embedding happens inside the model.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::analysis::{MeasureRhythmDescriptor, PhraseFramework};
use crate::rhythm::{legato_durations, phrase_patterns};
use crate::score::{ChordDegree, Phrase, SectionKind, Song, MEASURE, SEGMENT};

pub const MAX_POSITION: usize = 63;
pub const MAX_CHORD_LENGTH: u32 = 64;
pub const MAX_DURATION: u32 = 32;
pub const MAX_SIMILAR_TO: u32 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    BasicMelody,
    Rhythm,
    Melody,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::BasicMelody, Task::Rhythm, Task::Melody];

    /// Size of the output vocabulary.
    pub fn vocab(self) -> usize {
        match self {
            Task::Rhythm => 256,
            _ => 16,
        }
    }

    pub fn decoder_projection(self) -> usize {
        match self {
            Task::Rhythm => 8,
            _ => 17,
        }
    }

    pub fn dropout(self) -> f64 {
        match self {
            Task::Rhythm => 0.1,
            _ => 0.2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::BasicMelody => "basic-melody",
            Task::Rhythm => "rhythm",
            Task::Melody => "melody",
        }
    }

    pub fn schema(self) -> InputSchema {
        let position = [MAX_POSITION + 1, 2];
        let (fields, scalars): (Vec<usize>, usize) = match self {
            Task::BasicMelody => {
                let chord = [8, MAX_CHORD_LENGTH as usize + 1];
                ([&position[..], &chord, &chord, &chord].concat(), 1)
            }
            Task::Rhythm => ([&[MAX_SIMILAR_TO as usize + 1, 17][..], &position, &[2]].concat(), 1),
            Task::Melody => ([&[MAX_DURATION as usize + 1, 8, 16][..], &position, &[16]].concat(), 1),
        };
        InputSchema { fields, scalars }
    }
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| format!("unknown task {s:?}"))
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Vocabulary sizes of the categorical input fields and the scalar count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSchema {
    pub fields: Vec<usize>,
    pub scalars: usize,
}

impl InputSchema {
    /// Width of the one-hot-plus-scalars input vector.
    pub fn dim(&self) -> usize {
        self.fields.iter().sum::<usize>() + self.scalars
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChordSlot {
    /// 0 when there is no chord (phrase boundary).
    pub degree: u8,
    pub length: u32,
}

impl ChordSlot {
    fn of(c: Option<&ChordDegree>) -> Self {
        c.map_or(ChordSlot::default(), |c| ChordSlot { degree: c.degree, length: c.duration })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChordContext {
    pub prev: ChordSlot,
    pub current: ChordSlot,
    pub next: ChordSlot,
}

impl ChordContext {
    pub fn at(chords: &[ChordDegree], t: u32) -> Self {
        let mut start = 0;
        for (i, c) in chords.iter().enumerate() {
            if t < start + c.duration {
                return ChordContext {
                    prev: ChordSlot::of(i.checked_sub(1).and_then(|j| chords.get(j))),
                    current: ChordSlot::of(Some(c)),
                    next: ChordSlot::of(chords.get(i + 1)),
                };
            }
            start += c.duration;
        }
        ChordContext::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionalFeatures {
    pub index: usize,
    /// `index / (steps - 1)`, 0 for single-step phrases.
    pub normalized: f64,
    pub section_end: bool,
}

impl PositionalFeatures {
    fn new(index: usize, steps: usize, section_end: bool) -> Self {
        let normalized = if steps > 1 { index as f64 / (steps - 1) as f64 } else { 0.0 };
        PositionalFeatures { index, normalized, section_end }
    }
}

/// Encoder-side features of one step, specific to a task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum EncoderFeatures {
    BasicMelody {
        position: PositionalFeatures,
        chords: ChordContext,
    },
    Rhythm {
        similar_to: u32,
        onsets: u8,
        position: PositionalFeatures,
        barline: bool,
    },
    Melody {
        duration: u32,
        chord: u8,
        basic_pitch: u8,
        position: PositionalFeatures,
        measure_offset: u8,
    },
}

impl EncoderFeatures {
    pub fn task(&self) -> Task {
        match self {
            EncoderFeatures::BasicMelody { .. } => Task::BasicMelody,
            EncoderFeatures::Rhythm { .. } => Task::Rhythm,
            EncoderFeatures::Melody { .. } => Task::Melody,
        }
    }

    /// Index of each categorical field, in schema order.
    pub fn indices(&self) -> Vec<usize> {
        let pos = |p: &PositionalFeatures| [p.index.min(MAX_POSITION), p.section_end as usize];
        let len = |l: u32| l.min(MAX_CHORD_LENGTH) as usize;
        match self {
            EncoderFeatures::BasicMelody { position, chords } => {
                let [pi, se] = pos(position);
                vec![
                    pi,
                    se,
                    chords.prev.degree as usize,
                    len(chords.prev.length),
                    chords.current.degree as usize,
                    len(chords.current.length),
                    chords.next.degree as usize,
                    len(chords.next.length),
                ]
            }
            EncoderFeatures::Rhythm { similar_to, onsets, position, barline } => {
                let [pi, se] = pos(position);
                vec![(*similar_to).min(MAX_SIMILAR_TO) as usize, *onsets as usize, pi, se, *barline as usize]
            }
            EncoderFeatures::Melody { duration, chord, basic_pitch, position, measure_offset } => {
                let [pi, se] = pos(position);
                vec![(*duration).min(MAX_DURATION) as usize, *chord as usize, *basic_pitch as usize, pi, se, *measure_offset as usize]
            }
        }
    }

    pub fn scalars(&self) -> Vec<f64> {
        match self {
            EncoderFeatures::BasicMelody { position, .. }
            | EncoderFeatures::Rhythm { position, .. }
            | EncoderFeatures::Melody { position, .. } => vec![position.normalized],
        }
    }
}

/// One step of a task sequence: encoder features plus the previous output
/// token fed to the decoder (`None` at the start of the sequence).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub encoder: EncoderFeatures,
    pub prev_token: Option<u16>,
}

impl FeatureRow {
    pub fn task(&self) -> Task {
        self.encoder.task()
    }
}

/// A teacher-forced training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSequence {
    pub task: Task,
    pub rows: Vec<EncoderFeatures>,
    pub targets: Vec<u16>,
}

impl TaskSequence {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Rows with the previous target as decoder input.
    pub fn feature_rows(&self) -> Vec<FeatureRow> {
        teacher_forced(&self.rows, &self.targets)
    }
}

fn teacher_forced(rows: &[EncoderFeatures], targets: &[u16]) -> Vec<FeatureRow> {
    rows.iter()
        .enumerate()
        .map(|(i, &encoder)| FeatureRow { encoder, prev_token: i.checked_sub(1).map(|j| targets[j]) })
        .collect()
}

/// Encoder rows for basic-melody generation, one per half-note step.
pub fn basic_melody_encoder(pf: &PhraseFramework) -> Vec<EncoderFeatures> {
    let steps = 2 * pf.measures as usize;
    (0..steps)
        .map(|i| EncoderFeatures::BasicMelody {
            position: PositionalFeatures::new(i, steps, pf.section_end),
            chords: ChordContext::at(&pf.chords, i as u32 * SEGMENT),
        })
        .collect()
}

pub fn basic_melody_features(pf: &PhraseFramework) -> Vec<FeatureRow> {
    teacher_forced(&basic_melody_encoder(pf), &basic_melody_targets(pf))
}

pub fn basic_melody_targets(pf: &PhraseFramework) -> Vec<u16> {
    pf.basic_melody.0.iter().map(|p| p.value() as u16).collect()
}

/// Encoder rows for rhythm generation, one per 2-beat pattern slot.
pub fn rhythm_encoder(measures: u32, form: &[MeasureRhythmDescriptor], section_end: bool) -> Vec<EncoderFeatures> {
    let steps = 2 * measures as usize;
    (0..steps)
        .map(|i| {
            let d = form[i / 2];
            EncoderFeatures::Rhythm {
                similar_to: d.similar_to,
                onsets: d.complexity.onsets(),
                position: PositionalFeatures::new(i, steps, section_end),
                barline: i % 2 == 0,
            }
        })
        .collect()
}

pub fn rhythm_features(pf: &PhraseFramework, patterns: &[u16]) -> Vec<FeatureRow> {
    teacher_forced(&rhythm_encoder(pf.measures, &pf.rhythm_form, pf.section_end), patterns)
}

/// Encoder rows for realized-melody generation, one per onset.
///
/// Durations follow the legato rule (each onset lasts until the next one),
/// so the same features can be computed from a generated rhythm.
pub fn melody_encoder(pf: &PhraseFramework, onsets: &[u32]) -> Vec<EncoderFeatures> {
    let durations = legato_durations(onsets, pf.len_sixteenths());
    let steps = onsets.len();
    onsets
        .iter()
        .zip(durations)
        .enumerate()
        .map(|(i, (&t, d))| {
            if d > MAX_DURATION {
                warn!("clamping duration {d} to {MAX_DURATION}");
            }
            let segment = (t / SEGMENT) as usize;
            EncoderFeatures::Melody {
                duration: d.min(MAX_DURATION),
                chord: ChordContext::at(&pf.chords, t).current.degree,
                basic_pitch: pf.basic_melody.0.get(segment).map_or(0, |p| p.value()),
                position: PositionalFeatures::new(i, steps, pf.section_end),
                measure_offset: (t % MEASURE) as u8,
            }
        })
        .collect()
}

pub fn melody_features(pf: &PhraseFramework, onsets: &[u32], pitches: &[u16]) -> Vec<FeatureRow> {
    teacher_forced(&melody_encoder(pf, onsets), pitches)
}

/// Training example for `task` from an analyzed phrase.
pub fn phrase_sequence(task: Task, phrase: &Phrase, kind: SectionKind) -> TaskSequence {
    let pf = PhraseFramework::analyze(phrase, kind);
    let (rows, targets) = match task {
        Task::BasicMelody => (basic_melody_encoder(&pf), basic_melody_targets(&pf)),
        Task::Rhythm => (
            rhythm_encoder(pf.measures, &pf.rhythm_form, pf.section_end),
            phrase_patterns(&phrase.melody, phrase.measures).iter().map(|c| c.0 as u16).collect(),
        ),
        Task::Melody => {
            let notes: Vec<_> = phrase.sounding().collect();
            let onsets: Vec<u32> = notes.iter().map(|n| n.onset).collect();
            (melody_encoder(&pf, &onsets), notes.iter().map(|n| n.pitch.value() as u16).collect())
        }
    };
    TaskSequence { task, rows, targets }
}

/// Training examples for every phrase of a song; empty phrases are skipped.
pub fn song_sequences(task: Task, song: &Song) -> Vec<TaskSequence> {
    song.sections
        .iter()
        .flat_map(|s| s.phrases.iter().map(move |p| phrase_sequence(task, p, s.kind)))
        .filter(|s| !s.is_empty())
        .collect()
}
