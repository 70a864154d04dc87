//! Symbolic song model.
//!
//! Pitches are diatonic scale degrees of C major spanning C3..C5 (`1..=15`,
//! `0` is a rest), time is measured in sixteenth notes and chords are
//! scale-degree triads `1..=7`. Songs are always 4/4.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MEASURE: u32 = 16;
/// Length of a 2-beat (half-note) segment in sixteenths.
pub const SEGMENT: u32 = 8;

/// Semitone offsets of the seven degrees of the major scale.
pub const MAJOR_STEPS: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
/// MIDI key of C3, i.e. `Pitch(1)`.
pub const C3_MIDI: i32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Pitch(u8);

impl Pitch {
    pub const REST: Pitch = Pitch(0);
    pub const MAX: u8 = 15;

    pub fn new(value: u8) -> Result<Self> {
        if value <= Self::MAX {
            Ok(Pitch(value))
        } else {
            Err(Error::InvalidPitch(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_rest(self) -> bool {
        self.0 == 0
    }

    /// Scale degree 1 in any octave.
    pub fn is_tonic(self) -> bool {
        matches!(self.0, 1 | 8 | 15)
    }

    /// MIDI key number in C major, `None` for rests.
    pub fn to_midi(self) -> Option<u8> {
        if self.is_rest() {
            return None;
        }
        let idx = self.0 as i32 - 1;
        Some((C3_MIDI + 12 * (idx / 7) + MAJOR_STEPS[(idx % 7) as usize]) as u8)
    }
}

impl TryFrom<u8> for Pitch {
    type Error = Error;
    fn try_from(value: u8) -> Result<Self> {
        Pitch::new(value)
    }
}

impl From<Pitch> for u8 {
    fn from(p: Pitch) -> u8 {
        p.0
    }
}

impl fmt::Display for Pitch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A melody note; `onset` is relative to the start of its phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(Pitch, u32, u32)", into = "(Pitch, u32, u32)")]
pub struct NoteEvent {
    pub pitch: Pitch,
    pub onset: u32,
    pub duration: u32,
}

impl NoteEvent {
    pub fn new(pitch: Pitch, onset: u32, duration: u32) -> Self {
        NoteEvent { pitch, onset, duration }
    }

    pub fn end(&self) -> u32 {
        self.onset + self.duration
    }
}

impl From<(Pitch, u32, u32)> for NoteEvent {
    fn from((pitch, onset, duration): (Pitch, u32, u32)) -> Self {
        NoteEvent { pitch, onset, duration }
    }
}

impl From<NoteEvent> for (Pitch, u32, u32) {
    fn from(n: NoteEvent) -> Self {
        (n.pitch, n.onset, n.duration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(u8, u32)", into = "(u8, u32)")]
pub struct ChordDegree {
    pub degree: u8,
    pub duration: u32,
}

impl ChordDegree {
    pub fn new(degree: u8, duration: u32) -> Result<Self> {
        if (1..=7).contains(&degree) {
            Ok(ChordDegree { degree, duration })
        } else {
            Err(Error::InvalidChordDegree(degree))
        }
    }

    /// Root-position triad as scale-degree pitches, rooted in the lower octave.
    pub fn triad(&self) -> [Pitch; 3] {
        let root = self.degree.clamp(1, 7);
        [Pitch(root), Pitch(root + 2), Pitch(root + 4)]
    }
}

impl From<(u8, u32)> for ChordDegree {
    fn from((degree, duration): (u8, u32)) -> Self {
        ChordDegree { degree, duration }
    }
}

impl From<ChordDegree> for (u8, u32) {
    fn from(c: ChordDegree) -> Self {
        (c.degree, c.duration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionKind {
    Intro,
    Theme,
    Bridge,
    Outro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Major,
    Minor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrase {
    pub label: String,
    pub measures: u32,
    pub melody: Vec<NoteEvent>,
    pub chords: Vec<ChordDegree>,
    #[serde(default)]
    pub section_end: bool,
}

impl Phrase {
    pub fn len_sixteenths(&self) -> u32 {
        self.measures * MEASURE
    }

    pub fn segments(&self) -> usize {
        (self.measures * 2) as usize
    }

    /// Chord sounding at sixteenth `t`, with its index in the chord track and start time.
    pub fn chord_at(&self, t: u32) -> Option<(usize, u32, ChordDegree)> {
        let mut start = 0;
        for (i, c) in self.chords.iter().enumerate() {
            if t < start + c.duration {
                return Some((i, start, *c));
            }
            start += c.duration;
        }
        None
    }

    /// Non-rest notes only.
    pub fn sounding(&self) -> impl Iterator<Item = &NoteEvent> {
        self.melody.iter().filter(|n| !n.pitch.is_rest())
    }

    /// Onset times of non-rest notes.
    pub fn onsets(&self) -> Vec<u32> {
        self.sounding().map(|n| n.onset).collect()
    }

    /// Last non-rest pitch of the phrase.
    pub fn final_pitch(&self) -> Option<Pitch> {
        self.sounding().last().map(|n| n.pitch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub kind: SectionKind,
    pub phrases: Vec<Phrase>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Song {
    pub id: String,
    /// Pitch class of the original tonic before transposition.
    #[serde(default)]
    pub key: u8,
    #[serde(default)]
    pub mode: Mode,
    pub sections: Vec<Section>,
}

impl Song {
    /// Builds a song and sets each phrase's `section_end` flag from the section layout.
    pub fn new(id: impl Into<String>, key: u8, mode: Mode, mut sections: Vec<Section>) -> Self {
        for s in &mut sections {
            let n = s.phrases.len();
            for (i, p) in s.phrases.iter_mut().enumerate() {
                p.section_end = i + 1 == n;
            }
        }
        Song { id: id.into(), key, mode, sections }
    }

    pub fn phrases(&self) -> impl Iterator<Item = &Phrase> {
        self.sections.iter().flat_map(|s| s.phrases.iter())
    }

    pub fn phrase_count(&self) -> usize {
        self.sections.iter().map(|s| s.phrases.len()).sum()
    }

    pub fn measures(&self) -> u32 {
        self.phrases().map(|p| p.measures).sum()
    }

    /// Melody and chords as a single track with song-absolute onsets.
    pub fn flatten(&self) -> (Vec<NoteEvent>, Vec<ChordDegree>) {
        let mut melody = Vec::new();
        let mut chords = Vec::new();
        let mut offset = 0;
        for p in self.phrases() {
            melody.extend(p.melody.iter().map(|n| NoteEvent::new(n.pitch, n.onset + offset, n.duration)));
            chords.extend(p.chords.iter().copied());
            offset += p.len_sixteenths();
        }
        (melody, merge_chords(chords))
    }

    /// True when the song is a single long phrase that still needs structure analysis.
    pub fn needs_segmentation(&self) -> bool {
        self.phrase_count() == 1 && self.measures() > 16
    }

    /// Re-cuts the song into the given phrases, keeping melody and chords.
    ///
    /// Notes crossing a phrase boundary are truncated at the boundary and chords
    /// crossing one are split.
    pub fn resegment(&self, layout: &[SectionLayout]) -> Result<Song> {
        let total: u32 = layout.iter().flat_map(|s| s.phrases.iter()).map(|p| p.1).sum();
        if total != self.measures() {
            return Err(Error::AnnotationMismatch(format!(
                "layout covers {total} measures, song has {}",
                self.measures()
            )));
        }
        let (melody, chords) = self.flatten();
        let mut sections = Vec::with_capacity(layout.len());
        let mut start = 0;
        for s in layout {
            let mut phrases = Vec::with_capacity(s.phrases.len());
            for (label, measures) in &s.phrases {
                let len = measures * MEASURE;
                phrases.push(Phrase {
                    label: label.clone(),
                    measures: *measures,
                    melody: slice_melody(&melody, start, start + len),
                    chords: slice_chords(&chords, start, start + len),
                    section_end: false,
                });
                start += len;
            }
            sections.push(Section { kind: s.kind, phrases });
        }
        Ok(Song::new(self.id.clone(), self.key, self.mode, sections))
    }

    /// Renders the song as a chromatic song in C major, the inverse of transposition.
    pub fn to_raw(&self) -> RawSong {
        let (melody, chords) = self.flatten();
        let notes = melody
            .iter()
            .filter_map(|n| n.pitch.to_midi().map(|key| RawNote { key, onset: n.onset, duration: n.duration }))
            .collect();
        let mut t = 0;
        let raw_chords = chords
            .iter()
            .map(|c| {
                let rc = RawChord {
                    root: MAJOR_STEPS[(c.degree - 1) as usize] as u8,
                    quality: ChordQuality::diatonic(c.degree),
                    onset: t,
                    duration: c.duration,
                };
                t += c.duration;
                rc
            })
            .collect();
        RawSong {
            id: self.id.clone(),
            tonic: 0,
            mode: self.mode,
            pickup: 0,
            length: Some(self.measures() * MEASURE),
            notes,
            chords: raw_chords,
        }
    }
}

/// One section of a phrase layout: its kind and `(label, measures)` per phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionLayout {
    pub kind: SectionKind,
    pub phrases: Vec<(String, u32)>,
}

fn slice_melody(melody: &[NoteEvent], start: u32, end: u32) -> Vec<NoteEvent> {
    melody
        .iter()
        .filter(|n| n.onset >= start && n.onset < end)
        .map(|n| NoteEvent::new(n.pitch, n.onset - start, n.end().min(end) - n.onset))
        .collect()
}

fn slice_chords(chords: &[ChordDegree], start: u32, end: u32) -> Vec<ChordDegree> {
    let mut out = Vec::new();
    let mut t = 0;
    for c in chords {
        let (a, b) = (t.max(start), (t + c.duration).min(end));
        if a < b {
            out.push(ChordDegree { degree: c.degree, duration: b - a });
        }
        t += c.duration;
    }
    out
}

/// Merges adjacent chords with the same degree.
pub fn merge_chords(chords: impl IntoIterator<Item = ChordDegree>) -> Vec<ChordDegree> {
    let mut out: Vec<ChordDegree> = Vec::new();
    for c in chords {
        match out.last_mut() {
            Some(last) if last.degree == c.degree => last.duration += c.duration,
            _ => out.push(c),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Chromatic input and transposition

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChordQuality {
    Major,
    Minor,
    Diminished,
    Augmented,
    Sus2,
    Sus4,
    Dominant7,
    Major7,
    Minor7,
    HalfDiminished7,
    Diminished7,
}

impl ChordQuality {
    /// Quality of the diatonic triad on a major-scale degree.
    pub fn diatonic(degree: u8) -> ChordQuality {
        match degree {
            2 | 3 | 6 => ChordQuality::Minor,
            7 => ChordQuality::Diminished,
            _ => ChordQuality::Major,
        }
    }

    /// Intervals above the root in semitones.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            ChordQuality::Major => &[0, 4, 7],
            ChordQuality::Minor => &[0, 3, 7],
            ChordQuality::Diminished => &[0, 3, 6],
            ChordQuality::Augmented => &[0, 4, 8],
            ChordQuality::Sus2 => &[0, 2, 7],
            ChordQuality::Sus4 => &[0, 5, 7],
            ChordQuality::Dominant7 => &[0, 4, 7, 10],
            ChordQuality::Major7 => &[0, 4, 7, 11],
            ChordQuality::Minor7 => &[0, 3, 7, 10],
            ChordQuality::HalfDiminished7 => &[0, 3, 6, 10],
            ChordQuality::Diminished7 => &[0, 3, 6, 9],
        }
    }

    pub const ALL: [ChordQuality; 11] = [
        ChordQuality::Major,
        ChordQuality::Minor,
        ChordQuality::Diminished,
        ChordQuality::Augmented,
        ChordQuality::Sus2,
        ChordQuality::Sus4,
        ChordQuality::Dominant7,
        ChordQuality::Major7,
        ChordQuality::Minor7,
        ChordQuality::HalfDiminished7,
        ChordQuality::Diminished7,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawNote {
    /// MIDI key number.
    pub key: u8,
    pub onset: u32,
    pub duration: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawChord {
    /// Root pitch class, 0 = C.
    pub root: u8,
    pub quality: ChordQuality,
    pub onset: u32,
    pub duration: u32,
}

/// A quantized chromatic song as read from MIDI, before transposition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSong {
    pub id: String,
    /// Pitch class of the tonic.
    pub tonic: u8,
    pub mode: Mode,
    /// Length of the anacrusis in sixteenths, 0 when the song starts on a barline.
    #[serde(default)]
    pub pickup: u32,
    /// Total length in sixteenths, if known.
    #[serde(default)]
    pub length: Option<u32>,
    pub notes: Vec<RawNote>,
    pub chords: Vec<RawChord>,
}

/// Maps a semitone offset from C3 to a diatonic index (0 = C3), snapping
/// chromatic notes down to the diatonic neighbour.
fn diatonic_index(semis: i32) -> i32 {
    let octave = semis.div_euclid(12);
    let pc = semis.rem_euclid(12);
    let step = MAJOR_STEPS.iter().rposition(|&s| s <= pc).unwrap() as i32;
    octave * 7 + step
}

/// Scale degree 1..=7 of a root pitch class relative to C (tie snaps down).
pub fn degree_of_pitch_class(pc: u8) -> u8 {
    (diatonic_index(pc as i32 % 12) + 1) as u8
}

/// Maps a chromatic MIDI key (already in C) onto `Pitch` 1..=15, folding by
/// octaves into range. When more than one octave fits, the one closest to
/// `previous` wins, falling back to the one closest to the unfolded pitch.
pub fn fold_pitch(midi: i32, previous: Option<Pitch>) -> Result<Pitch> {
    if !(0..=127).contains(&midi) {
        return Err(Error::PitchOutOfRange(midi));
    }
    let value = diatonic_index(midi - C3_MIDI) + 1;
    if (1..=15).contains(&value) {
        return Ok(Pitch(value as u8));
    }
    let base = (value - 1).rem_euclid(7) + 1;
    let candidates = [base, base + 7, base + 14].into_iter().filter(|v| *v <= 15);
    let best = candidates
        .min_by_key(|&c| {
            let to_prev = previous.map(|p| (c - p.0 as i32).abs()).unwrap_or(0);
            (to_prev, (c - value).abs())
        })
        .ok_or(Error::PitchOutOfRange(midi))?;
    Ok(Pitch(best as u8))
}

/// Transposes a major-mode chromatic song to C major scale degrees.
///
/// The result is a single unsegmented phrase labelled `A`; use
/// [`Song::resegment`] or structure analysis to split it into phrases.
pub fn transpose_to_c(raw: &RawSong) -> Result<Song> {
    if raw.mode != Mode::Major {
        return Err(Error::NonMajorMode);
    }
    let shift = if raw.pickup % MEASURE == 0 { 0 } else { MEASURE - raw.pickup % MEASURE };
    let tonic = (raw.tonic % 12) as i32;

    let mut notes: Vec<RawNote> = raw.notes.iter().copied().filter(|n| n.duration > 0).collect();
    notes.sort_by_key(|n| (n.onset, std::cmp::Reverse(n.key)));
    notes.dedup_by_key(|n| n.onset);

    let mut melody = Vec::with_capacity(notes.len());
    let mut previous = None;
    for (i, n) in notes.iter().enumerate() {
        let pitch = fold_pitch(n.key as i32 - tonic, previous)?;
        previous = Some(pitch);
        let mut duration = n.duration;
        if let Some(next) = notes.get(i + 1) {
            duration = duration.min(next.onset - n.onset);
        }
        melody.push(NoteEvent::new(pitch, n.onset + shift, duration));
    }

    let content_end = raw
        .notes
        .iter()
        .map(|n| n.onset + n.duration)
        .chain(raw.chords.iter().map(|c| c.onset + c.duration))
        .chain(raw.length)
        .max()
        .unwrap_or(0)
        + shift;
    let measures = content_end.div_ceil(MEASURE).max(1);
    let total = measures * MEASURE;

    let chords = tile_chords(&raw.chords, tonic as u8, shift, total);
    let phrase = Phrase { label: "A".into(), measures, melody, chords, section_end: true };
    Ok(Song::new(
        raw.id.clone(),
        raw.tonic % 12,
        Mode::Major,
        vec![Section { kind: SectionKind::Theme, phrases: vec![phrase] }],
    ))
}

/// Builds a gap-free chord track of scale degrees covering `0..total`.
///
/// Gaps extend the preceding chord (the first chord extends back to 0);
/// a song without chords is harmonised with the tonic triad.
fn tile_chords(raw: &[RawChord], tonic: u8, shift: u32, total: u32) -> Vec<ChordDegree> {
    let mut sorted: Vec<RawChord> = raw.iter().copied().filter(|c| c.duration > 0).collect();
    sorted.sort_by_key(|c| c.onset);
    if sorted.is_empty() {
        return vec![ChordDegree { degree: 1, duration: total }];
    }
    let mut starts: Vec<(u32, u8)> = Vec::with_capacity(sorted.len());
    for c in &sorted {
        let onset = (c.onset + shift).min(total);
        let degree = degree_of_pitch_class((c.root + 12 - tonic) % 12);
        match starts.last_mut() {
            Some(last) if last.0 == onset => last.1 = degree,
            _ => starts.push((onset, degree)),
        }
    }
    starts[0].0 = 0;
    starts.retain(|s| s.0 < total || s.0 == 0);
    let tiles = starts.iter().enumerate().map(|(i, &(onset, degree))| {
        let end = starts.get(i + 1).map(|s| s.0).unwrap_or(total);
        ChordDegree { degree, duration: end - onset }
    });
    merge_chords(tiles.filter(|c| c.duration > 0))
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonMajorMode,
    /// Note `note` starts before the previous note ends.
    Overlap { phrase: usize, note: usize },
    /// Note has zero duration or ends past the phrase.
    NoteBounds { phrase: usize, note: usize },
    /// Chord track is shorter than the phrase.
    Gap { phrase: usize, missing: u32 },
    /// Chord track is longer than the phrase.
    ChordOverrun { phrase: usize, excess: u32 },
    ChordDegree { phrase: usize, chord: usize },
    ZeroLengthChord { phrase: usize, chord: usize },
    EmptyPhrase { phrase: usize },
}

/// Lists every well-formedness violation in a song; an empty list means valid.
pub fn validate_song(song: &Song) -> Vec<Violation> {
    let mut out = Vec::new();
    if song.mode != Mode::Major {
        out.push(Violation::NonMajorMode);
    }
    for (pi, p) in song.phrases().enumerate() {
        if p.measures == 0 {
            out.push(Violation::EmptyPhrase { phrase: pi });
            continue;
        }
        let len = p.len_sixteenths();
        for (ni, n) in p.melody.iter().enumerate() {
            if n.duration == 0 || n.end() > len {
                out.push(Violation::NoteBounds { phrase: pi, note: ni });
            }
            if ni > 0 && n.onset < p.melody[ni - 1].end() {
                out.push(Violation::Overlap { phrase: pi, note: ni });
            }
        }
        let mut covered = 0;
        for (ci, c) in p.chords.iter().enumerate() {
            if !(1..=7).contains(&c.degree) {
                out.push(Violation::ChordDegree { phrase: pi, chord: ci });
            }
            if c.duration == 0 {
                out.push(Violation::ZeroLengthChord { phrase: pi, chord: ci });
            }
            covered += c.duration;
        }
        if covered < len {
            out.push(Violation::Gap { phrase: pi, missing: len - covered });
        } else if covered > len {
            out.push(Violation::ChordOverrun { phrase: pi, excess: covered - len });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(tonic: u8, notes: Vec<RawNote>, chords: Vec<RawChord>) -> RawSong {
        RawSong { id: "t".into(), tonic, mode: Mode::Major, pickup: 0, length: None, notes, chords }
    }

    fn note(key: u8, onset: u32, duration: u32) -> RawNote {
        RawNote { key, onset, duration }
    }

    fn chord(root: u8, quality: ChordQuality, onset: u32, duration: u32) -> RawChord {
        RawChord { root, quality, onset, duration }
    }

    fn single(song: &Song) -> &Phrase {
        song.phrases().next().unwrap()
    }

    #[test]
    fn c4_quarter_in_c_major() {
        let s = transpose_to_c(&raw(0, vec![note(60, 0, 4)], vec![])).unwrap();
        assert_eq!(single(&s).melody, vec![NoteEvent::new(Pitch(8), 0, 4)]);
    }

    #[test]
    fn g_major_tonic_maps_to_tonic() {
        let s = transpose_to_c(&raw(7, vec![note(67, 0, 4)], vec![])).unwrap();
        assert_eq!(single(&s).melody[0].pitch, Pitch(8));
    }

    #[test]
    fn dominant_seventh_reduces_to_degree_five() {
        // A7 in D major
        let s = transpose_to_c(&raw(2, vec![note(62, 0, 16)], vec![chord(9, ChordQuality::Dominant7, 0, 16)])).unwrap();
        assert_eq!(single(&s).chords, vec![ChordDegree { degree: 5, duration: 16 }]);
    }

    #[test]
    fn minor_mode_rejected() {
        let mut r = raw(9, vec![note(57, 0, 4)], vec![]);
        r.mode = Mode::Minor;
        assert!(matches!(transpose_to_c(&r), Err(Error::NonMajorMode)));
    }

    #[test]
    fn chromatic_pitch_snaps_down() {
        // C#4 -> C4, F#4 -> F4
        let s = transpose_to_c(&raw(0, vec![note(61, 0, 4), note(66, 4, 4)], vec![])).unwrap();
        let p: Vec<u8> = single(&s).melody.iter().map(|n| n.pitch.value()).collect();
        assert_eq!(p, vec![8, 11]);
    }

    #[test]
    fn out_of_range_folds_towards_previous() {
        // B2 below C3 folds up; D5 is in range (15 is C5, so D5 folds down).
        assert_eq!(fold_pitch(47, None).unwrap(), Pitch(7));
        assert_eq!(fold_pitch(74, Some(Pitch(14))).unwrap(), Pitch(9));
        // A tonic far above range: candidates 1, 8, 15; closest to previous.
        assert_eq!(fold_pitch(96, Some(Pitch(2))).unwrap(), Pitch(1));
        assert_eq!(fold_pitch(96, Some(Pitch(13))).unwrap(), Pitch(15));
        assert!(fold_pitch(200, None).is_err());
    }

    #[test]
    fn pickup_is_padded_with_rest() {
        let mut r = raw(0, vec![note(60, 0, 4), note(62, 4, 16)], vec![]);
        r.pickup = 4;
        let s = transpose_to_c(&r).unwrap();
        let p = single(&s);
        assert_eq!(p.melody[0].onset, 12);
        assert_eq!(p.measures, 2);
    }

    #[test]
    fn chord_gaps_are_filled() {
        let s = transpose_to_c(&raw(
            0,
            vec![note(60, 0, 32)],
            vec![chord(0, ChordQuality::Major, 4, 8), chord(7, ChordQuality::Major, 16, 8)],
        ))
        .unwrap();
        assert_eq!(single(&s).chords, vec![ChordDegree { degree: 1, duration: 16 }, ChordDegree { degree: 5, duration: 16 }]);
        assert!(validate_song(&s).is_empty());
    }

    #[test]
    fn transpose_is_idempotent_on_c_major() {
        let s = transpose_to_c(&raw(
            5,
            vec![note(65, 0, 4), note(70, 4, 4), note(84, 8, 8), note(41, 16, 16)],
            vec![chord(5, ChordQuality::Major, 0, 16), chord(0, ChordQuality::Dominant7, 16, 16)],
        ))
        .unwrap();
        let again = transpose_to_c(&s.to_raw()).unwrap();
        assert_eq!(s.sections, again.sections);
    }

    fn phrase(melody: Vec<NoteEvent>, chords: Vec<ChordDegree>) -> Song {
        Song::new(
            "v",
            0,
            Mode::Major,
            vec![Section {
                kind: SectionKind::Theme,
                phrases: vec![Phrase { label: "A".into(), measures: 1, melody, chords, section_end: true }],
            }],
        )
    }

    #[test]
    fn validation_reports() {
        let ok = phrase(vec![NoteEvent::new(Pitch(3), 0, 8), NoteEvent::new(Pitch(4), 8, 8)], vec![ChordDegree { degree: 1, duration: 16 }]);
        assert!(validate_song(&ok).is_empty());

        let overlap = phrase(vec![NoteEvent::new(Pitch(3), 0, 9), NoteEvent::new(Pitch(4), 8, 8)], vec![ChordDegree { degree: 1, duration: 16 }]);
        assert_eq!(validate_song(&overlap), vec![Violation::Overlap { phrase: 0, note: 1 }]);

        let gap = phrase(vec![NoteEvent::new(Pitch(3), 0, 16)], vec![ChordDegree { degree: 1, duration: 14 }]);
        assert_eq!(validate_song(&gap), vec![Violation::Gap { phrase: 0, missing: 2 }]);
    }

    #[test]
    fn resegment_splits_notes_and_chords() {
        let mut s = phrase(
            vec![NoteEvent::new(Pitch(3), 0, 20), NoteEvent::new(Pitch(5), 20, 12)],
            vec![ChordDegree { degree: 1, duration: 24 }, ChordDegree { degree: 4, duration: 8 }],
        );
        s.sections[0].phrases[0].measures = 2;
        let layout = [SectionLayout { kind: SectionKind::Theme, phrases: vec![("A".into(), 1), ("B".into(), 1)] }];
        let r = s.resegment(&layout).unwrap();
        let ph: Vec<&Phrase> = r.phrases().collect();
        assert_eq!(ph[0].melody, vec![NoteEvent::new(Pitch(3), 0, 16)]);
        assert_eq!(ph[1].melody, vec![NoteEvent::new(Pitch(5), 4, 12)]);
        assert_eq!(ph[1].chords, vec![ChordDegree { degree: 1, duration: 8 }, ChordDegree { degree: 4, duration: 8 }]);
        assert!(ph[1].section_end && !ph[0].section_end);
        assert!(validate_song(&r).is_empty());
    }

    #[test]
    fn json_schema_uses_tuples() {
        let s = phrase(vec![NoteEvent::new(Pitch(8), 0, 4)], vec![ChordDegree { degree: 1, duration: 16 }]);
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["sections"][0]["phrases"][0]["melody"][0], serde_json::json!([8, 0, 4]));
        assert_eq!(v["sections"][0]["phrases"][0]["chords"][0], serde_json::json!([1, 16]));
        let bad = serde_json::json!([16, 0, 4]);
        assert!(serde_json::from_value::<NoteEvent>(bad).is_err());
    }
}
