//! Music framework analysis: basic melody, basic rhythm form and phrase structure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rhythm::{measure_onset_mask, rhythm_similarity, Complexity, SIMILARITY_THRESHOLD};
use crate::score::{ChordDegree, NoteEvent, Phrase, Pitch, SectionKind, SectionLayout, Song, MEASURE, SEGMENT};

/// One pitch per 2-beat segment of a phrase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BasicMelody(pub Vec<Pitch>);

impl BasicMelody {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> Vec<u8> {
        self.0.iter().map(|p| p.value()).collect()
    }
}

impl From<Vec<Pitch>> for BasicMelody {
    fn from(v: Vec<Pitch>) -> Self {
        BasicMelody(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeasureRhythmDescriptor {
    /// Index of the first similar earlier measure in the phrase, or the measure's own index.
    pub similar_to: u32,
    pub complexity: Complexity,
}

/// Most common pitch of each 2-beat segment, weighted by sounding sixteenths.
///
/// Rests never win unless the whole segment is silent. Ties go to the pitch
/// whose first onset inside the segment is earliest (notes sustained from an
/// earlier segment count as starting at the segment start).
pub fn extract_basic_melody(phrase: &Phrase) -> BasicMelody {
    let segments = phrase.segments();
    let mut out = Vec::with_capacity(segments);
    for s in 0..segments as u32 {
        let (lo, hi) = (s * SEGMENT, (s + 1) * SEGMENT);
        // (pitch, sixteenths, first onset in segment)
        let mut tally: Vec<(Pitch, u32, u32)> = Vec::new();
        for n in phrase.sounding() {
            let (a, b) = (n.onset.max(lo), n.end().min(hi));
            if a >= b {
                continue;
            }
            match tally.iter_mut().find(|t| t.0 == n.pitch) {
                Some(t) => {
                    t.1 += b - a;
                    t.2 = t.2.min(a);
                }
                None => tally.push((n.pitch, b - a, a)),
            }
        }
        let best = tally
            .iter()
            .min_by_key(|t| (std::cmp::Reverse(t.1), t.2))
            .map(|t| t.0)
            .unwrap_or(Pitch::REST);
        out.push(best);
    }
    BasicMelody(out)
}

/// Per-measure rhythm descriptors.
///
/// A measure points at the earliest representative measure (one that points
/// at itself) whose onset mask is at least [`SIMILARITY_THRESHOLD`] similar;
/// otherwise it becomes a representative.
pub fn extract_basic_rhythm_form(phrase: &Phrase) -> Vec<MeasureRhythmDescriptor> {
    let masks: Vec<u16> = (0..phrase.measures).map(|m| measure_onset_mask(&phrase.melody, m * MEASURE)).collect();
    let mut out: Vec<MeasureRhythmDescriptor> = Vec::with_capacity(masks.len());
    for (i, &mask) in masks.iter().enumerate() {
        let similar_to = (0..i)
            .find(|&j| out[j].similar_to == j as u32 && rhythm_similarity(masks[j], mask) >= SIMILARITY_THRESHOLD)
            .unwrap_or(i) as u32;
        out.push(MeasureRhythmDescriptor { similar_to, complexity: Complexity::from_mask(mask) });
    }
    out
}

/// Letter labels (`a`, `b`, ...) for a rhythm form, in order of first appearance.
pub fn rhythm_labels(form: &[MeasureRhythmDescriptor]) -> Vec<char> {
    let mut reps: Vec<u32> = Vec::new();
    form.iter()
        .map(|d| {
            let idx = reps.iter().position(|&r| r == d.similar_to).unwrap_or_else(|| {
                reps.push(d.similar_to);
                reps.len() - 1
            });
            (b'a' + (idx % 26) as u8) as char
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Structure

/// Phrases whose normalized edit distance is at most this are repetitions.
pub const REPETITION_DISTANCE: f64 = 0.2;
const MIN_PHRASE: u32 = 4;
const MAX_PHRASE: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseSpan {
    pub start_measure: u32,
    pub measures: u32,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Structure {
    pub phrases: Vec<PhraseSpan>,
    /// Section kind and number of phrases, in order.
    pub sections: Vec<(SectionKind, usize)>,
}

impl Structure {
    pub fn layout(&self) -> Vec<SectionLayout> {
        let mut it = self.phrases.iter();
        self.sections
            .iter()
            .map(|&(kind, n)| SectionLayout {
                kind,
                phrases: it.by_ref().take(n).map(|p| (p.label.clone(), p.measures)).collect(),
            })
            .collect()
    }

    pub fn letters(&self) -> String {
        self.phrases.iter().map(|p| p.label.as_str()).collect()
    }
}

/// Symbol used for edit-distance comparison: (pitch, onset, duration), with
/// onset relative to the window start. A note sustained into the window is
/// clipped to start at 0.
type Token = (u8, u32, u32);

fn window_tokens(melody: &[NoteEvent], start: u32, end: u32) -> Vec<Token> {
    melody
        .iter()
        .filter(|n| !n.pitch.is_rest() && n.end() > start && n.onset < end)
        .map(|n| {
            let a = n.onset.max(start);
            (n.pitch.value(), a - start, n.end().min(end) - a)
        })
        .collect()
}

/// Levenshtein distance divided by the longer length; 0 for two empty sequences.
pub fn normalized_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as f64 / longest as f64
}

/// Finds phrases and sections in an unsegmented melody of `measures` measures.
///
/// A measure self-similarity matrix (edit distance between the measures' note
/// tokens) scores every candidate phrase of 4..=16 measures by its best
/// non-overlapping approximate repetition elsewhere in the song; dynamic
/// programming picks the segmentation with the highest total repetition
/// score. Phrases are then lettered by comparing full phrase token sequences.
pub fn extract_structure(melody: &[NoteEvent], measures: u32) -> Result<Structure> {
    if measures < 8 {
        return Err(Error::SongTooShort(measures));
    }
    let m = measures as usize;
    let tokens: Vec<Vec<Token>> = (0..measures).map(|i| window_tokens(melody, i * MEASURE, (i + 1) * MEASURE)).collect();
    let mut cost = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let d = normalized_edit_distance(&tokens[i], &tokens[j]);
            cost[i][j] = d;
            cost[j][i] = d;
        }
    }

    // Repetition score of the window [s, s + len).
    let score = |s: usize, len: usize| -> f64 {
        let mut best: Option<f64> = None;
        for t in 0..=m - len {
            if t.abs_diff(s) < len {
                continue;
            }
            let d = (0..len).map(|k| cost[s + k][t + k]).sum::<f64>() / len as f64;
            if d <= REPETITION_DISTANCE {
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
        best.map_or(0.0, |d| len as f64 * (1.0 - d))
    };

    const SEGMENT_PENALTY: f64 = 1e-3;
    const IRREGULAR_PENALTY: f64 = 1e-4;
    let mut best = vec![f64::NEG_INFINITY; m + 1];
    let mut back = vec![0usize; m + 1];
    best[0] = 0.0;
    for end in 1..=m {
        for len in MIN_PHRASE as usize..=(MAX_PHRASE as usize).min(end) {
            let s = end - len;
            if best[s] == f64::NEG_INFINITY {
                continue;
            }
            let irregular = if len % 4 == 0 { 0.0 } else { IRREGULAR_PENALTY };
            let v = best[s] + score(s, len) - SEGMENT_PENALTY - irregular;
            // Ties keep the earliest candidate.
            if v > best[end] + 1e-12 || best[end] == f64::NEG_INFINITY {
                best[end] = v;
                back[end] = s;
            }
        }
    }

    let mut bounds = vec![m];
    let mut e = m;
    while e > 0 {
        e = back[e];
        bounds.push(e);
    }
    bounds.reverse();

    let mut phrases: Vec<PhraseSpan> = Vec::new();
    let mut reps: Vec<(String, Vec<Token>)> = Vec::new();
    for w in bounds.windows(2) {
        let (s, e) = (w[0] as u32, w[1] as u32);
        let toks = window_tokens(melody, s * MEASURE, e * MEASURE);
        let label = match reps.iter().find(|(_, r)| normalized_edit_distance(r, &toks) <= REPETITION_DISTANCE) {
            Some((l, _)) => l.clone(),
            None => {
                let l = letter(reps.len());
                reps.push((l.clone(), toks));
                l
            }
        };
        phrases.push(PhraseSpan { start_measure: s, measures: e - s, label });
    }
    let sections = assign_sections(&phrases);
    Ok(Structure { phrases, sections })
}

fn letter(i: usize) -> String {
    let c = (b'A' + (i % 26) as u8) as char;
    if i < 26 {
        c.to_string()
    } else {
        format!("{c}{}", i / 26)
    }
}

/// Groups phrases into sections by position.
///
/// A leading (trailing) phrase whose letter occurs once and which is shorter
/// than the longest phrase is an intro (outro). Any other once-only phrase
/// between repeated material is a bridge.
pub fn assign_sections(phrases: &[PhraseSpan]) -> Vec<(SectionKind, usize)> {
    let n = phrases.len();
    let count = |l: &str| phrases.iter().filter(|p| p.label == l).count();
    let longest = phrases.iter().map(|p| p.measures).max().unwrap_or(0);
    let mut kinds = vec![SectionKind::Theme; n];
    if n >= 3 {
        if count(&phrases[0].label) == 1 && phrases[0].measures < longest {
            kinds[0] = SectionKind::Intro;
        }
        if count(&phrases[n - 1].label) == 1 && phrases[n - 1].measures < longest {
            kinds[n - 1] = SectionKind::Outro;
        }
    }
    let body: Vec<usize> = (0..n).filter(|&i| kinds[i] == SectionKind::Theme).collect();
    if let (Some(&first), Some(&last)) = (body.first(), body.last()) {
        for &i in &body {
            if i != first && i != last && count(&phrases[i].label) == 1 {
                kinds[i] = SectionKind::Bridge;
            }
        }
    }
    let labels: Vec<&str> = phrases.iter().map(|p| p.label.as_str()).collect();
    group_sections(&labels, &kinds)
}

/// Collapses per-phrase kinds into `(kind, phrase count)` sections.
///
/// Consecutive theme phrases share a section, except that a return to the
/// first theme letter after different material opens a new one.
pub fn group_sections(labels: &[&str], kinds: &[SectionKind]) -> Vec<(SectionKind, usize)> {
    let theme_letter = (0..labels.len()).find(|&i| kinds[i] == SectionKind::Theme).map(|i| labels[i]);
    let mut sections: Vec<(SectionKind, usize)> = Vec::new();
    for (i, &kind) in kinds.iter().enumerate() {
        let new_section = match sections.last() {
            None => true,
            Some(&(k, _)) if k != kind || kind != SectionKind::Theme => true,
            Some(_) => Some(labels[i]) == theme_letter && labels[i - 1] != labels[i],
        };
        if new_section {
            sections.push((kind, 1));
        } else if let Some(last) = sections.last_mut() {
            last.1 += 1;
        }
    }
    sections
}

/// Splits an unsegmented song into analyzed phrases and sections.
pub fn segment_song(song: &Song) -> Result<Song> {
    let (melody, _) = song.flatten();
    let structure = extract_structure(&melody, song.measures())?;
    song.resegment(&structure.layout())
}

// ---------------------------------------------------------------------------
// Framework

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseFramework {
    pub label: String,
    pub kind: SectionKind,
    pub section_end: bool,
    pub measures: u32,
    pub basic_melody: BasicMelody,
    pub rhythm_form: Vec<MeasureRhythmDescriptor>,
    pub chords: Vec<ChordDegree>,
}

impl PhraseFramework {
    pub fn analyze(phrase: &Phrase, kind: SectionKind) -> Self {
        PhraseFramework {
            label: phrase.label.clone(),
            kind,
            section_end: phrase.section_end,
            measures: phrase.measures,
            basic_melody: extract_basic_melody(phrase),
            rhythm_form: extract_basic_rhythm_form(phrase),
            chords: phrase.chords.clone(),
        }
    }

    pub fn len_sixteenths(&self) -> u32 {
        self.measures * MEASURE
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidFramework(format!("phrase {}: {msg}", self.label)));
        if self.measures == 0 {
            return bad("zero measures".into());
        }
        if self.basic_melody.len() != 2 * self.measures as usize {
            return bad(format!("basic melody has {} pitches, expected {}", self.basic_melody.len(), 2 * self.measures));
        }
        if self.rhythm_form.len() != self.measures as usize {
            return bad(format!("rhythm form has {} descriptors, expected {}", self.rhythm_form.len(), self.measures));
        }
        for (i, d) in self.rhythm_form.iter().enumerate() {
            if d.similar_to as usize > i || d.complexity.onsets() > 16 {
                return bad(format!("invalid rhythm descriptor at measure {i}"));
            }
        }
        let covered: u32 = self.chords.iter().map(|c| c.duration).sum();
        if covered != self.len_sixteenths() || self.chords.iter().any(|c| !(1..=7).contains(&c.degree) || c.duration == 0) {
            return bad("chord track does not tile the phrase".into());
        }
        Ok(())
    }
}

/// Structure string, basic melody, basic rhythm form and chords of a song.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MusicFramework {
    pub id: String,
    /// Phrase labels with `|` between sections, e.g. `i|AABBB|x|AB|o`.
    pub structure: String,
    pub phrases: Vec<PhraseFramework>,
}

impl MusicFramework {
    pub fn new(id: impl Into<String>, phrases: Vec<PhraseFramework>) -> Self {
        let structure = structure_string(&phrases);
        MusicFramework { id: id.into(), structure, phrases }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phrases.is_empty() {
            return Err(Error::InvalidFramework("no phrases".into()));
        }
        for p in &self.phrases {
            p.validate()?;
        }
        let expected = structure_string(&self.phrases);
        if self.structure != expected {
            return Err(Error::InvalidFramework(format!("structure {:?} does not match phrases {expected:?}", self.structure)));
        }
        Ok(())
    }

    /// Index of the most recent earlier phrase sharing phrase `i`'s label.
    pub fn previous_occurrence(&self, i: usize) -> Option<usize> {
        (0..i).rev().find(|&j| self.phrases[j].label == self.phrases[i].label)
    }
}

fn structure_string(phrases: &[PhraseFramework]) -> String {
    let mut s = String::new();
    for (i, p) in phrases.iter().enumerate() {
        s.push_str(&p.label);
        if p.section_end && i + 1 < phrases.len() {
            s.push('|');
        }
    }
    s
}

/// Analyzes a segmented song into its music framework. Songs that are still
/// one long phrase are segmented first.
pub fn analyze_framework(song: &Song) -> Result<MusicFramework> {
    let segmented;
    let song = if song.needs_segmentation() {
        segmented = segment_song(song)?;
        &segmented
    } else {
        song
    };
    let phrases = song
        .sections
        .iter()
        .flat_map(|s| s.phrases.iter().map(move |p| PhraseFramework::analyze(p, s.kind)))
        .collect();
    Ok(MusicFramework::new(song.id.clone(), phrases))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{Mode, Section};

    fn p(v: u8) -> Pitch {
        Pitch::new(v).unwrap()
    }

    fn phrase(measures: u32, notes: &[(u8, u32, u32)]) -> Phrase {
        Phrase {
            label: "A".into(),
            measures,
            melody: notes.iter().map(|&(pi, o, d)| NoteEvent::new(p(pi), o, d)).collect(),
            chords: vec![ChordDegree { degree: 1, duration: measures * 16 }],
            section_end: true,
        }
    }

    #[test]
    fn basic_melody_examples() {
        // (5,4),(5,2),(7,2) -> 5 ; all rest -> 0 ; (5,4),(7,4) -> 5 (tie, earliest)
        let ph = phrase(2, &[(5, 0, 4), (5, 4, 2), (7, 6, 2), (7, 16, 4), (5, 20, 4)]);
        let bm = extract_basic_melody(&ph);
        assert_eq!(bm.values(), vec![5, 0, 7, 0]);
        let ph = phrase(1, &[(5, 0, 4), (7, 4, 4)]);
        assert_eq!(extract_basic_melody(&ph).values(), vec![5, 0]);
    }

    #[test]
    fn sustained_notes_count_in_later_segment() {
        let ph = phrase(1, &[(3, 0, 12), (9, 12, 4)]);
        assert_eq!(extract_basic_melody(&ph).values(), vec![3, 3]);
    }

    #[test]
    fn rhythm_form_examples() {
        let m0: &[u32] = &[0, 4, 8, 12];
        let m1: &[u32] = &[0, 1, 2, 3, 6, 7, 10, 11, 14];
        let build = |pattern: &[&[u32]]| {
            let notes: Vec<(u8, u32, u32)> =
                pattern.iter().enumerate().flat_map(|(m, on)| on.iter().map(move |&o| (5u8, m as u32 * 16 + o, 1u32))).collect();
            phrase(pattern.len() as u32, &notes)
        };
        let same = extract_basic_rhythm_form(&build(&[m0, m0, m0, m0]));
        assert_eq!(same.iter().map(|d| d.similar_to).collect::<Vec<_>>(), vec![0, 0, 0, 0]);
        let mix = extract_basic_rhythm_form(&build(&[m0, m1, m0]));
        assert_eq!(mix.iter().map(|d| d.similar_to).collect::<Vec<_>>(), vec![0, 1, 0]);
        assert_eq!(rhythm_labels(&mix), vec!['a', 'b', 'a']);
        assert_eq!(mix[0].complexity.value(), 0.25);
    }

    #[test]
    fn edit_distance() {
        assert_eq!(normalized_edit_distance::<u8>(&[], &[]), 0.0);
        assert_eq!(normalized_edit_distance(&[1, 2, 3], &[1, 2, 3]), 0.0);
        assert_eq!(normalized_edit_distance(&[1, 2, 3, 4], &[1, 3, 4]), 0.25);
        assert_eq!(normalized_edit_distance(&[1, 2], &[3, 4]), 1.0);
    }

    fn theme(seed: u8, measures: u32) -> Vec<(u8, u32, u32)> {
        // A deterministic, measure-varying melody.
        let mut out = Vec::new();
        for m in 0..measures {
            let pattern: &[u32] = match (m + seed as u32) % 3 {
                0 => &[0, 4, 8, 12],
                1 => &[0, 2, 4, 8],
                _ => &[0, 6, 8, 10, 12],
            };
            for (k, &o) in pattern.iter().enumerate() {
                let next = pattern.get(k + 1).copied().unwrap_or(16);
                let pitch = 1 + ((seed as u32 * 5 + m * 3 + k as u32 * 2) % 14) as u8;
                out.push((pitch, m * 16 + o, next - o));
            }
        }
        out
    }

    fn concat(parts: &[Vec<(u8, u32, u32)>], measures: u32) -> Vec<NoteEvent> {
        parts
            .iter()
            .enumerate()
            .flat_map(|(i, part)| part.iter().map(move |&(pi, o, d)| NoteEvent::new(p(pi), o + i as u32 * measures * 16, d)))
            .collect()
    }

    #[test]
    fn exact_repetition_gives_same_letters() {
        let x = theme(1, 8);
        let melody = concat(&[x.clone(), x.clone(), x], 8);
        let s = extract_structure(&melody, 24).unwrap();
        assert_eq!(s.letters(), "AAA");
        assert!(s.phrases.iter().all(|p| p.measures == 8));
    }

    #[test]
    fn approximate_repetition_then_new_material() {
        let x = theme(1, 8);
        let mut x2 = x.clone();
        x2[3].0 = if x2[3].0 > 2 { x2[3].0 - 2 } else { 9 };
        x2[10].0 = if x2[10].0 < 13 { x2[10].0 + 2 } else { 4 };
        let y = theme(7, 8).into_iter().map(|(pi, o, d)| (16 - pi, o, d)).collect::<Vec<_>>();
        let melody = concat(&[x, x2, y], 8);
        let s = extract_structure(&melody, 24).unwrap();
        assert_eq!(s.letters(), "AAB");
    }

    #[test]
    fn too_short() {
        assert!(matches!(extract_structure(&[], 7), Err(Error::SongTooShort(7))));
    }

    fn span(label: &str, measures: u32) -> PhraseSpan {
        PhraseSpan { start_measure: 0, measures, label: label.into() }
    }

    #[test]
    fn section_heuristic_matches_pop_form() {
        // intro, A A B B B, bridge, A B, outro
        let ps: Vec<PhraseSpan> = [("C", 4), ("A", 8), ("A", 8), ("B", 8), ("B", 8), ("B", 8), ("D", 4), ("A", 8), ("B", 8), ("E", 4)]
            .iter()
            .map(|&(l, m)| span(l, m))
            .collect();
        let kinds = assign_sections(&ps);
        assert_eq!(
            kinds,
            vec![
                (SectionKind::Intro, 1),
                (SectionKind::Theme, 5),
                (SectionKind::Bridge, 1),
                (SectionKind::Theme, 2),
                (SectionKind::Outro, 1)
            ]
        );
    }

    fn song_from(phrases: Vec<Phrase>) -> Song {
        Song::new("s", 0, Mode::Major, vec![Section { kind: SectionKind::Theme, phrases }])
    }

    #[test]
    fn constant_song_framework() {
        let notes: Vec<(u8, u32, u32)> = (0..16).map(|q| (8u8, q * 4, 4u32)).collect();
        let mut a = phrase(4, &notes);
        let mut b = a.clone();
        a.section_end = false;
        b.section_end = true;
        let fw = analyze_framework(&song_from(vec![a, b])).unwrap();
        assert_eq!(fw.structure, "AA");
        for pf in &fw.phrases {
            assert_eq!(pf.basic_melody.values(), vec![8; 8]);
            assert!(pf.rhythm_form.iter().all(|d| d.similar_to == 0));
        }
        fw.validate().unwrap();
    }

    #[test]
    fn long_single_phrase_gets_segmented() {
        let x = theme(2, 8);
        let melody = concat(&[x.clone(), x.clone(), x], 8);
        let song = song_from(vec![Phrase {
            label: "A".into(),
            measures: 24,
            melody,
            chords: vec![ChordDegree { degree: 1, duration: 24 * 16 }],
            section_end: true,
        }]);
        let fw = analyze_framework(&song).unwrap();
        assert_eq!(fw.phrases.len(), 3);
        assert_eq!(fw.structure, "AAA");
        for pf in &fw.phrases {
            assert_eq!(pf.basic_melody.len(), 16);
            assert_eq!(pf.rhythm_form.len(), 8);
        }
    }
}
