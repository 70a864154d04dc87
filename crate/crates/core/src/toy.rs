//! A small deterministic corpus for smoke tests, demos and overfit checks:
//! two songs of four distinct 4-measure phrases each.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::score::{ChordDegree, Mode, NoteEvent, Phrase, Pitch, Section, SectionKind, Song, MEASURE};

const PROGRESSIONS: [[&[u8]; 4]; 8] = [
    [&[1], &[4], &[5], &[1]],
    [&[6], &[4], &[1], &[5]],
    [&[1], &[5], &[6], &[4]],
    [&[2], &[5], &[1], &[1]],
    [&[4], &[1], &[5], &[6]],
    [&[1, 3], &[4], &[2, 5], &[1]],
    [&[6], &[2], &[5], &[1]],
    [&[4], &[5], &[3], &[6]],
];

const RHYTHMS: [&[u32]; 8] = [
    &[0, 4, 8, 12],
    &[0, 2, 4, 8, 12, 14],
    &[0, 6, 8, 12],
    &[0, 4, 6, 8, 10, 12],
    &[0, 8, 12],
    &[0, 2, 4, 6, 8, 12],
    &[0, 3, 4, 8, 11, 12],
    &[0, 4, 8],
];

const CADENCES: [&[u32]; 2] = [&[0, 4, 8], &[0, 8]];

/// The `i`-th toy phrase (0..8).
pub fn toy_phrase(i: usize) -> Phrase {
    let mut rng = ChaCha8Rng::seed_from_u64(0x70 + i as u64);
    let prog = PROGRESSIONS[i % 8];
    let mut chords = Vec::new();
    for measure in prog {
        let each = MEASURE / measure.len() as u32;
        chords.extend(measure.iter().map(|&d| ChordDegree { degree: d, duration: each }));
    }
    let rhythm = [RHYTHMS[i % 8], RHYTHMS[(i + 3) % 8], RHYTHMS[i % 8], CADENCES[i % 2]];
    let onsets: Vec<u32> = rhythm.iter().enumerate().flat_map(|(m, r)| r.iter().map(move |&o| m as u32 * MEASURE + o)).collect();

    let ending: u8 = if i % 4 == 3 || i % 3 == 0 { 8 } else { 5 };
    let mut prev: i32 = 5 + (i as i32 % 5);
    let mut melody = Vec::with_capacity(onsets.len());
    for (k, &t) in onsets.iter().enumerate() {
        let degree = chord_at(&chords, t);
        let tones: Vec<i32> = (1..=15).filter(|p| [degree, degree + 2, degree + 4].iter().any(|d| (p - *d as i32).rem_euclid(7) == 0)).collect();
        let target = prev + [-2, -1, 1, 2, 0][rng.random_range(0..5)];
        let mut pitch = *tones.iter().filter(|&&p| (3..=13).contains(&p)).min_by_key(|&&p| ((p - target).abs(), p)).unwrap();
        if k + 1 == onsets.len() {
            pitch = ending as i32;
        }
        let end = onsets.get(k + 1).copied().unwrap_or(4 * MEASURE);
        melody.push(NoteEvent::new(Pitch::new(pitch as u8).unwrap(), t, end - t));
        prev = pitch;
    }
    if i == 2 {
        // a phrase with a trailing rest
        let last = melody.last_mut().unwrap();
        last.duration = 4;
    }
    Phrase { label: ((b'A' + (i % 4) as u8) as char).to_string(), measures: 4, melody, chords, section_end: false }
}

fn chord_at(chords: &[ChordDegree], t: u32) -> u8 {
    let mut start = 0;
    for c in chords {
        if t < start + c.duration {
            return c.degree;
        }
        start += c.duration;
    }
    chords.last().map_or(1, |c| c.degree)
}

/// Two songs, each two theme sections of two phrases.
pub fn toy_corpus() -> Vec<Song> {
    (0..2)
        .map(|s| {
            let p: Vec<Phrase> = (0..4).map(|k| toy_phrase(4 * s + k)).collect();
            Song::new(
                format!("toy-{}", s + 1),
                0,
                Mode::Major,
                vec![
                    Section { kind: SectionKind::Theme, phrases: p[..2].to_vec() },
                    Section { kind: SectionKind::Theme, phrases: p[2..].to_vec() },
                ],
            )
        })
        .collect()
}
