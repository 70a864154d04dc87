//! 2-beat rhythm pattern codec and measure-level rhythm descriptors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{NoteEvent, MEASURE, SEGMENT};

/// Onset bitmask over the eight sixteenths of a 2-beat window: bit `k` is set
/// iff a note starts at sixteenth `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RhythmPatternCode(pub u8);

impl RhythmPatternCode {
    pub const COUNT: usize = 256;

    pub fn encode(onsets: &[u8]) -> Result<Self> {
        let mut code = 0u8;
        for &k in onsets {
            if k >= SEGMENT as u8 {
                return Err(Error::OnsetOutOfWindow(k));
            }
            code |= 1 << k;
        }
        Ok(RhythmPatternCode(code))
    }

    /// Sorted onsets within the window.
    pub fn decode(self) -> Vec<u8> {
        (0..SEGMENT as u8).filter(|k| self.0 & (1 << k) != 0).collect()
    }

    pub fn onset_count(self) -> u32 {
        self.0.count_ones()
    }
}

/// 16-bit onset mask of non-rest notes starting in `[start, start + 16)`.
pub fn measure_onset_mask(melody: &[NoteEvent], start: u32) -> u16 {
    melody
        .iter()
        .filter(|n| !n.pitch.is_rest() && n.onset >= start && n.onset < start + MEASURE)
        .fold(0u16, |m, n| m | 1 << (n.onset - start))
}

/// Pattern codes of the 2-beat slots of a phrase, two per measure.
pub fn phrase_patterns(melody: &[NoteEvent], measures: u32) -> Vec<RhythmPatternCode> {
    (0..measures)
        .flat_map(|m| {
            let mask = measure_onset_mask(melody, m * MEASURE);
            [RhythmPatternCode(mask as u8), RhythmPatternCode((mask >> 8) as u8)]
        })
        .collect()
}

/// Onsets (phrase-relative sixteenths) described by a sequence of pattern codes.
pub fn patterns_to_onsets(codes: &[RhythmPatternCode]) -> Vec<u32> {
    codes
        .iter()
        .enumerate()
        .flat_map(|(slot, c)| c.decode().into_iter().map(move |k| slot as u32 * SEGMENT + k as u32))
        .collect()
}

/// Legato durations: each onset sustains to the next one, the last to `end`.
pub fn legato_durations(onsets: &[u32], end: u32) -> Vec<u32> {
    onsets
        .iter()
        .enumerate()
        .map(|(i, &t)| onsets.get(i + 1).copied().unwrap_or(end) - t)
        .collect()
}

/// Rhythmic complexity of a measure as an exact fraction `onsets / 16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Complexity(pub u8);

impl Complexity {
    pub fn from_mask(mask: u16) -> Self {
        Complexity(mask.count_ones() as u8)
    }

    pub fn onsets(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / MEASURE as f64
    }
}

/// Complexity of one measure given measure-relative notes (onsets `0..16`).
/// Rests do not count.
pub fn measure_complexity(measure: &[NoteEvent]) -> Complexity {
    Complexity::from_mask(measure_onset_mask(measure, 0))
}

/// `1 - hamming(a, b) / 16` over measure onset masks.
pub fn rhythm_similarity(a: u16, b: u16) -> f64 {
    1.0 - (a ^ b).count_ones() as f64 / MEASURE as f64
}

/// Two measures are rhythmically similar at or above this similarity.
pub const SIMILARITY_THRESHOLD: f64 = 0.75;
