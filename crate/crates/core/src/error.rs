use thiserror::Error;

use crate::score::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("song is not in major mode")]
    NonMajorMode,
    #[error("pitch {0} cannot be mapped into the C3..C5 range")]
    PitchOutOfRange(i32),
    #[error("invalid pitch value {0} (expected 0..=15)")]
    InvalidPitch(u8),
    #[error("invalid chord degree {0} (expected 1..=7)")]
    InvalidChordDegree(u8),
    #[error("malformed MIDI: {0}")]
    MalformedMidi(String),
    #[error("melody track is empty or missing")]
    EmptyMelodyTrack,
    #[error("annotation does not match song: {0}")]
    AnnotationMismatch(String),
    #[error("onset {0} lies outside the 2-beat window 0..8")]
    OnsetOutOfWindow(u8),
    #[error("song has {0} measures, at least 8 are required for structure analysis")]
    SongTooShort(u32),
    #[error("song failed validation: {0:?}")]
    InvalidSong(Vec<Violation>),
    #[error("invalid framework: {0}")]
    InvalidFramework(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
