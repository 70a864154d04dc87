//! Melody generation from music frameworks: sampling policies, contour
//! control, phrase and song assembly, and evaluation metrics.

pub mod assemble;
pub mod dtw;
pub mod error;
pub mod eval;
pub mod generate;
pub mod models;
pub mod sampling;
pub mod seed;

pub use assemble::{assemble_song, GeneratedSong, GenerationReport, GenerationRequest, PhraseOverride, RepetitionStrategy};
pub use dtw::dtw_contour_similarity;
pub use error::{GenError, Result};
pub use eval::{controllability_roundtrip, next_token_accuracy, tonic_stats, EvalReport, RoundTripMode};
pub use generate::{generate_basic_melody, generate_melody, generate_rhythm, Policies};
pub use models::ModelSet;
pub use sampling::{sample_sequence, SamplingPolicy};
