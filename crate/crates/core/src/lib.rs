//! Symbolic pop-song analysis into music frameworks: the data model,
//! MIDI and corpus ingestion, framework analysis and model feature encoding.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod features;
pub mod midi;
pub mod rhythm;
pub mod score;
pub mod toy;

pub use error::{Error, Result};
