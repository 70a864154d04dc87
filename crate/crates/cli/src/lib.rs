//! Command-line tools and the local HTTP service for music framework
//! analysis and generation.

pub mod commands;
pub mod service;

/// Environment variable naming the directory that holds the three checkpoints.
pub const MODEL_DIR_ENV: &str = "MF_MODEL_DIR";
