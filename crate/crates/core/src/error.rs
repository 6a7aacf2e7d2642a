use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config parse error in {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("position coincides with a transmitter or RIS (zero link distance)")]
    ZeroDistance,

    #[error("cyclic prefix of {cp} samples cannot absorb a {taps}-tap channel")]
    InsufficientCp { cp: usize, taps: usize },

    #[error("replay buffer holds {have} experiences, {need} required")]
    InsufficientReplay { have: usize, need: usize },

    #[error("search space of {0} configurations exceeds the exhaustive limit")]
    SearchSpaceTooLarge(u64),

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
