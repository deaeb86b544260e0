use std::io;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("index {index:?} out of bounds for shape {shape:?}")]
    IndexOutOfBounds { index: Vec<usize>, shape: Vec<usize> },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid census window {0} (expected 3, 5 or 7)")]
    InvalidWindow(usize),
    #[error("{groups} groups do not divide {channels} channels")]
    GroupMismatch { groups: usize, channels: usize },
    #[error("invalid downsample factor {0} (expected 2, 4, 8 or 16)")]
    InvalidFactor(usize),
    #[error("no pixel is valid in both maps")]
    EmptyOverlap,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidWindow(_) | Error::InvalidFactor(_) => 2,
            // inputs whose sizes do not fit together are treated as bad files
            Error::Io(_) | Error::Format(_) | Error::ShapeMismatch(_) | Error::InvalidShape(_) => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
