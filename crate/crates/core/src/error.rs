use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("both operands are all-zero; similarity is undefined")]
    AllZeroOperands,

    #[error("negative entry {value} at index {index} is not allowed in non-negative mode")]
    NegativeEntryInNonNegativeMode { index: usize, value: f64 },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("feature vectors must have at least one entry")]
    EmptyVector,

    #[error("strictness exponent must be positive, got {0}")]
    InvalidExponent(f64),

    #[error("invalid activation: {0}")]
    InvalidActivation(String),

    #[error("neuron weights are all zero")]
    AllZeroWeights,

    #[error("invalid network topology: {0}")]
    Topology(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("pixel ({x}, {y}) is outside the {width}x{height} image")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },

    #[error("gold mask lacks a class: {positives} object and {negatives} background pixels")]
    DegenerateGold { positives: u64, negatives: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid image data: {0}")]
    InvalidImage(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// True for the degenerate-operand family that scans and sweeps recover from.
    pub fn is_degenerate_operand(&self) -> bool {
        matches!(self, Error::AllZeroOperands | Error::AllZeroWeights)
    }
}
