use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    /// `position` is a byte offset for binary files and a 1-based line number for text.
    #[error("{kind} at {position}: {detail}")]
    Record {
        kind: RecordErrorKind,
        position: Position,
        detail: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("target mean {target} is outside the feasible range [{min}, {max}]")]
    Infeasible { target: f64, min: f64, max: f64 },

    #[error("calibration bracket does not straddle the target: {0}")]
    NotMonotone(String),

    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("subsampled event {index} not found in the labeled stream")]
    UnmatchedEvent { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordErrorKind {
    Truncated,
    Malformed,
    OutOfBounds,
    InvalidPolarity,
    TimestampInversion,
}

impl std::fmt::Display for RecordErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RecordErrorKind::Truncated => "truncated record",
            RecordErrorKind::Malformed => "malformed record",
            RecordErrorKind::OutOfBounds => "out-of-bounds coordinate",
            RecordErrorKind::InvalidPolarity => "invalid polarity",
            RecordErrorKind::TimestampInversion => "timestamp inversion",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Byte(u64),
    Line(usize),
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Position::Byte(b) => write!(f, "byte {b}"),
            Position::Line(l) => write!(f, "line {l}"),
        }
    }
}
