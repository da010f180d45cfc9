use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

use thiserror::Error;

use crate::dataset::ClassId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Which of the two per-class tails a fit failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailKind {
    Matched,
    InvertedNonMatched,
}

impl fmt::Display for TailKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailKind::Matched => f.write_str("matched"),
            TailKind::InvertedNonMatched => f.write_str("inverted non-matched"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("column {index} has zero norm")]
    ZeroColumn { index: usize },

    #[error("dictionary column {index} is not unit norm (norm {norm})")]
    NotUnitNorm { index: usize, norm: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("need at least {needed} classes, dataset has {available}")]
    InsufficientClasses { needed: usize, available: usize },

    #[error("class {class} has {available} samples, need at least {needed}")]
    InsufficientSamples {
        class: ClassId,
        needed: usize,
        available: usize,
    },

    #[error("unknown class {0}")]
    UnknownClass(ClassId),

    #[error("solver did not converge after {iterations} iterations (final gap {gap:e})")]
    NotConverged { iterations: usize, gap: f64 },

    #[error("l1 constraint infeasible: smallest attainable residual {min_residual:e} exceeds epsilon {epsilon:e}")]
    Infeasible { min_residual: f64, epsilon: f64 },

    #[error("too few tail exceedances: {available} < {needed}")]
    TooFewExceedances { needed: usize, available: usize },

    #[error("degenerate samples: every value is equal")]
    DegenerateSamples,

    #[error("{tail} tail fit failed for class {class}: {source}")]
    TailFit {
        class: ClassId,
        tail: TailKind,
        source: Box<Error>,
    },

    #[error("harvest round {round}, class {class}: {source}")]
    Harvest {
        round: usize,
        class: ClassId,
        source: Box<Error>,
    },

    #[error("length mismatch: {left} predictions vs {right} ground-truth labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("confusion counts are empty")]
    EmptyCounts,
}

/// Coarse error classes used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. } => ErrorKind::Config,
            Error::NotConverged { .. }
            | Error::Infeasible { .. }
            | Error::TooFewExceedances { .. }
            | Error::DegenerateSamples => ErrorKind::Numerical,
            Error::TailFit { source, .. } | Error::Harvest { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
