use crate::substitution::ValidationReport;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid random substitution: {0}")]
    Invalid(ValidationReport),

    /// An exact enumeration would hold more words than the configured cap.
    #[error("support size {needed} exceeds cap {cap}")]
    CapExceeded { needed: u128, cap: usize },

    #[error("substitution matrix is not primitive")]
    NotPrimitive,

    #[error("Perron root {lambda} does not exceed 1")]
    NonExpanding { lambda: f64 },

    #[error("not compatible: realisations {first:?} and {second:?} of letter {letter:?} have different letter counts")]
    NotCompatible {
        letter: char,
        first: String,
        second: String,
    },

    /// Realisations of one letter differ in length, so cutting points are not well defined.
    #[error("realisations of letter {letter:?} have different lengths")]
    LengthIncompatible { letter: char },

    #[error("the {0} condition has not been established")]
    ConditionNotEstablished(&'static str),

    #[error("q = {0} < 0 requires recognisability")]
    NegativeQWithoutRecognisability(f64),

    #[error("fixed-point iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("window {0:?} is missing from the table")]
    WindowMissing(String),

    #[error("word {0:?} contains no complete recognised tile")]
    EmptyCore(String),

    #[error("realisation enumeration over {0} letters exceeds the limit of {1}")]
    WindowTooLong(usize, usize),

    #[error("letter {0:?} is not in the alphabet")]
    UnknownLetter(char),

    #[error("{0}")]
    Domain(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
