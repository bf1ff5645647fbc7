use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the fitting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} out of range: {what}")]
    Range { what: String, value: i128 },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("unsupported shape for statevector simulation: {0}")]
    UnsupportedShape(String),

    #[error("arithmetic overflow evaluating `{expr}`")]
    Overflow { expr: String },

    #[error("{kind} at line {line}, column {column}: {message}")]
    Parse {
        kind: ParseErrorKind,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    #[error("bounds certificate did not converge after {iterations} iterations")]
    CertificateFailure { iterations: usize },

    #[error("sensitivity search exceeded {limit} adjustments")]
    NonTermination { limit: usize },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data file {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("report: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownIdentifier,
    Arity,
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::UnknownIdentifier => "unknown identifier",
            ParseErrorKind::Arity => "arity violation",
        })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
