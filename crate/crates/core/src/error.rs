use std::fmt;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Constraint families reported by the portfolio optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    Risk,
    Turnover,
    Box,
    Budget,
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintFamily::Risk => "risk",
            ConstraintFamily::Turnover => "turnover",
            ConstraintFamily::Box => "box",
            ConstraintFamily::Budget => "budget",
        };
        f.write_str(s)
    }
}

/// What went wrong while parsing a factor expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyntaxErrorKind {
    Lexical(String),
    UnbalancedParen,
    UnexpectedToken(String),
    UnexpectedEnd,
    UnknownOperator(String),
    ArityMismatch { op: String, expected: usize, found: usize },
    BadParameter(String),
    WindowTooSmall(i64),
}

impl fmt::Display for SyntaxErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyntaxErrorKind::Lexical(s) => write!(f, "lexical error: {s}"),
            SyntaxErrorKind::UnbalancedParen => f.write_str("unbalanced parenthesis"),
            SyntaxErrorKind::UnexpectedToken(t) => write!(f, "unexpected token `{t}`"),
            SyntaxErrorKind::UnexpectedEnd => f.write_str("unexpected end of input"),
            SyntaxErrorKind::UnknownOperator(op) => write!(f, "unknown operator `{op}`"),
            SyntaxErrorKind::ArityMismatch { op, expected, found } => {
                let noun = if *expected == 1 { "argument" } else { "arguments" };
                write!(f, "arity mismatch: `{op}` takes {expected} {noun}, got {found}")
            }
            SyntaxErrorKind::BadParameter(s) => write!(f, "bad parameter: {s}"),
            SyntaxErrorKind::WindowTooSmall(w) => write!(f, "window {w} is smaller than 2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct SyntaxError {
    pub kind: SyntaxErrorKind,
    /// Byte offset into the source text.
    pub offset: usize,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate record at line {line}: {key}")]
    DuplicateRecord { line: u64, key: String },

    #[error("empty input")]
    EmptyInput,

    #[error("field not found: {0}")]
    FieldNotFound(String),

    #[error(transparent)]
    Syntax(#[from] SyntaxError),

    #[error("expression depth {depth} exceeds cap {cap}")]
    DepthExceeded { depth: usize, cap: usize },

    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("infeasible {family} constraints: {detail}")]
    Infeasible { family: ConstraintFamily, detail: String },

    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("duplicate factor {0}")]
    DuplicateFactor(String),

    #[error("unresolved dependency {0}")]
    UnresolvedDependency(String),

    #[error("integrity error at line {line}: {message}")]
    Integrity { line: u64, message: String },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 data/config, 2 domain, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Cycle(_)
            | Error::Infeasible { .. }
            | Error::DuplicateFactor(_)
            | Error::UnresolvedDependency(_)
            | Error::DegenerateVariance(_)
            | Error::Estimation(_)
            | Error::Fit(_) => 2,
            Error::Invariant(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
