use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration field violates its invariant.
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    /// Several configuration fields violate their invariants.
    #[error("invalid configuration: {}", issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect::<Vec<_>>().join("; "))]
    Invalid { issues: Vec<crate::model::Issue> },

    /// Fold index has an empty admissible sampling-rate interval.
    #[error(
        "fold index {fold_index} is infeasible for band [{f_low_hz} Hz, {f_high_hz} Hz]; \
         largest feasible fold index is {max_fold_index}"
    )]
    InfeasibleFold {
        f_low_hz: f64,
        f_high_hz: f64,
        fold_index: u32,
        max_fold_index: u32,
    },

    /// A folded frequency has zero or several pre-images inside the band.
    #[error("ambiguous de-aliasing: {} candidate(s) in band: {candidates:?}", candidates.len())]
    Ambiguous { candidates: Vec<f64> },

    /// The input cannot support a meaningful fit.
    #[error("fit rejected: {0}")]
    FitRejected(String),

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations (last iterate {last:?})")]
    NonConvergence { iterations: usize, last: Vec<f64> },

    /// The input carries no information (e.g. an all-zero trace).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
