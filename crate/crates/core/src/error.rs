use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid traces: {0}")]
    Validation(String),

    #[error("unsupported public-input dimension {0}: only a single public column is supported")]
    UnsupportedDimension(usize),

    #[error("under-determined fit{}: {points} distinct points for {n_basis} basis functions",
        .context.as_ref().map(|c| format!(" for {c}")).unwrap_or_default())]
    UnderDetermined {
        points: usize,
        n_basis: usize,
        context: Option<String>,
    },

    #[error("value {value} outside domain [{lo}, {hi}]")]
    OutsideDomain { value: f64, lo: f64, hi: f64 },

    #[error("domain mismatch: [{}, {}] vs [{}, {}]", .left.0, .left.1, .right.0, .right.1)]
    DomainMismatch { left: (f64, f64), right: (f64, f64) },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("no partition with at most {max_clusters} clusters separates all cannot-link pairs (first violated pair: {}, {})", .pair.0, .pair.1)]
    Infeasible {
        max_clusters: usize,
        pair: (usize, usize),
    },

    #[error("unsupported norm for this algorithm: {0}")]
    UnsupportedNorm(String),

    #[error("threat model violation: {0}")]
    ThreatModel(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent user input.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::UnsupportedDimension(_)
                | Error::UnderDetermined { .. }
                | Error::OutsideDomain { .. }
                | Error::DomainMismatch { .. }
                | Error::InvalidSpec(_)
                | Error::Empty(_)
                | Error::Json(_)
                | Error::Io(_)
                | Error::Generation(_)
                | Error::ThreatModel(_)
                | Error::UnsupportedNorm(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
