use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a numerical routine.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// A data file failed to parse; `row` is 1-based and counts the header.
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// The rejection sampler could not accept draws at a usable rate.
    #[error("sampler degeneracy: acceptance rate {rate:.2e} after {proposals} proposals")]
    SamplerDegeneracy { rate: f64, proposals: u64 },

    /// Propensity-score stratification could not be completed.
    #[error("stratification failed: {0}")]
    Stratification(String),

    /// A balance diagnostic is undefined for the given weights.
    #[error("diagnostic unavailable: {0}")]
    DiagnosticUnavailable(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that mean "the chosen method could not produce a
    /// result on this data" rather than "the input was bad".
    pub fn is_method_failure(&self) -> bool {
        matches!(
            self,
            Error::SamplerDegeneracy { .. } | Error::Stratification(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
