//! Error type shared across the crate.

use crate::data::TriggerMode;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("estimator requires a {expected:?} dataset but got {found:?}")]
    ModeMismatch {
        expected: TriggerMode,
        found: TriggerMode,
    },

    /// Perfect (or quasi-perfect) separation in a logistic fit, detected by a
    /// diverging coefficient norm. Carries the unit direction the
    /// coefficients were escaping along.
    #[error("perfect separation detected in logistic fit (coefficient norm exceeded threshold)")]
    Separation { direction: Vec<f64> },

    #[error("rank-deficient design matrix: {0}")]
    RankDeficient(String),

    #[error("entropy balance infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("bootstrap resample {resample} was degenerate after {attempts} redraw attempts")]
    DegenerateResamples { resample: usize, attempts: usize },

    #[error("score fit failed in bootstrap resample {resample}: {source}")]
    ScoreFit {
        resample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("study trial {trial} failed: {source}")]
    StudyTrial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit code for the CLI: 1 for validation/input problems,
    /// 2 for numerical failures (separation, infeasibility, divergence).
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Separation { .. }
            | Error::RankDeficient(_)
            | Error::Infeasible(_)
            | Error::Numerical(_)
            | Error::DegenerateResamples { .. } => 2,
            Error::ScoreFit { source, .. } => source.exit_code(),
            Error::StudyTrial { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
