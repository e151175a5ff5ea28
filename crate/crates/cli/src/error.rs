use std::path::PathBuf;

use kinetofluid_core::Error as CoreError;

use crate::config::ConfigError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    /// Runtime failure not covered below (IO, non-finite values, failed
    /// verification suites).
    pub const FAILURE: i32 = 1;
    /// Invalid configuration, arguments or data refused by a validator.
    pub const VALIDATION: i32 = 2;
    /// No horizon in the contraction sweep reached a ratio below one half.
    pub const SWEEP_EXHAUSTED: i32 = 3;
    pub const CFL_ABORT: i32 = 4;
    pub const NON_CONVERGENCE: i32 = 5;
    /// A tracked norm left its bound: fixed-point ball, small-data bound,
    /// blow-up ceiling, velocity box or contraction estimate.
    pub const BOUND_ESCAPE: i32 = 6;
    pub const GOLDEN_MISMATCH: i32 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("fixed-point iteration stopped after {iterations} iterations without converging (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("no horizon in the sweep reached a contraction ratio below 0.5 (smallest {best})")]
    SweepExhausted { best: f64 },
    #[error("measured contraction ratio {ratio} exceeds the witnessed bound {bound} at T = {t}")]
    ContractionBound { t: f64, ratio: f64, bound: f64 },
    #[error("golden comparison failed:\n{0}")]
    Golden(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> Self {
        let path = path.into();
        move |source| CliError::Csv { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => exit::VALIDATION,
            CliError::Core(e) => match e {
                CoreError::InvalidParameter(_)
                | CoreError::Domain(_)
                | CoreError::GridMismatch(_)
                | CoreError::Mismatch(_)
                | CoreError::TooLarge(_) => exit::VALIDATION,
                CoreError::Cfl { .. } => exit::CFL_ABORT,
                CoreError::NonConvergence { .. } => exit::NON_CONVERGENCE,
                CoreError::BlowUp { .. }
                | CoreError::BallEscape { .. }
                | CoreError::BoundEscape { .. }
                | CoreError::FootOutOfRange { .. } => exit::BOUND_ESCAPE,
                CoreError::NonFinite(_) | CoreError::Degenerate(_) => exit::FAILURE,
            },
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Format { .. } => exit::FAILURE,
            CliError::NotConverged { .. } => exit::NON_CONVERGENCE,
            CliError::SweepExhausted { .. } => exit::SWEEP_EXHAUSTED,
            CliError::ContractionBound { .. } => exit::BOUND_ESCAPE,
            CliError::Golden(_) => exit::GOLDEN_MISMATCH,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
