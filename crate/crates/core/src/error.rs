use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("matrix is not Schur stable (spectral radius {radius:.6e})")]
    NotSchur { radius: f64 },

    #[error("regulator equations unsolvable (residual {residual:.3e})")]
    RegulatorUnsolvable { residual: f64 },

    #[error("matrix is singular or numerically rank deficient")]
    Singular,

    #[error("aperiodic exosystem: {0}")]
    Aperiodic(String),

    #[error("admissible set not finitely determined within {k_cap} iterations ({pending_rows} rows still active)")]
    NotFinitelyDetermined { k_cap: usize, pending_rows: usize },

    #[error("infeasible tightening: admissible set is empty")]
    InfeasibleTightening,

    #[error("MPC problem initially infeasible; violated rows: {violated:?}")]
    InitiallyInfeasible { violated: Vec<(usize, f64)> },

    #[error("property violation: {0}")]
    PropertyViolation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("run aborted at step {step} (agent {agent}): {source}")]
    Aborted {
        step: usize,
        agent: usize,
        source: Box<Error>,
        /// JSON dump of the step state.
        context: String,
    },
}

impl Error {
    /// Whether the error comes from the configuration rather than the run.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Aborted { .. } | Error::Io(_) | Error::PropertyViolation(_) | Error::Numeric(_)
        )
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
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
        Error::Config(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
