use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    Argument { name: &'static str, reason: String },

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// The state is not a pure state on the x-z great circle.
    #[error("state outside the pure x-z manifold: {quantity} = {value:e}")]
    Domain { quantity: &'static str, value: f64 },

    #[error("non-finite state")]
    NonFinite,

    /// An eigenvalue of the density matrix dropped below the clamp window.
    #[error("positivity lost: minimum eigenvalue {min_eigenvalue:e}")]
    Positivity { min_eigenvalue: f64 },

    #[error("integration failed at step {step}: {source}")]
    Integration { step: usize, source: Box<Error> },

    #[error("path {path_id} failed: {source}")]
    Path { path_id: u64, source: Box<Error> },
}

impl Error {
    pub(crate) fn argument(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Argument { name, reason: reason.into() }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }

    /// True for configuration and argument errors, as opposed to numerical failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Argument { .. } | Error::Config { .. })
    }

    /// Step index for integration failures, looking through path wrappers.
    pub fn step(&self) -> Option<usize> {
        match self {
            Error::Integration { step, .. } => Some(*step),
            Error::Path { source, .. } => source.step(),
            _ => None,
        }
    }

    pub fn path_id(&self) -> Option<u64> {
        match self {
            Error::Path { path_id, .. } => Some(*path_id),
            _ => None,
        }
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::argument(name, format!("must be finite, got {value}")))
    }
}
