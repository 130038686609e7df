use thiserror::Error;

/// Errors raised by the simulator and analysis routines.
///
/// Variants split into two families: input validation failures (bad
/// configuration, malformed files, violated preconditions) and analysis
/// failures (a fit that did not converge, a measurement that could not be
/// completed). The CLI maps these to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unstable cavity geometry: geometric length {length_m} m must be below the mirror radius of curvature {roc_m} m")]
    UnstableGeometry { length_m: f64, roc_m: f64 },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("fit failed: {reason} (residual norm {residual_norm:e})")]
    FitFailed { reason: String, residual_norm: f64 },

    #[error("analysis failed: {0}")]
    Analysis(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the analysis itself rather than of its inputs.
    pub fn is_analysis_failure(&self) -> bool {
        matches!(self, Error::FitFailed { .. } | Error::Analysis(_))
    }

    /// Short machine-readable category used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::UnstableGeometry { .. } => "unstable_geometry",
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::Format(_) => "format",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::FitFailed { .. } => "fit_failed",
            Error::Analysis(_) => "analysis",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Rejects NaN and infinities with a named diagnostic.
pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(name, format!("must be finite, got {value}")))
    }
}
