use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Variants split into two families: bad inputs (the caller handed us
/// something that violates a precondition) and numerical failures (inputs
/// were well-formed but the computation could not produce a trustworthy
/// value). [`Error::is_numerical`] tells them apart.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("need at least {needed} samples in {what}, got {got}")]
    InsufficientSamples {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("input too large for the reference implementation: {got} samples (limit {limit})")]
    SizePolicy { limit: usize, got: usize },

    #[error("degenerate bandwidth: all pooled points coincide")]
    DegenerateBandwidth,

    #[error("linear system is singular or not positive definite")]
    SingularSystem,

    #[error("linear system is ill-conditioned (condition estimate {0:.3e})")]
    IllConditioned(f64),

    #[error("singular coverage calibration: {0}")]
    Singularity(&'static str),
}

impl Error {
    /// `true` when the failure is numerical rather than a malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateBandwidth
                | Error::SingularSystem
                | Error::IllConditioned(_)
                | Error::Singularity(_)
        )
    }

    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_unit_open(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, value, "must lie in (0, 1)"))
    }
}

pub(crate) fn check_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            value,
            "must be finite and nonnegative",
        ))
    }
}

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}
