//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation was given tensors whose shapes do not fit together.
    #[error("shape mismatch in `{op}`: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A value became NaN or infinite where the contract requires finiteness.
    #[error("non-finite value encountered: {context}")]
    NonFinite { context: String },

    /// An adaptive integrator shrank its step below the configured floor.
    /// This is the usual symptom of stiffness under an explicit method.
    #[error("step size underflow at t = {t:.6e} (h = {h:.6e} below floor {floor:.6e})")]
    StepUnderflow { t: f64, h: f64, floor: f64 },

    /// An integrator exceeded its step budget before reaching the end time.
    #[error("exceeded {max} integration steps at t = {t:.6e}")]
    MaxStepsExceeded { max: usize, t: f64 },

    /// A matrix required to be invertible is singular or nearly so.
    #[error("matrix is ill-conditioned: condition number estimate {cond:.3e} exceeds bound {bound:.3e}")]
    IllConditioned { cond: f64, bound: f64 },

    /// Training produced a non-finite loss.
    #[error("training diverged at iteration {iteration}: {context}")]
    Divergence { iteration: usize, context: String },

    /// A configuration value violates its documented constraints.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A data or config file failed to parse.
    #[error("parse error in {file} at line {line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    /// Filesystem failure, annotated with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of usage or IO.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::StepUnderflow { .. }
                | Error::MaxStepsExceeded { .. }
                | Error::IllConditioned { .. }
                | Error::Divergence { .. }
        )
    }
}
