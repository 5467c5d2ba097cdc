use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs that violate a documented precondition (shapes, ranges, file contents).
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("rotation matrix is not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("infeasible squeeze: contact {contact} reaches {achieved:.6} N, needs {required:.6} N")]
    InfeasibleSqueeze {
        contact: usize,
        achieved: f64,
        required: f64,
    },

    #[error("squeeze depth {depth} m exceeds object inradius {inradius} m")]
    SqueezeTooDeep { depth: f64, inradius: f64 },

    #[error("episode did not converge after {steps} outer steps (rotation error {error_rad:.6} rad)")]
    NotConverged { steps: usize, error_rad: f64 },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("series of length {len} is too short for window {r} and horizon {m}")]
    SeriesTooShort { len: usize, r: usize, m: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. } | Error::Diverged { .. } | Error::InfeasibleSqueeze { .. }
        )
    }
}

pub(crate) fn check_len(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            expected,
            actual,
            context,
        });
    }
    Ok(())
}
