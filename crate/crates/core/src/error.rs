use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core algorithms.
///
/// `DimensionMismatch` and `Layout` are structural errors (inputs of
/// incompatible shape); `TooFew`, `Empty` and `InvalidParameter` are usage
/// errors (a precondition on the arguments does not hold); `NonFinite` means a
/// computation produced NaN or infinity.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what}: need at least {needed}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model layout mismatch: expected {expected} parameters, found {found}")]
    Layout { expected: usize, found: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for the structural class of errors (shape/layout disagreements).
    pub fn is_structural(&self) -> bool {
        matches!(self, Error::DimensionMismatch { .. } | Error::Layout { .. })
    }
}
