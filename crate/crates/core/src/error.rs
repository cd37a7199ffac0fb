use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on an argument was violated.
    Argument(String),
    /// Two volumes that must share a grid do not.
    ShapeMismatch { left: [usize; 3], right: [usize; 3] },
    /// A NaN or infinity appeared where finite values are required.
    NonFinite { index: usize },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Argument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ShapeMismatch { left, right } => {
                write!(f, "shape mismatch: {left:?} vs {right:?}")
            }
            Error::NonFinite { index } => write!(f, "non-finite value at linear index {index}"),
        }
    }
}

impl core::error::Error for Error {}
