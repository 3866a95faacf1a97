use alloc::string::String;
use core::fmt;

/// Errors raised by tensor shape checks and API misuse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Incompatible shapes; the message names the offending axes.
    Dim(String),
    /// A contract precondition was violated (non-scalar loss, missing grad, ...).
    Contract(String),
    /// Invalid model or run configuration.
    Config(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dim(m) => write!(f, "dimension error: {m}"),
            Error::Contract(m) => write!(f, "contract error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

#[macro_export]
macro_rules! dim_err {
    ($($arg:tt)*) => {
        $crate::Error::Dim(alloc::format!($($arg)*))
    };
}

#[macro_export]
macro_rules! contract_err {
    ($($arg:tt)*) => {
        $crate::Error::Contract(alloc::format!($($arg)*))
    };
}
