//! Error type shared by every module of the toolkit.

/// Toolkit-wide error type.
///
/// The CLI maps `Validation` and `Assumption` to exit code 1 and
/// `Numerical` to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input: bad dimensions, unknown agent ids, schema violations.
    #[error("validation error: {0}")]
    Validation(String),

    /// A structural assumption required by the requested analysis does not
    /// hold for this scenario (e.g. a non-diagonalizable grounded Laplacian).
    #[error("assumption violation: {0}")]
    Assumption(String),

    /// A decomposition failed to converge or produced unusable output.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Assumption(_) | Error::Io(_) => 1,
            Error::Numerical(_) => 2,
        }
    }
}
