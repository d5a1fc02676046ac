use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("wrench expressed in the {found:?} frame, expected {expected:?}")]
    FrameMismatch {
        expected: crate::rigid_body::Frame,
        found: crate::rigid_body::Frame,
    },

    #[error("cholesky factorization failed: {0}")]
    Cholesky(String),

    #[error("model is not fitted")]
    Unfitted,

    #[error("episode diverged at t = {time:.3} s")]
    Unstable { time: f64 },

    #[error("{0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed artifact: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
