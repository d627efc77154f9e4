use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A test function produced a non-finite value.
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    /// The state grid does not cover the mass of the remaining noise.
    #[error("grid extent too small: {reason} (try grid_halfwidth_multiplier >= {suggested_multiplier})")]
    GridExtent {
        reason: String,
        suggested_multiplier: f64,
    },

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("bracket failure: {0}")]
    Bracket(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad inputs rather than by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::NotImplemented(_))
    }
}
