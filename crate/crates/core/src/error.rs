use thiserror::Error;

use crate::transport::FrameError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("rate is undefined: {0}")]
    UndefinedRate(&'static str),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("channel error: {0}")]
    Channel(String),

    #[error(transparent)]
    Frame(#[from] FrameError),

    #[error("key file: {0}")]
    KeyFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for failures of the link itself, as opposed to a peer that
    /// misbehaved or a bad configuration.
    pub fn is_channel(&self) -> bool {
        matches!(self, Error::Channel(_) | Error::Io(_)) || matches!(self, Error::Frame(FrameError::Incomplete { .. }))
    }
}
