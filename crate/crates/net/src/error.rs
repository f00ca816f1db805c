use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("rejected")]
    Rejected,
    #[error("card destroyed")]
    CardDestroyed,
    #[error("protocol error: {0}")]
    Protocol(scauth::Error),
    #[error("network error: {0}")]
    Network(#[source] io::Error),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed server store, line {line}: {reason}")]
    Store { line: usize, reason: &'static str },
    #[error("malformed card image: {0}")]
    Image(&'static str),
    #[error("{0}")]
    Usage(String),
}

impl NetError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            NetError::Rejected | NetError::Protocol(_) => 2,
            NetError::Network(_) => 4,
            NetError::CardDestroyed => 5,
            NetError::File { .. } | NetError::Store { .. } | NetError::Image(_) | NetError::Usage(_) => 3,
        }
    }

    pub(crate) fn file(path: &std::path::Path, source: io::Error) -> Self {
        NetError::File {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<scauth::Error> for NetError {
    fn from(e: scauth::Error) -> Self {
        match e {
            scauth::Error::CardDestroyed => NetError::CardDestroyed,
            scauth::Error::Rejected | scauth::Error::ConfirmationFailed => NetError::Rejected,
            other => NetError::Protocol(other),
        }
    }
}

pub type NetResult<T> = std::result::Result<T, NetError>;
