use thiserror::Error;

use crate::hash::HashRole;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid group configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("elements belong to different group suites")]
    SuiteMismatch,
    #[error("scalar is not invertible")]
    NotInvertible,
    #[error("hash role {0:?} cannot be used here")]
    WrongRole(HashRole),
    #[error("hash rejection sampling exhausted")]
    HashExhausted,
    #[error("element is not in the prime-order subgroup")]
    NonSubgroupElement,
    #[error("malformed encoding")]
    InvalidEncoding,
    #[error("identity must not be empty")]
    EmptyIdentity,

    #[error("card destroyed")]
    CardDestroyed,
    #[error("identity mismatch")]
    IdentityMismatch,
    #[error("unknown identity")]
    UnknownIdentity,
    #[error("key confirmation failed")]
    ConfirmationFailed,
    #[error("unexpected message type {0:#04x}")]
    UnexpectedMessage(u8),
    #[error("peer rejected the session")]
    Rejected,

    #[error("truncated frame")]
    Truncated,
    #[error("unsupported frame version {0:#04x}")]
    BadVersion(u8),
    #[error("unknown protocol id {0:#04x}")]
    UnknownProtocol(u8),
    #[error("frame length does not match payload")]
    LengthMismatch,
    #[error("frame payload exceeds the maximum size")]
    PayloadTooLarge,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("scenario `{scenario}` does not apply to {protocol}")]
    NotApplicable {
        scenario: String,
        protocol: &'static str,
    },
    #[error("attacker model {model} lacks the capability `{capability}`")]
    ModelMismatch {
        model: String,
        capability: &'static str,
    },
    #[error("invalid dictionary: {0}")]
    InvalidDictionary(&'static str),
}
