use std::fmt;

use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::hash::{kdf, tags_equal};

/// 32-byte session key agreed by a completed handshake.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct SessionKey([u8; 32]);

impl SessionKey {
    pub(crate) fn from_bytes(bytes: [u8; 32]) -> Self {
        SessionKey(bytes)
    }

    /// Derives the session key from an encoded shared secret.
    pub(crate) fn derive(shared_secret: &[u8]) -> Self {
        SessionKey(kdf(&[b"session", shared_secret]))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Public 8-byte fingerprint of the key, safe to print or compare over the wire.
    pub fn check_value(&self) -> [u8; 8] {
        let digest = kdf(&[b"check", &self.0]);
        digest[..8].try_into().expect("digest has 32 bytes")
    }

    pub fn check_hex(&self) -> String {
        self.check_value().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl PartialEq for SessionKey {
    fn eq(&self, other: &Self) -> bool {
        tags_equal(&self.0, &other.0)
    }
}

impl Eq for SessionKey {}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionKey(check={})", self.check_hex())
    }
}
