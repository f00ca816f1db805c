//! Domain-separated hash family, HMAC, KDF and the password key-wrap.
//!
//! Every role uses SHA-256 over `tag || len(f1) || f1 || len(f2) || f2 ...`
//! with 4-byte big-endian field lengths, so inputs of different roles (or a
//! different split of the same bytes into fields) never collide.

use chacha20::cipher::{KeyIvInit, StreamCipher};
use chacha20::ChaCha20;
use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};

/// Identifier of the single hash the suite is built on.
pub const HASH_ID_SHA256: u8 = 0x01;

pub const DIGEST_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;

pub type Digest32 = [u8; DIGEST_LEN];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HashRole {
    /// Identity strings to group elements.
    HashToGroup,
    /// The verifier protocol's per-user generator, keyed with the master secret.
    KeyedUserGenerator,
    /// Password to the blinding exponent of the identity-based card key.
    HashToScalar,
    /// Password to the verifier exponent stored server-side.
    VerifierScalar,
    /// Password to the exponent blinding the generator stored on a card.
    BlindingScalar,
    /// Ordered pair of ephemerals (or a transcript) to an exponent.
    Pi,
    /// Session-key and confirmation-key derivation.
    Kdf,
    /// Confirmation tags of the verifier protocol.
    SessionKey,
    /// Password to key-wrap key.
    Wrap,
}

impl HashRole {
    pub const fn tag(self) -> &'static [u8] {
        match self {
            HashRole::HashToGroup => b"scauth/v1/hash-to-group",
            HashRole::KeyedUserGenerator => b"scauth/v1/keyed-user-generator",
            HashRole::HashToScalar => b"scauth/v1/hash-to-scalar",
            HashRole::VerifierScalar => b"scauth/v1/verifier-scalar",
            HashRole::BlindingScalar => b"scauth/v1/blinding-scalar",
            HashRole::Pi => b"scauth/v1/pi",
            HashRole::Kdf => b"scauth/v1/kdf",
            HashRole::SessionKey => b"scauth/v1/session-key",
            HashRole::Wrap => b"scauth/v1/wrap",
        }
    }

    pub const ALL: [HashRole; 9] = [
        HashRole::HashToGroup,
        HashRole::KeyedUserGenerator,
        HashRole::HashToScalar,
        HashRole::VerifierScalar,
        HashRole::BlindingScalar,
        HashRole::Pi,
        HashRole::Kdf,
        HashRole::SessionKey,
        HashRole::Wrap,
    ];
}

fn absorb_fields(hasher: &mut impl FnMut(&[u8]), fields: &[&[u8]]) {
    for field in fields {
        hasher(&(field.len() as u32).to_be_bytes());
        hasher(field);
    }
}

/// SHA-256 over a role tag and length-prefixed fields.
pub fn role_digest(role: HashRole, fields: &[&[u8]]) -> Digest32 {
    let mut hasher = Sha256::new();
    let tag = role.tag();
    hasher.update((tag.len() as u32).to_be_bytes());
    hasher.update(tag);
    absorb_fields(&mut |b| hasher.update(b), fields);
    hasher.finalize().into()
}

pub fn hmac(key: &[u8], msg: &[u8]) -> Digest32 {
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(msg);
    mac.finalize().into_bytes().into()
}

/// HMAC over length-prefixed fields.
pub fn hmac_fields(key: &[u8], fields: &[&[u8]]) -> Digest32 {
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("HMAC accepts any key length");
    absorb_fields(&mut |b| mac.update(b), fields);
    mac.finalize().into_bytes().into()
}

/// Tag comparison that does not short-circuit on the first differing byte.
pub fn tags_equal(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn kdf(fields: &[&[u8]]) -> Digest32 {
    role_digest(HashRole::Kdf, fields)
}

/// XORs the ChaCha20 keystream for `(key, nonce)` into `buf`.
pub fn stream_xor(key: &Digest32, nonce: &[u8; NONCE_LEN], buf: &mut [u8]) {
    let mut cipher = ChaCha20::new(key.into(), nonce.into());
    cipher.apply_keystream(buf);
}

/// Encrypts a 32-byte key under a password.
///
/// There is no integrity tag: unwrapping with any password yields 32 bytes,
/// so the wrapped value alone never tells a guessed password apart from the
/// real one.
pub fn wrap_key(password: &[u8], plain: &Digest32) -> Digest32 {
    let key = role_digest(HashRole::Wrap, &[password]);
    let mut out = *plain;
    stream_xor(&key, &[0u8; NONCE_LEN], &mut out);
    out
}

pub fn unwrap_key(password: &[u8], wrapped: &Digest32) -> Digest32 {
    wrap_key(password, wrapped)
}
