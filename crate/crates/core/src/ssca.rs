//! Symmetric-key smart-card authentication.
//!
//! ```text
//! card -> server : C, E_K(C, R_c)
//! card <- server : E_K(C, R_s), C_s = HMAC_sk(S, C, R_s, R_c)
//! card -> server : C_c = HMAC_sk(C, S, R_c, R_s)
//! ```
//!
//! `K = HMAC(beta, C)` is recomputed by the server from its master secret and
//! stored on the card wrapped under the password. `sk = KDF(C, S, R_c, R_s)`.
//! The inner encryption carries no tag; the server's only check at step two is
//! that the decrypted identity equals the claimed one.

use rand::{CryptoRng, RngCore};
use zeroize::{Zeroize, ZeroizeOnDrop, Zeroizing};

use crate::card::QueryCounter;
use crate::chain_rng::RngState;
use crate::hash::{hmac, hmac_fields, kdf, stream_xor, tags_equal, unwrap_key, wrap_key, NONCE_LEN};
use crate::wire::{PayloadReader, PayloadWriter, ProtocolFrame, ProtocolId, MSG1, MSG2, MSG3};
use crate::{Error, Result, SessionKey};

pub const KEY_LEN: usize = 32;
pub const NONCE_SIZE: usize = NONCE_LEN;
const PROTOCOL: ProtocolId = ProtocolId::Ssca;

#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SscaMasterSecret([u8; KEY_LEN]);

impl SscaMasterSecret {
    pub fn new(bytes: [u8; KEY_LEN]) -> Self {
        SscaMasterSecret(bytes)
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; KEY_LEN];
        rng.fill_bytes(&mut bytes);
        SscaMasterSecret(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl std::fmt::Debug for SscaMasterSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SscaMasterSecret(..)")
    }
}

/// The card key `K = HMAC(beta, C)`.
pub fn card_key(master: &SscaMasterSecret, identity: &[u8]) -> [u8; KEY_LEN] {
    hmac(master.as_bytes(), identity)
}

/// `sk = KDF(C, S, R_c, R_s)`.
pub fn derive_session_secret(
    identity: &[u8],
    server_identity: &[u8],
    r_c: &[u8; 32],
    r_s: &[u8; 32],
) -> [u8; 32] {
    kdf(&[b"ssca-sk", identity, server_identity, r_c, r_s])
}

pub fn server_tag(sk: &[u8; 32], identity: &[u8], server_identity: &[u8], r_c: &[u8; 32], r_s: &[u8; 32]) -> [u8; 32] {
    hmac_fields(sk, &[server_identity, identity, r_s, r_c])
}

pub fn card_tag(sk: &[u8; 32], identity: &[u8], server_identity: &[u8], r_c: &[u8; 32], r_s: &[u8; 32]) -> [u8; 32] {
    hmac_fields(sk, &[identity, server_identity, r_c, r_s])
}

fn seal(key: &[u8; KEY_LEN], nonce: &[u8; NONCE_SIZE], identity: &[u8], random: &[u8; 32]) -> Vec<u8> {
    let mut buf = PayloadWriter::new().var(identity).fixed(random).finish();
    stream_xor(key, nonce, &mut buf);
    buf
}

/// Decrypts `E_K(C, R)`. Any key yields bytes; `None` only when they do not
/// even parse as an identity followed by a 32-byte random value.
pub fn open(key: &[u8; KEY_LEN], nonce: &[u8; NONCE_SIZE], ciphertext: &[u8]) -> Option<(Vec<u8>, [u8; 32])> {
    let mut buf = Zeroizing::new(ciphertext.to_vec());
    stream_xor(key, nonce, &mut buf);
    let mut r = PayloadReader::new(&buf);
    let identity = r.var().ok()?.to_vec();
    let random = r.array::<32>().ok()?;
    r.finish().ok()?;
    Some((identity, random))
}

/// Parsed first message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hello {
    pub identity: Vec<u8>,
    pub nonce: [u8; NONCE_SIZE],
    pub ciphertext: Vec<u8>,
}

impl Hello {
    pub fn parse(frame: &ProtocolFrame) -> Result<Self> {
        let mut r = PayloadReader::new(frame.expect(PROTOCOL, MSG1)?);
        let identity = r.var()?.to_vec();
        let nonce = r.array()?;
        let ciphertext = r.var()?.to_vec();
        r.finish()?;
        Ok(Hello {
            identity,
            nonce,
            ciphertext,
        })
    }

    pub fn to_frame(&self) -> ProtocolFrame {
        let payload = PayloadWriter::new()
            .var(&self.identity)
            .fixed(&self.nonce)
            .var(&self.ciphertext)
            .finish();
        ProtocolFrame::new(PROTOCOL, MSG1, payload)
    }
}

/// Parsed second message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reply {
    pub nonce: [u8; NONCE_SIZE],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; 32],
}

impl Reply {
    pub fn parse(frame: &ProtocolFrame) -> Result<Self> {
        let mut r = PayloadReader::new(frame.expect(PROTOCOL, MSG2)?);
        let nonce = r.array()?;
        let ciphertext = r.var()?.to_vec();
        let tag = r.array()?;
        r.finish()?;
        Ok(Reply { nonce, ciphertext, tag })
    }

    pub fn to_frame(&self) -> ProtocolFrame {
        let payload = PayloadWriter::new()
            .fixed(&self.nonce)
            .var(&self.ciphertext)
            .fixed(&self.tag)
            .finish();
        ProtocolFrame::new(PROTOCOL, MSG2, payload)
    }
}

pub fn parse_confirmation(frame: &ProtocolFrame) -> Result<[u8; 32]> {
    let mut r = PayloadReader::new(frame.expect(PROTOCOL, MSG3)?);
    let tag = r.array()?;
    r.finish()?;
    Ok(tag)
}

pub struct SscaCardCredential {
    identity: Vec<u8>,
    server_identity: Vec<u8>,
    wrapped_key: [u8; KEY_LEN],
    rng: RngState,
    counter: QueryCounter,
}

impl SscaCardCredential {
    pub fn personalize(
        master: &SscaMasterSecret,
        identity: &[u8],
        server_identity: &[u8],
        password: &[u8],
        rng: RngState,
        counter_limit: u32,
    ) -> Result<Self> {
        if identity.is_empty() {
            return Err(Error::EmptyIdentity);
        }
        let mut key = card_key(master, identity);
        let wrapped_key = wrap_key(password, &key);
        key.zeroize();
        Ok(SscaCardCredential {
            identity: identity.to_vec(),
            server_identity: server_identity.to_vec(),
            wrapped_key,
            rng,
            counter: QueryCounter::new(counter_limit),
        })
    }

    pub fn from_parts(
        identity: Vec<u8>,
        server_identity: Vec<u8>,
        wrapped_key: [u8; KEY_LEN],
        rng: RngState,
        counter: QueryCounter,
    ) -> Self {
        SscaCardCredential {
            identity,
            server_identity,
            wrapped_key,
            rng,
            counter,
        }
    }

    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    pub fn server_identity(&self) -> &[u8] {
        &self.server_identity
    }

    pub fn wrapped_key(&self) -> &[u8; KEY_LEN] {
        &self.wrapped_key
    }

    pub fn rng(&self) -> &RngState {
        &self.rng
    }

    pub fn counter(&self) -> QueryCounter {
        self.counter
    }

    /// Everything stored on the card, as an attacker who breaks the tamper
    /// resistance would read it.
    pub fn memory_image(&self) -> Vec<u8> {
        [
            &self.wrapped_key[..],
            self.rng.seed(),
            self.rng.chain_key(),
            &self.identity,
            &self.server_identity,
        ]
        .concat()
    }

    fn destroy(&mut self) {
        self.wrapped_key.zeroize();
        self.rng.erase();
    }

    /// Step one. Succeeds for any password; a wrong one only shows up at the server.
    pub fn start(&mut self, password: &[u8]) -> Result<(SscaCardSession, ProtocolFrame)> {
        if let Err(e) = self.counter.admit() {
            self.destroy();
            return Err(e);
        }
        let key = unwrap_key(password, &self.wrapped_key);
        let r_c = self.rng.next_block();
        let nonce_block = self.rng.next_block();
        let nonce: [u8; NONCE_SIZE] = nonce_block[..NONCE_SIZE].try_into().expect("12 <= 32");
        let hello = Hello {
            identity: self.identity.clone(),
            nonce,
            ciphertext: seal(&key, &nonce, &self.identity, &r_c),
        };
        let session = SscaCardSession {
            identity: self.identity.clone(),
            server_identity: self.server_identity.clone(),
            key,
            r_c,
        };
        Ok((session, hello.to_frame()))
    }
}

#[derive(Zeroize, ZeroizeOnDrop)]
pub struct SscaCardSession {
    identity: Vec<u8>,
    server_identity: Vec<u8>,
    key: [u8; KEY_LEN],
    r_c: [u8; 32],
}

impl SscaCardSession {
    /// Step three: check the server, answer with the card's tag.
    pub fn finish(
        self,
        cred: &mut SscaCardCredential,
        frame: &ProtocolFrame,
    ) -> Result<(ProtocolFrame, SessionKey)> {
        let reply = Reply::parse(frame)?;
        let (identity, r_s) = open(&self.key, &reply.nonce, &reply.ciphertext).ok_or(Error::ConfirmationFailed)?;
        if identity != self.identity {
            return Err(Error::ConfirmationFailed);
        }
        let sk = derive_session_secret(&self.identity, &self.server_identity, &self.r_c, &r_s);
        let expected = server_tag(&sk, &self.identity, &self.server_identity, &self.r_c, &r_s);
        if !tags_equal(&expected, &reply.tag) {
            return Err(Error::ConfirmationFailed);
        }
        cred.counter.record_success();
        let tag = card_tag(&sk, &self.identity, &self.server_identity, &self.r_c, &r_s);
        Ok((ProtocolFrame::new(PROTOCOL, MSG3, tag.to_vec()), SessionKey::from_bytes(sk)))
    }
}

pub struct SscaServer {
    master: SscaMasterSecret,
    identity: Vec<u8>,
}

impl SscaServer {
    pub fn new(master: SscaMasterSecret, identity: &[u8]) -> Self {
        SscaServer {
            master,
            identity: identity.to_vec(),
        }
    }

    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    /// Step two. Every failure is reported as an error that the transport turns
    /// into the same opaque reject frame.
    pub fn respond<R: RngCore + CryptoRng>(
        &self,
        frame: &ProtocolFrame,
        rng: &mut R,
    ) -> Result<(SscaServerSession, ProtocolFrame)> {
        let hello = Hello::parse(frame)?;
        if hello.identity.is_empty() {
            return Err(Error::IdentityMismatch);
        }
        let key = card_key(&self.master, &hello.identity);
        let (identity, r_c) = open(&key, &hello.nonce, &hello.ciphertext).ok_or(Error::IdentityMismatch)?;
        if identity != hello.identity {
            return Err(Error::IdentityMismatch);
        }
        let mut r_s = [0u8; 32];
        rng.fill_bytes(&mut r_s);
        let mut nonce = [0u8; NONCE_SIZE];
        rng.fill_bytes(&mut nonce);
        let sk = derive_session_secret(&identity, &self.identity, &r_c, &r_s);
        let reply = Reply {
            nonce,
            ciphertext: seal(&key, &nonce, &identity, &r_s),
            tag: server_tag(&sk, &identity, &self.identity, &r_c, &r_s),
        };
        let session = SscaServerSession {
            identity,
            server_identity: self.identity.clone(),
            r_c,
            r_s,
            sk,
        };
        Ok((session, reply.to_frame()))
    }
}

#[derive(Zeroize, ZeroizeOnDrop)]
pub struct SscaServerSession {
    identity: Vec<u8>,
    server_identity: Vec<u8>,
    r_c: [u8; 32],
    r_s: [u8; 32],
    sk: [u8; 32],
}

impl SscaServerSession {
    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    /// Step four: accept iff the card's tag verifies.
    pub fn finish(self, frame: &ProtocolFrame) -> Result<SessionKey> {
        let tag = parse_confirmation(frame)?;
        let expected = card_tag(&self.sk, &self.identity, &self.server_identity, &self.r_c, &self.r_s);
        if !tags_equal(&expected, &tag) {
            return Err(Error::ConfirmationFailed);
        }
        Ok(SessionKey::from_bytes(self.sk))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const C: &[u8] = b"card-0001";
    const S: &[u8] = b"auth.example";

    fn setup(limit: u32) -> (SscaServer, SscaCardCredential) {
        let master = SscaMasterSecret::new([42; 32]);
        let card = SscaCardCredential::personalize(&master, C, S, b"correct horse", RngState::new([1; 32], [2; 32]), limit).unwrap();
        (SscaServer::new(master, S), card)
    }

    #[test]
    fn personalization_wraps_the_card_key() {
        let master = SscaMasterSecret::new([42; 32]);
        let (_, card) = setup(0);
        assert_eq!(unwrap_key(b"correct horse", card.wrapped_key()), card_key(&master, C));
        assert_ne!(unwrap_key(b"wrong horse", card.wrapped_key()), card_key(&master, C));
        assert_ne!(card_key(&master, b"card-0002"), card_key(&master, C));
        assert!(!card.memory_image().windows(32).any(|w| w == card_key(&master, C)));
    }

    #[test]
    fn empty_identity_is_refused() {
        let master = SscaMasterSecret::new([42; 32]);
        let r = SscaCardCredential::personalize(&master, b"", S, b"pw", RngState::new([1; 32], [2; 32]), 0);
        assert!(matches!(r, Err(Error::EmptyIdentity)));
    }

    #[test]
    fn honest_run_agrees_on_the_session_key() {
        let (server, mut card) = setup(0);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (cs, f1) = card.start(b"correct horse").unwrap();
        let (ss, f2) = server.respond(&f1, &mut rng).unwrap();
        let (f3, card_key) = cs.finish(&mut card, &f2).unwrap();
        let server_key = ss.finish(&f3).unwrap();
        assert_eq!(card_key, server_key);
    }

    #[test]
    fn server_decrypts_the_card_nonce() {
        let master = SscaMasterSecret::new([42; 32]);
        let (_, mut card) = setup(0);
        let mut replica = card.rng().clone();
        let r_c = replica.next_block();
        let (_, f1) = card.start(b"correct horse").unwrap();
        let hello = Hello::parse(&f1).unwrap();
        let (id, random) = open(&card_key(&master, C), &hello.nonce, &hello.ciphertext).unwrap();
        assert_eq!(id, C);
        assert_eq!(random, r_c);
    }

    #[test]
    fn wrong_password_is_rejected_by_the_server() {
        let (server, mut card) = setup(0);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (_, f1) = card.start(b"wrong horse").unwrap();
        assert_eq!(server.respond(&f1, &mut rng).err(), Some(Error::IdentityMismatch));
    }

    #[test]
    fn garbled_ciphertext_is_rejected() {
        let (server, mut card) = setup(0);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (_, mut f1) = card.start(b"correct horse").unwrap();
        let last = f1.payload.len() - 40;
        f1.payload[last] ^= 0x80;
        assert!(server.respond(&f1, &mut rng).is_err());
    }

    #[test]
    fn replayed_hello_gets_a_fresh_server_nonce() {
        let (server, mut card) = setup(0);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (_, f1) = card.start(b"correct horse").unwrap();
        let (_, a) = server.respond(&f1, &mut rng).unwrap();
        let (_, b) = server.respond(&f1, &mut rng).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn replayed_reply_fails_confirmation() {
        let (server, mut card) = setup(0);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (cs, f1) = card.start(b"correct horse").unwrap();
        let (_, old_f2) = server.respond(&f1, &mut rng).unwrap();
        drop(cs);
        let (cs2, _) = card.start(b"correct horse").unwrap();
        assert_eq!(cs2.finish(&mut card, &old_f2).err(), Some(Error::ConfirmationFailed));
    }

    #[test]
    fn flipped_server_tag_fails_confirmation() {
        let (server, mut card) = setup(0);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (cs, f1) = card.start(b"correct horse").unwrap();
        let (_, mut f2) = server.respond(&f1, &mut rng).unwrap();
        *f2.payload.last_mut().unwrap() ^= 1;
        assert_eq!(cs.finish(&mut card, &f2).err(), Some(Error::ConfirmationFailed));
    }

    #[test]
    fn truncated_confirmation_is_rejected() {
        let (server, mut card) = setup(0);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (cs, f1) = card.start(b"correct horse").unwrap();
        let (ss, f2) = server.respond(&f1, &mut rng).unwrap();
        let (mut f3, _) = cs.finish(&mut card, &f2).unwrap();
        f3.payload.pop();
        assert!(ss.finish(&f3).is_err());
    }

    #[test]
    fn counter_destroys_the_card() {
        let (_, mut card) = setup(3);
        for _ in 0..3 {
            card.start(b"guess").unwrap();
        }
        assert_eq!(card.start(b"guess").err(), Some(Error::CardDestroyed));
        assert_eq!(card.wrapped_key(), &[0u8; 32]);
        assert_eq!(card.rng().seed(), &[0u8; 32]);
    }

    #[test]
    fn successful_run_resets_the_counter() {
        let (server, mut card) = setup(2);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..5 {
            let (cs, f1) = card.start(b"correct horse").unwrap();
            let (_, f2) = server.respond(&f1, &mut rng).unwrap();
            cs.finish(&mut card, &f2).unwrap();
        }
        assert_eq!(card.counter().used(), 0);
    }
}
