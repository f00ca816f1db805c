//! Password-verifier card authentication.
//!
//! The server keeps, per user, a secret generator `g_C` (derived from `C` and
//! the password under a keyed hash) and the verifier `V = g_C^a` with
//! `a = H_a(alpha)`. The card keeps only `W = g_C^b` with `b = H_b(alpha)`.
//!
//! ```text
//! card -> server : C, R_A = (W^(1/b))^x
//! card <- server : R_B = g_C^y
//! card -> server : C_c = H(sk, C, S, R_A, R_B)
//! card <- server : C_s = H(sk, S, C, R_B, R_A)
//! ```
//!
//! with `u = pi(C, S, R_A, R_B)` and `sk = R_B^(x + u*a) = (R_A * V^u)^y`.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::adversary::LabHarness;
use crate::card::{draw_scalar, QueryCounter};
use crate::chain_rng::RngState;
use crate::group::{GroupConfig, GroupElement, Scalar};
use crate::hash::{hmac_fields, role_digest, tags_equal, HashRole};
use crate::wire::{
    hello_frame, parse_hello, parse_reply, parse_reply_with_confirmation, parse_tag, PayloadWriter, ProtocolFrame,
    ProtocolId, MSG2, MSG2_WITH_CONFIRMATION, MSG3, MSG4,
};
use crate::{Error, Result, SessionKey};

const PROTOCOL: ProtocolId = ProtocolId::Pscav;
pub const MASTER_LEN: usize = 32;

#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct PscavMasterSecret([u8; MASTER_LEN]);

impl PscavMasterSecret {
    pub fn new(bytes: [u8; MASTER_LEN]) -> Self {
        PscavMasterSecret(bytes)
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; MASTER_LEN];
        rng.fill_bytes(&mut bytes);
        PscavMasterSecret(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; MASTER_LEN] {
        &self.0
    }
}

impl std::fmt::Debug for PscavMasterSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PscavMasterSecret(..)")
    }
}

/// The user's secret generator, unpredictable without the master secret.
pub fn user_generator(
    config: &GroupConfig,
    master: &PscavMasterSecret,
    identity: &[u8],
    password: &[u8],
) -> Result<GroupElement> {
    let keyed = hmac_fields(master.as_bytes(), &[identity, password]);
    config.hash_to_group(HashRole::KeyedUserGenerator, &[&keyed])
}

/// `a = H_a(alpha)`, the exponent behind the server's verifier.
pub fn verifier_scalar(config: &GroupConfig, password: &[u8]) -> Result<Scalar> {
    config.hash_to_scalar(HashRole::VerifierScalar, &[password])
}

/// `b = H_b(alpha)`, the exponent blinding the generator stored on the card.
pub fn blinding_scalar(config: &GroupConfig, password: &[u8]) -> Result<Scalar> {
    config.hash_to_scalar(HashRole::BlindingScalar, &[password])
}

/// `u = pi(C, S, R_A, R_B)`.
pub fn transcript_scalar(
    config: &GroupConfig,
    identity: &[u8],
    server_identity: &[u8],
    r_a: &GroupElement,
    r_b: &GroupElement,
) -> Result<Scalar> {
    config.hash_to_scalar(HashRole::Pi, &[identity, server_identity, &r_a.to_bytes(), &r_b.to_bytes()])
}

pub fn card_confirmation(sk: &GroupElement, identity: &[u8], server_identity: &[u8], r_a: &GroupElement, r_b: &GroupElement) -> [u8; 32] {
    role_digest(
        HashRole::SessionKey,
        &[&sk.to_bytes(), identity, server_identity, &r_a.to_bytes(), &r_b.to_bytes()],
    )
}

pub fn server_confirmation(sk: &GroupElement, identity: &[u8], server_identity: &[u8], r_a: &GroupElement, r_b: &GroupElement) -> [u8; 32] {
    role_digest(
        HashRole::SessionKey,
        &[&sk.to_bytes(), server_identity, identity, &r_b.to_bytes(), &r_a.to_bytes()],
    )
}

/// What the server stores for one user.
#[derive(Clone, PartialEq, Eq)]
pub struct PscavServerRecord {
    identity: Vec<u8>,
    user_generator: GroupElement,
    verifier: GroupElement,
}

impl PscavServerRecord {
    pub fn from_parts(identity: Vec<u8>, user_generator: GroupElement, verifier: GroupElement) -> Result<Self> {
        let config = user_generator.config();
        config.validate_peer_element(&user_generator)?;
        config.validate_peer_element(&verifier)?;
        Ok(PscavServerRecord {
            identity,
            user_generator,
            verifier,
        })
    }

    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    pub fn user_generator(&self) -> GroupElement {
        self.user_generator
    }

    pub fn verifier(&self) -> GroupElement {
        self.verifier
    }
}

impl std::fmt::Debug for PscavServerRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PscavServerRecord")
            .field("identity", &String::from_utf8_lossy(&self.identity))
            .finish_non_exhaustive()
    }
}

pub struct PscavCardCredential {
    config: GroupConfig,
    identity: Vec<u8>,
    server_identity: Vec<u8>,
    blinded_generator: GroupElement,
    rng: RngState,
    counter: QueryCounter,
}

/// Issues a card and the matching server record.
pub fn personalize(
    config: &GroupConfig,
    master: &PscavMasterSecret,
    identity: &[u8],
    server_identity: &[u8],
    password: &[u8],
    rng: RngState,
    counter_limit: u32,
) -> Result<(PscavCardCredential, PscavServerRecord)> {
    if identity.is_empty() || server_identity.is_empty() {
        return Err(Error::EmptyIdentity);
    }
    let g_c = user_generator(config, master, identity, password)?;
    let record = PscavServerRecord::from_parts(identity.to_vec(), g_c, g_c.exp(&verifier_scalar(config, password)?))?;
    let card = PscavCardCredential {
        config: *config,
        identity: identity.to_vec(),
        server_identity: server_identity.to_vec(),
        blinded_generator: g_c.exp(&blinding_scalar(config, password)?),
        rng,
        counter: QueryCounter::new(counter_limit),
    };
    Ok((card, record))
}

impl PscavCardCredential {
    pub fn from_parts(
        config: GroupConfig,
        identity: Vec<u8>,
        server_identity: Vec<u8>,
        blinded_generator: GroupElement,
        rng: RngState,
        counter: QueryCounter,
    ) -> Self {
        PscavCardCredential {
            config,
            identity,
            server_identity,
            blinded_generator,
            rng,
            counter,
        }
    }

    pub fn config(&self) -> GroupConfig {
        self.config
    }

    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    pub fn server_identity(&self) -> &[u8] {
        &self.server_identity
    }

    /// `W = g_C^b`.
    pub fn blinded_generator(&self) -> GroupElement {
        self.blinded_generator
    }

    pub fn rng(&self) -> &RngState {
        &self.rng
    }

    pub fn counter(&self) -> QueryCounter {
        self.counter
    }

    pub fn memory_image(&self) -> Vec<u8> {
        [
            &self.blinded_generator.to_bytes()[..],
            self.rng.seed(),
            self.rng.chain_key(),
            &self.identity,
            &self.server_identity,
        ]
        .concat()
    }

    fn destroy(&mut self) {
        self.blinded_generator.zeroize();
        self.rng.erase();
    }

    /// The generator as recovered with the entered password. A wrong password
    /// gives a different generator and is only noticed by the server.
    pub fn unblind(&self, password: &[u8]) -> Result<GroupElement> {
        let b_inv = blinding_scalar(&self.config, password)?.inverse()?;
        Ok(self.blinded_generator.exp(&b_inv))
    }

    pub fn start(&mut self, password: &[u8]) -> Result<(PscavCardSession, ProtocolFrame)> {
        if let Err(e) = self.counter.admit() {
            self.destroy();
            return Err(e);
        }
        let g_c = self.unblind(password)?;
        let x = draw_scalar(&mut self.rng, &self.config);
        let r_a = g_c.exp(&x);
        Ok((PscavCardSession { x, r_a }, hello_frame(PROTOCOL, &self.identity, &r_a)))
    }

    fn derive(&self, password: &[u8], x: &Scalar, r_a: &GroupElement, r_b: &GroupElement) -> Result<GroupElement> {
        self.config.validate_peer_element(r_b)?;
        let u = transcript_scalar(&self.config, &self.identity, &self.server_identity, r_a, r_b)?;
        let a = verifier_scalar(&self.config, password)?;
        Ok(r_b.exp(&(*x + u * a)))
    }
}

pub struct PscavCardSession {
    x: Scalar,
    r_a: GroupElement,
}

impl PscavCardSession {
    pub fn commitment(&self) -> GroupElement {
        self.r_a
    }

    pub fn confirm(
        self,
        cred: &PscavCardCredential,
        password: &[u8],
        frame: &ProtocolFrame,
    ) -> Result<(PscavCardConfirmed, ProtocolFrame)> {
        let r_b = parse_reply(&cred.config, PROTOCOL, frame)?;
        let sk = cred.derive(password, &self.x, &self.r_a, &r_b)?;
        let tag = card_confirmation(&sk, &cred.identity, &cred.server_identity, &self.r_a, &r_b);
        let confirmed = PscavCardConfirmed {
            r_a: self.r_a,
            r_b,
            sk,
        };
        Ok((confirmed, ProtocolFrame::new(PROTOCOL, MSG3, tag.to_vec())))
    }

    /// Reversed order: check the server's early tag, then answer.
    pub fn confirm_server_first(
        self,
        _lab: &LabHarness,
        cred: &mut PscavCardCredential,
        password: &[u8],
        frame: &ProtocolFrame,
    ) -> Result<(ProtocolFrame, SessionKey)> {
        let (r_b, server_tag) = parse_reply_with_confirmation(&cred.config, PROTOCOL, frame)?;
        let mut sk = cred.derive(password, &self.x, &self.r_a, &r_b)?;
        let expected = server_confirmation(&sk, &cred.identity, &cred.server_identity, &self.r_a, &r_b);
        if !tags_equal(&expected, &server_tag) {
            sk.zeroize();
            return Err(Error::ConfirmationFailed);
        }
        cred.counter.record_success();
        let tag = card_confirmation(&sk, &cred.identity, &cred.server_identity, &self.r_a, &r_b);
        let key = SessionKey::derive(&sk.to_bytes());
        sk.zeroize();
        Ok((ProtocolFrame::new(PROTOCOL, MSG3, tag.to_vec()), key))
    }
}

impl Drop for PscavCardSession {
    fn drop(&mut self) {
        self.x.zeroize();
    }
}

pub struct PscavCardConfirmed {
    r_a: GroupElement,
    r_b: GroupElement,
    sk: GroupElement,
}

impl PscavCardConfirmed {
    pub fn finish(self, cred: &mut PscavCardCredential, frame: &ProtocolFrame) -> Result<SessionKey> {
        let tag = parse_tag(PROTOCOL, MSG4, frame)?;
        let expected = server_confirmation(&self.sk, &cred.identity, &cred.server_identity, &self.r_a, &self.r_b);
        if !tags_equal(&expected, &tag) {
            return Err(Error::ConfirmationFailed);
        }
        cred.counter.record_success();
        Ok(SessionKey::derive(&self.sk.to_bytes()))
    }
}

impl Drop for PscavCardConfirmed {
    fn drop(&mut self) {
        self.sk.zeroize();
    }
}

pub struct PscavServer {
    config: GroupConfig,
    identity: Vec<u8>,
    records: BTreeMap<Vec<u8>, PscavServerRecord>,
}

impl PscavServer {
    pub fn new(config: GroupConfig, identity: &[u8]) -> Self {
        PscavServer {
            config,
            identity: identity.to_vec(),
            records: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, record: PscavServerRecord) {
        self.records.insert(record.identity.clone(), record);
    }

    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    pub fn records(&self) -> impl Iterator<Item = &PscavServerRecord> {
        self.records.values()
    }

    fn open_session<R: RngCore + CryptoRng>(&self, frame: &ProtocolFrame, rng: &mut R) -> Result<PscavServerSession> {
        let (identity, r_a) = parse_hello(&self.config, PROTOCOL, frame)?;
        self.config.validate_peer_element(&r_a)?;
        let record = self.records.get(&identity).ok_or(Error::UnknownIdentity)?;
        let y = self.config.random_scalar(rng);
        let r_b = record.user_generator.exp(&y);
        let u = transcript_scalar(&self.config, &identity, &self.identity, &r_a, &r_b)?;
        let sk = r_a.mul(&record.verifier.exp(&u))?.exp(&y);
        Ok(PscavServerSession {
            identity,
            server_identity: self.identity.clone(),
            r_a,
            r_b,
            sk,
        })
    }

    pub fn respond<R: RngCore + CryptoRng>(
        &self,
        frame: &ProtocolFrame,
        rng: &mut R,
    ) -> Result<(PscavServerSession, ProtocolFrame)> {
        let session = self.open_session(frame, rng)?;
        let reply = ProtocolFrame::new(PROTOCOL, MSG2, session.r_b.to_bytes());
        Ok((session, reply))
    }

    /// Reversed order: `R_B` and `C_s` in one message, before the card proved anything.
    pub fn respond_server_first<R: RngCore + CryptoRng>(
        &self,
        _lab: &LabHarness,
        frame: &ProtocolFrame,
        rng: &mut R,
    ) -> Result<(PscavServerSession, ProtocolFrame)> {
        let session = self.open_session(frame, rng)?;
        let tag = session.server_tag();
        let payload = PayloadWriter::new().fixed(&session.r_b.to_bytes()).fixed(&tag).finish();
        Ok((session, ProtocolFrame::new(PROTOCOL, MSG2_WITH_CONFIRMATION, payload)))
    }
}

pub struct PscavServerSession {
    identity: Vec<u8>,
    server_identity: Vec<u8>,
    r_a: GroupElement,
    r_b: GroupElement,
    sk: GroupElement,
}

impl PscavServerSession {
    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    fn server_tag(&self) -> [u8; 32] {
        server_confirmation(&self.sk, &self.identity, &self.server_identity, &self.r_a, &self.r_b)
    }

    fn check_card(&self, frame: &ProtocolFrame) -> Result<()> {
        let tag = parse_tag(PROTOCOL, MSG3, frame)?;
        let expected = card_confirmation(&self.sk, &self.identity, &self.server_identity, &self.r_a, &self.r_b);
        if tags_equal(&expected, &tag) {
            Ok(())
        } else {
            Err(Error::ConfirmationFailed)
        }
    }

    /// Verifies `C_c` and only then releases `C_s`.
    pub fn finish(self, frame: &ProtocolFrame) -> Result<(ProtocolFrame, SessionKey)> {
        self.check_card(frame)?;
        let reply = ProtocolFrame::new(PROTOCOL, MSG4, self.server_tag().to_vec());
        Ok((reply, SessionKey::derive(&self.sk.to_bytes())))
    }

    pub fn finish_server_first(self, _lab: &LabHarness, frame: &ProtocolFrame) -> Result<SessionKey> {
        self.check_card(frame)?;
        Ok(SessionKey::derive(&self.sk.to_bytes()))
    }
}

impl Drop for PscavServerSession {
    fn drop(&mut self) {
        self.sk.zeroize();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const C: &[u8] = b"carol";
    const S: &[u8] = b"verifier.example";
    const PW: &[u8] = b"correct horse";

    fn setup(limit: u32) -> (PscavCardCredential, PscavServer, ChaCha20Rng) {
        let cfg = GroupConfig::mersenne61();
        let master = PscavMasterSecret::new([5; 32]);
        let (card, record) = personalize(&cfg, &master, C, S, PW, RngState::new([1; 32], [2; 32]), limit).unwrap();
        let mut server = PscavServer::new(cfg, S);
        server.register(record);
        (card, server, ChaCha20Rng::seed_from_u64(3))
    }

    #[test]
    fn personalize_relations() {
        let cfg = GroupConfig::mersenne61();
        let master = PscavMasterSecret::new([5; 32]);
        let (card, record) = personalize(&cfg, &master, C, S, PW, RngState::new([1; 32], [2; 32]), 0).unwrap();
        let g_c = record.user_generator();
        assert_eq!(card.unblind(PW).unwrap(), g_c);
        assert_eq!(record.verifier(), g_c.exp(&verifier_scalar(&cfg, PW).unwrap()));
        let (other_card, other) = personalize(&cfg, &master, C, S, b"other", RngState::new([1; 32], [2; 32]), 0).unwrap();
        assert_ne!(other.user_generator(), g_c);
        assert_ne!(other.verifier(), record.verifier());
        assert_ne!(other_card.blinded_generator(), card.blinded_generator());
    }

    #[test]
    fn generator_depends_on_master_secret() {
        let cfg = GroupConfig::mersenne61();
        let a = user_generator(&cfg, &PscavMasterSecret::new([1; 32]), C, PW).unwrap();
        let b = user_generator(&cfg, &PscavMasterSecret::new([2; 32]), C, PW).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn honest_runs_agree() {
        let (mut card, server, mut rng) = setup(0);
        for _ in 0..20 {
            let (cs, f1) = card.start(PW).unwrap();
            let (ss, f2) = server.respond(&f1, &mut rng).unwrap();
            let (cc, f3) = cs.confirm(&card, PW, &f2).unwrap();
            let (f4, server_key) = ss.finish(&f3).unwrap();
            assert_eq!(cc.finish(&mut card, &f4).unwrap(), server_key);
        }
    }

    #[test]
    fn commitment_uses_the_unblinded_generator() {
        let (mut card, server, _) = setup(0);
        let g_c = server.records().next().unwrap().user_generator();
        let mut replica = card.rng().clone();
        let x = draw_scalar(&mut replica, &card.config());
        let (cs, _) = card.start(PW).unwrap();
        assert_eq!(cs.commitment(), g_c.exp(&x));
        let (wrong, _) = card.start(b"nope").unwrap();
        let x2 = draw_scalar(&mut replica, &card.config());
        assert_ne!(wrong.commitment(), g_c.exp(&x2));
    }

    #[test]
    fn wrong_password_fails_at_the_server() {
        let (mut card, server, mut rng) = setup(0);
        let (cs, f1) = card.start(b"nope").unwrap();
        let (ss, f2) = server.respond(&f1, &mut rng).unwrap();
        let (_, f3) = cs.confirm(&card, b"nope", &f2).unwrap();
        assert_eq!(ss.finish(&f3).err(), Some(Error::ConfirmationFailed));
    }

    #[test]
    fn unknown_identity_is_rejected() {
        let (mut card, server, mut rng) = setup(0);
        let (cs, _) = card.start(PW).unwrap();
        let frame = hello_frame(PROTOCOL, b"dave", &cs.commitment());
        assert_eq!(server.respond(&frame, &mut rng).err(), Some(Error::UnknownIdentity));
    }

    #[test]
    fn identity_commitment_is_rejected() {
        let (_, server, mut rng) = setup(0);
        let frame = hello_frame(PROTOCOL, C, &GroupConfig::mersenne61().identity());
        assert_eq!(server.respond(&frame, &mut rng).err(), Some(Error::NonSubgroupElement));
    }

    #[test]
    fn server_first_variant_completes_and_secure_card_refuses_it() {
        let lab = LabHarness::new();
        let (mut card, server, mut rng) = setup(0);
        let (cs, f1) = card.start(PW).unwrap();
        let (ss, f2) = server.respond_server_first(&lab, &f1, &mut rng).unwrap();
        let (f3, key) = cs.confirm_server_first(&lab, &mut card, PW, &f2).unwrap();
        assert_eq!(ss.finish_server_first(&lab, &f3).unwrap(), key);

        let (cs, f1) = card.start(PW).unwrap();
        let (_, f2) = server.respond_server_first(&lab, &f1, &mut rng).unwrap();
        assert_eq!(
            cs.confirm(&card, PW, &f2).err(),
            Some(Error::UnexpectedMessage(MSG2_WITH_CONFIRMATION))
        );
    }

    #[test]
    fn counter_limit_destroys_the_card() {
        let (mut card, _, _) = setup(2);
        card.start(PW).unwrap();
        card.start(PW).unwrap();
        assert_eq!(card.start(PW).err(), Some(Error::CardDestroyed));
        assert!(card.blinded_generator().is_identity());
    }
}
