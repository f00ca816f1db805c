//! Identity-based password-protected card authentication over a bilinear group.
//!
//! Setup publishes `g_S = H(S)`; the server keeps the master secret `beta`.
//! Extract gives the card `D = g_C^(beta * H(alpha))` where `g_C = H(C)`. The
//! exchange is
//!
//! ```text
//! card -> server : C, R_A = g_C^x
//! card <- server : R_B = g_S^y
//! card -> server : C_C = HMAC_K1(C, S, R_A, R_B)
//! card <- server : C_S = HMAC_K1(S, C, R_B, R_A)
//! ```
//!
//! with `s_A = pi(R_A, R_B)`, `s_B = pi(R_B, R_A)`, `K1 = KDF(sk, 1)` and
//!
//! ```text
//! sk = e(D^((x + s_A) / H(alpha)), g_S^s_B * R_B)        (card)
//!    = e(g_C^s_A * R_A, g_S^((y + s_B) * beta))          (server)
//! ```
//!
//! The card confirms first. The server never releases `C_S` before it has
//! checked `C_C`, because `C_S` together with `D` is enough to test password
//! guesses offline. The reversed order is kept only for the attack lab.
//!
//! With [`ProtocolId::Pscabv`] the user generator is `g_C = H(C, alpha)` and the
//! server stores it per user.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use zeroize::Zeroize;

use crate::adversary::LabHarness;
use crate::card::{draw_scalar, QueryCounter};
use crate::chain_rng::RngState;
use crate::group::{GroupConfig, GroupElement, Scalar, TargetElement};
use crate::hash::{hmac_fields, kdf, tags_equal, HashRole};
pub use crate::wire::{
    hello_frame, parse_hello, parse_reply, parse_reply_with_confirmation, parse_tag, TAG_LEN,
};
use crate::wire::{PayloadWriter, ProtocolFrame, ProtocolId, MSG2, MSG2_WITH_CONFIRMATION, MSG3, MSG4};
use crate::{Error, Result, SessionKey};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PscabParams {
    config: GroupConfig,
    generator: GroupElement,
    server_identity: Vec<u8>,
    server_generator: GroupElement,
}

impl PscabParams {
    pub fn setup(config: GroupConfig, server_identity: &[u8]) -> Result<Self> {
        if server_identity.is_empty() {
            return Err(Error::EmptyIdentity);
        }
        Ok(PscabParams {
            config,
            generator: config.subgroup_generator(),
            server_identity: server_identity.to_vec(),
            server_generator: config.hash_to_group(HashRole::HashToGroup, &[server_identity])?,
        })
    }

    pub fn config(&self) -> GroupConfig {
        self.config
    }

    pub fn generator(&self) -> GroupElement {
        self.generator
    }

    pub fn server_identity(&self) -> &[u8] {
        &self.server_identity
    }

    /// `g_S = H(S)`.
    pub fn server_generator(&self) -> GroupElement {
        self.server_generator
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PscabMasterKey(Scalar);

impl PscabMasterKey {
    pub fn generate<R: RngCore + CryptoRng>(config: &GroupConfig, rng: &mut R) -> Self {
        PscabMasterKey(config.random_scalar(rng))
    }

    pub fn from_scalar(beta: Scalar) -> Result<Self> {
        if beta.is_zero() {
            return Err(Error::NotInvertible);
        }
        Ok(PscabMasterKey(beta))
    }

    pub fn scalar(&self) -> &Scalar {
        &self.0
    }
}

impl Drop for PscabMasterKey {
    fn drop(&mut self) {
        self.0.zeroize();
    }
}

impl std::fmt::Debug for PscabMasterKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PscabMasterKey(..)")
    }
}

/// `H(alpha)` as an invertible scalar.
pub fn password_scalar(config: &GroupConfig, password: &[u8]) -> Result<Scalar> {
    config.hash_to_scalar(HashRole::HashToScalar, &[password])
}

/// The generator a card of the given protocol variant works with.
pub fn user_generator(
    config: &GroupConfig,
    protocol: ProtocolId,
    identity: &[u8],
    password: &[u8],
) -> Result<GroupElement> {
    match protocol {
        ProtocolId::Pscab => config.hash_to_group(HashRole::HashToGroup, &[identity]),
        ProtocolId::Pscabv => config.hash_to_group(HashRole::HashToGroup, &[identity, password]),
        other => Err(Error::UnknownProtocol(other.byte())),
    }
}

/// `(s_A, s_B) = (pi(R_A, R_B), pi(R_B, R_A))`.
pub fn exchange_scalars(config: &GroupConfig, r_a: &GroupElement, r_b: &GroupElement) -> Result<(Scalar, Scalar)> {
    let (a, b) = (r_a.to_bytes(), r_b.to_bytes());
    Ok((
        config.hash_to_scalar(HashRole::Pi, &[&a, &b])?,
        config.hash_to_scalar(HashRole::Pi, &[&b, &a])?,
    ))
}

/// `K1 = KDF(sk, 1)`.
pub fn confirmation_key(sk: &TargetElement) -> [u8; 32] {
    kdf(&[&sk.to_bytes(), &[0x01]])
}

pub fn card_confirmation(k1: &[u8; 32], identity: &[u8], server_identity: &[u8], r_a: &GroupElement, r_b: &GroupElement) -> [u8; 32] {
    hmac_fields(k1, &[identity, server_identity, &r_a.to_bytes(), &r_b.to_bytes()])
}

pub fn server_confirmation(k1: &[u8; 32], identity: &[u8], server_identity: &[u8], r_a: &GroupElement, r_b: &GroupElement) -> [u8; 32] {
    hmac_fields(k1, &[server_identity, identity, &r_b.to_bytes(), &r_a.to_bytes()])
}

/// Card-side secret `e(D^((x + s_A) * h^-1), g_S^s_B * R_B)`.
pub fn card_secret(
    config: &GroupConfig,
    blinded_key: &GroupElement,
    x: &Scalar,
    password_inverse: &Scalar,
    server_generator: &GroupElement,
    r_a: &GroupElement,
    r_b: &GroupElement,
) -> Result<TargetElement> {
    let (s_a, s_b) = exchange_scalars(config, r_a, r_b)?;
    let left = blinded_key.exp(&((*x + s_a) * *password_inverse));
    let right = server_generator.exp(&s_b).mul(r_b)?;
    config.pair(&left, &right)
}

/// Server-side secret `e(g_C^s_A * R_A, g_S^((y + s_B) * beta))`.
pub fn server_secret(
    config: &GroupConfig,
    master: &PscabMasterKey,
    user_generator: &GroupElement,
    y: &Scalar,
    server_generator: &GroupElement,
    r_a: &GroupElement,
    r_b: &GroupElement,
) -> Result<TargetElement> {
    let (s_a, s_b) = exchange_scalars(config, r_a, r_b)?;
    let left = user_generator.exp(&s_a).mul(r_a)?;
    let right = server_generator.exp(&((*y + s_b) * master.0));
    config.pair(&left, &right)
}

fn check_protocol(protocol: ProtocolId) -> Result<()> {
    match protocol {
        ProtocolId::Pscab | ProtocolId::Pscabv => Ok(()),
        other => Err(Error::UnknownProtocol(other.byte())),
    }
}

pub struct PscabCardCredential {
    protocol: ProtocolId,
    config: GroupConfig,
    identity: Vec<u8>,
    server_identity: Vec<u8>,
    server_generator: GroupElement,
    blinded_key: GroupElement,
    rng: RngState,
    counter: QueryCounter,
}

/// Extract for PSCAb: `D = H(C)^(beta * H(alpha))`.
pub fn extract(
    params: &PscabParams,
    master: &PscabMasterKey,
    identity: &[u8],
    password: &[u8],
    rng: RngState,
    counter_limit: u32,
) -> Result<PscabCardCredential> {
    PscabCardCredential::personalize(ProtocolId::Pscab, params, master, identity, password, rng, counter_limit)
}

/// Extract for PSCAbV. Returns the card and the server's per-user record `g_C = H(C, alpha)`.
pub fn extract_v(
    params: &PscabParams,
    master: &PscabMasterKey,
    identity: &[u8],
    password: &[u8],
    rng: RngState,
    counter_limit: u32,
) -> Result<(PscabCardCredential, GroupElement)> {
    let card = PscabCardCredential::personalize(ProtocolId::Pscabv, params, master, identity, password, rng, counter_limit)?;
    let record = user_generator(&params.config, ProtocolId::Pscabv, identity, password)?;
    Ok((card, record))
}

impl PscabCardCredential {
    fn personalize(
        protocol: ProtocolId,
        params: &PscabParams,
        master: &PscabMasterKey,
        identity: &[u8],
        password: &[u8],
        rng: RngState,
        counter_limit: u32,
    ) -> Result<Self> {
        if identity.is_empty() {
            return Err(Error::EmptyIdentity);
        }
        let config = params.config;
        let g_c = user_generator(&config, protocol, identity, password)?;
        let h = password_scalar(&config, password)?;
        Ok(PscabCardCredential {
            protocol,
            config,
            identity: identity.to_vec(),
            server_identity: params.server_identity.clone(),
            server_generator: params.server_generator,
            blinded_key: g_c.exp(&(master.0 * h)),
            rng,
            counter: QueryCounter::new(counter_limit),
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        protocol: ProtocolId,
        config: GroupConfig,
        identity: Vec<u8>,
        server_identity: Vec<u8>,
        server_generator: GroupElement,
        blinded_key: GroupElement,
        rng: RngState,
        counter: QueryCounter,
    ) -> Result<Self> {
        check_protocol(protocol)?;
        Ok(PscabCardCredential {
            protocol,
            config,
            identity,
            server_identity,
            server_generator,
            blinded_key,
            rng,
            counter,
        })
    }

    pub fn protocol(&self) -> ProtocolId {
        self.protocol
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

    pub fn server_generator(&self) -> GroupElement {
        self.server_generator
    }

    /// `D = d_C^H(alpha)`.
    pub fn blinded_key(&self) -> GroupElement {
        self.blinded_key
    }

    pub fn rng(&self) -> &RngState {
        &self.rng
    }

    pub fn counter(&self) -> QueryCounter {
        self.counter
    }

    pub fn memory_image(&self) -> Vec<u8> {
        [
            &self.blinded_key.to_bytes()[..],
            &self.server_generator.to_bytes(),
            self.rng.seed(),
            self.rng.chain_key(),
            &self.identity,
            &self.server_identity,
        ]
        .concat()
    }

    fn destroy(&mut self) {
        self.blinded_key.zeroize();
        self.rng.erase();
    }

    /// Step one: `R_A = g_C^x` with `x` from the card's chain.
    pub fn start(&mut self, password: &[u8]) -> Result<(PscabCardSession, ProtocolFrame)> {
        if let Err(e) = self.counter.admit() {
            self.destroy();
            return Err(e);
        }
        let g_c = user_generator(&self.config, self.protocol, &self.identity, password)?;
        let x = draw_scalar(&mut self.rng, &self.config);
        let r_a = g_c.exp(&x);
        let frame = hello_frame(self.protocol, &self.identity, &r_a);
        Ok((PscabCardSession { x, r_a }, frame))
    }

    fn derive(&self, password: &[u8], x: &Scalar, r_a: &GroupElement, r_b: &GroupElement) -> Result<TargetElement> {
        self.config.validate_peer_element(r_b)?;
        let h_inv = password_scalar(&self.config, password)?.inverse()?;
        card_secret(&self.config, &self.blinded_key, x, &h_inv, &self.server_generator, r_a, r_b)
    }
}

pub struct PscabCardSession {
    x: Scalar,
    r_a: GroupElement,
}

impl PscabCardSession {
    pub fn commitment(&self) -> GroupElement {
        self.r_a
    }

    /// Step three: derive `sk` and send the card's confirmation.
    pub fn confirm(
        self,
        cred: &PscabCardCredential,
        password: &[u8],
        frame: &ProtocolFrame,
    ) -> Result<(PscabCardConfirmed, ProtocolFrame)> {
        let r_b = parse_reply(&cred.config, cred.protocol, frame)?;
        let mut sk = cred.derive(password, &self.x, &self.r_a, &r_b)?;
        let k1 = confirmation_key(&sk);
        let tag = card_confirmation(&k1, &cred.identity, &cred.server_identity, &self.r_a, &r_b);
        let session_key = SessionKey::derive(&sk.to_bytes());
        sk.zeroize();
        let confirmed = PscabCardConfirmed {
            r_a: self.r_a,
            r_b,
            k1,
            session_key,
        };
        Ok((confirmed, ProtocolFrame::new(cred.protocol, MSG3, tag.to_vec())))
    }

    /// Reversed order: the server's tag arrives with `R_B` and is checked before
    /// the card answers.
    pub fn confirm_server_first(
        self,
        _lab: &LabHarness,
        cred: &mut PscabCardCredential,
        password: &[u8],
        frame: &ProtocolFrame,
    ) -> Result<(ProtocolFrame, SessionKey)> {
        let (r_b, server_tag) = parse_reply_with_confirmation(&cred.config, cred.protocol, frame)?;
        let mut sk = cred.derive(password, &self.x, &self.r_a, &r_b)?;
        let mut k1 = confirmation_key(&sk);
        let expected = server_confirmation(&k1, &cred.identity, &cred.server_identity, &self.r_a, &r_b);
        if !tags_equal(&expected, &server_tag) {
            return Err(Error::ConfirmationFailed);
        }
        cred.counter.record_success();
        let tag = card_confirmation(&k1, &cred.identity, &cred.server_identity, &self.r_a, &r_b);
        let session_key = SessionKey::derive(&sk.to_bytes());
        sk.zeroize();
        k1.zeroize();
        Ok((ProtocolFrame::new(cred.protocol, MSG3, tag.to_vec()), session_key))
    }
}

impl Drop for PscabCardSession {
    fn drop(&mut self) {
        self.x.zeroize();
    }
}

/// Card waiting for the server's confirmation.
pub struct PscabCardConfirmed {
    r_a: GroupElement,
    r_b: GroupElement,
    k1: [u8; 32],
    session_key: SessionKey,
}

impl PscabCardConfirmed {
    /// Step seven: verify `C_S` and accept.
    pub fn finish(self, cred: &mut PscabCardCredential, frame: &ProtocolFrame) -> Result<SessionKey> {
        let tag = parse_tag(cred.protocol, MSG4, frame)?;
        let expected = server_confirmation(&self.k1, &cred.identity, &cred.server_identity, &self.r_a, &self.r_b);
        if !tags_equal(&expected, &tag) {
            return Err(Error::ConfirmationFailed);
        }
        cred.counter.record_success();
        Ok(self.session_key.clone())
    }
}

impl Drop for PscabCardConfirmed {
    fn drop(&mut self) {
        self.k1.zeroize();
    }
}

pub struct PscabServer {
    params: PscabParams,
    master: PscabMasterKey,
    protocol: ProtocolId,
    users: BTreeMap<Vec<u8>, GroupElement>,
}

impl PscabServer {
    /// PSCAb server: any identity, `g_C = H(C)`.
    pub fn new(params: PscabParams, master: PscabMasterKey) -> Self {
        PscabServer {
            params,
            master,
            protocol: ProtocolId::Pscab,
            users: BTreeMap::new(),
        }
    }

    /// PSCAbV server with stored `g_C = H(C, alpha)` per user.
    pub fn with_user_records(params: PscabParams, master: PscabMasterKey, users: BTreeMap<Vec<u8>, GroupElement>) -> Self {
        PscabServer {
            params,
            master,
            protocol: ProtocolId::Pscabv,
            users,
        }
    }

    pub fn protocol(&self) -> ProtocolId {
        self.protocol
    }

    pub fn params(&self) -> &PscabParams {
        &self.params
    }

    fn user_generator(&self, identity: &[u8]) -> Result<GroupElement> {
        match self.protocol {
            ProtocolId::Pscabv => self.users.get(identity).copied().ok_or(Error::UnknownIdentity),
            _ => self.params.config.hash_to_group(HashRole::HashToGroup, &[identity]),
        }
    }

    fn open_session<R: RngCore + CryptoRng>(&self, frame: &ProtocolFrame, rng: &mut R) -> Result<PscabServerSession> {
        let config = self.params.config;
        let (identity, r_a) = parse_hello(&config, self.protocol, frame)?;
        config.validate_peer_element(&r_a)?;
        let g_c = self.user_generator(&identity)?;
        let y = config.random_scalar(rng);
        let r_b = self.params.server_generator.exp(&y);
        let mut sk = server_secret(&config, &self.master, &g_c, &y, &self.params.server_generator, &r_a, &r_b)?;
        let k1 = confirmation_key(&sk);
        let session_key = SessionKey::derive(&sk.to_bytes());
        sk.zeroize();
        Ok(PscabServerSession {
            protocol: self.protocol,
            identity,
            server_identity: self.params.server_identity.clone(),
            r_a,
            r_b,
            k1,
            session_key,
        })
    }

    /// Step two.
    pub fn respond<R: RngCore + CryptoRng>(
        &self,
        frame: &ProtocolFrame,
        rng: &mut R,
    ) -> Result<(PscabServerSession, ProtocolFrame)> {
        let session = self.open_session(frame, rng)?;
        let reply = ProtocolFrame::new(self.protocol, MSG2, session.r_b.to_bytes());
        Ok((session, reply))
    }

    /// Reversed order: `R_B` goes out together with `C_S`.
    pub fn respond_server_first<R: RngCore + CryptoRng>(
        &self,
        _lab: &LabHarness,
        frame: &ProtocolFrame,
        rng: &mut R,
    ) -> Result<(PscabServerSession, ProtocolFrame)> {
        let session = self.open_session(frame, rng)?;
        let tag = session.server_tag();
        let payload = PayloadWriter::new().fixed(&session.r_b.to_bytes()).fixed(&tag).finish();
        Ok((session, ProtocolFrame::new(self.protocol, MSG2_WITH_CONFIRMATION, payload)))
    }
}

pub struct PscabServerSession {
    protocol: ProtocolId,
    identity: Vec<u8>,
    server_identity: Vec<u8>,
    r_a: GroupElement,
    r_b: GroupElement,
    k1: [u8; 32],
    session_key: SessionKey,
}

impl PscabServerSession {
    pub fn identity(&self) -> &[u8] {
        &self.identity
    }

    fn server_tag(&self) -> [u8; 32] {
        server_confirmation(&self.k1, &self.identity, &self.server_identity, &self.r_a, &self.r_b)
    }

    fn check_card(&self, frame: &ProtocolFrame) -> Result<()> {
        let tag = parse_tag(self.protocol, MSG3, frame)?;
        let expected = card_confirmation(&self.k1, &self.identity, &self.server_identity, &self.r_a, &self.r_b);
        if tags_equal(&expected, &tag) {
            Ok(())
        } else {
            Err(Error::ConfirmationFailed)
        }
    }

    /// Steps five and six: check `C_C`, and only then produce `C_S`.
    pub fn finish(self, frame: &ProtocolFrame) -> Result<(ProtocolFrame, SessionKey)> {
        self.check_card(frame)?;
        let reply = ProtocolFrame::new(self.protocol, MSG4, self.server_tag().to_vec());
        Ok((reply, self.session_key.clone()))
    }

    /// Closing step of the reversed order, where `C_S` has already been sent.
    pub fn finish_server_first(self, _lab: &LabHarness, frame: &ProtocolFrame) -> Result<SessionKey> {
        self.check_card(frame)?;
        Ok(self.session_key.clone())
    }
}

impl Drop for PscabServerSession {
    fn drop(&mut self) {
        self.k1.zeroize();
    }
}
