//! Protocol-agnostic drivers over the per-protocol state machines, so that a
//! transport or a test harness can move frames without knowing which
//! protocol is running.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use zeroize::Zeroize;

use crate::card::QueryCounter;
use crate::chain_rng::RngState;
use crate::group::GroupConfig;
use crate::pscab::{
    self, PscabCardConfirmed, PscabCardCredential, PscabCardSession, PscabMasterKey, PscabParams, PscabServer,
    PscabServerSession,
};
use crate::pscav::{
    self, PscavCardConfirmed, PscavCardCredential, PscavCardSession, PscavMasterSecret, PscavServer, PscavServerSession,
};
use crate::ssca::{SscaCardCredential, SscaCardSession, SscaMasterSecret, SscaServer, SscaServerSession};
use crate::wire::{ProtocolFrame, ProtocolId};
use crate::{Error, Result, SessionKey};

/// Any card.
pub enum Credential {
    Ssca(SscaCardCredential),
    Pscab(PscabCardCredential),
    Pscav(PscavCardCredential),
}

impl Credential {
    pub fn protocol(&self) -> ProtocolId {
        match self {
            Credential::Ssca(_) => ProtocolId::Ssca,
            Credential::Pscab(c) => c.protocol(),
            Credential::Pscav(_) => ProtocolId::Pscav,
        }
    }

    pub fn identity(&self) -> &[u8] {
        match self {
            Credential::Ssca(c) => c.identity(),
            Credential::Pscab(c) => c.identity(),
            Credential::Pscav(c) => c.identity(),
        }
    }

    pub fn counter(&self) -> QueryCounter {
        match self {
            Credential::Ssca(c) => c.counter(),
            Credential::Pscab(c) => c.counter(),
            Credential::Pscav(c) => c.counter(),
        }
    }

    pub fn memory_image(&self) -> Vec<u8> {
        match self {
            Credential::Ssca(c) => c.memory_image(),
            Credential::Pscab(c) => c.memory_image(),
            Credential::Pscav(c) => c.memory_image(),
        }
    }

    pub fn start(&mut self, password: &[u8]) -> Result<(CardFlow, ProtocolFrame)> {
        Ok(match self {
            Credential::Ssca(c) => {
                let (s, f) = c.start(password)?;
                (CardFlow::Ssca(s), f)
            }
            Credential::Pscab(c) => {
                let (s, f) = c.start(password)?;
                (CardFlow::Pscab(s), f)
            }
            Credential::Pscav(c) => {
                let (s, f) = c.start(password)?;
                (CardFlow::Pscav(s), f)
            }
        })
    }
}

/// A card session in progress.
pub enum CardFlow {
    Ssca(SscaCardSession),
    Pscab(PscabCardSession),
    PscabConfirmed(PscabCardConfirmed),
    Pscav(PscavCardSession),
    PscavConfirmed(PscavCardConfirmed),
}

pub enum CardStep {
    /// Send the frame and feed the answer to the returned flow.
    Continue(CardFlow, ProtocolFrame),
    /// The card accepted. A final frame, if any, still has to reach the server.
    Accept(Option<ProtocolFrame>, SessionKey),
}

impl CardFlow {
    pub fn step(self, cred: &mut Credential, password: &[u8], frame: &ProtocolFrame) -> Result<CardStep> {
        match (self, cred) {
            (CardFlow::Ssca(s), Credential::Ssca(c)) => {
                let (f3, key) = s.finish(c, frame)?;
                Ok(CardStep::Accept(Some(f3), key))
            }
            (CardFlow::Pscab(s), Credential::Pscab(c)) => {
                let (next, f3) = s.confirm(c, password, frame)?;
                Ok(CardStep::Continue(CardFlow::PscabConfirmed(next), f3))
            }
            (CardFlow::PscabConfirmed(s), Credential::Pscab(c)) => Ok(CardStep::Accept(None, s.finish(c, frame)?)),
            (CardFlow::Pscav(s), Credential::Pscav(c)) => {
                let (next, f3) = s.confirm(c, password, frame)?;
                Ok(CardStep::Continue(CardFlow::PscavConfirmed(next), f3))
            }
            (CardFlow::PscavConfirmed(s), Credential::Pscav(c)) => Ok(CardStep::Accept(None, s.finish(c, frame)?)),
            _ => Err(Error::UnexpectedMessage(frame.msg_type)),
        }
    }
}

/// Any server.
pub enum Authenticator {
    Ssca(SscaServer),
    Pscab(PscabServer),
    Pscav(PscavServer),
}

impl Authenticator {
    pub fn protocol(&self) -> ProtocolId {
        match self {
            Authenticator::Ssca(_) => ProtocolId::Ssca,
            Authenticator::Pscab(s) => s.protocol(),
            Authenticator::Pscav(_) => ProtocolId::Pscav,
        }
    }

    pub fn respond<R: RngCore + CryptoRng>(&self, frame: &ProtocolFrame, rng: &mut R) -> Result<(ServerFlow, ProtocolFrame)> {
        if frame.protocol != self.protocol() {
            return Err(Error::UnknownProtocol(frame.protocol.byte()));
        }
        Ok(match self {
            Authenticator::Ssca(s) => {
                let (sess, f) = s.respond(frame, rng)?;
                (ServerFlow::Ssca(sess), f)
            }
            Authenticator::Pscab(s) => {
                let (sess, f) = s.respond(frame, rng)?;
                (ServerFlow::Pscab(sess), f)
            }
            Authenticator::Pscav(s) => {
                let (sess, f) = s.respond(frame, rng)?;
                (ServerFlow::Pscav(sess), f)
            }
        })
    }
}

pub enum ServerFlow {
    Ssca(SscaServerSession),
    Pscab(PscabServerSession),
    Pscav(PscavServerSession),
}

impl ServerFlow {
    pub fn identity(&self) -> &[u8] {
        match self {
            ServerFlow::Ssca(s) => s.identity(),
            ServerFlow::Pscab(s) => s.identity(),
            ServerFlow::Pscav(s) => s.identity(),
        }
    }

    /// Checks the card's confirmation. On success returns the server's own
    /// confirmation frame (none for SSCA, whose server tag went out earlier).
    pub fn finish(self, frame: &ProtocolFrame) -> Result<(Option<ProtocolFrame>, SessionKey)> {
        match self {
            ServerFlow::Ssca(s) => Ok((None, s.finish(frame)?)),
            ServerFlow::Pscab(s) => s.finish(frame).map(|(f, k)| (Some(f), k)),
            ServerFlow::Pscav(s) => s.finish(frame).map(|(f, k)| (Some(f), k)),
        }
    }
}

/// Everything that crossed the wire in one in-memory run, and how it ended.
pub struct RunReport {
    pub card_frames: Vec<ProtocolFrame>,
    pub server_frames: Vec<ProtocolFrame>,
    pub card_result: Result<SessionKey>,
    pub server_result: Result<SessionKey>,
}

impl RunReport {
    pub fn both_accepted(&self) -> bool {
        matches!((&self.card_result, &self.server_result), (Ok(a), Ok(b)) if a == b)
    }

    /// All frames in wire order.
    pub fn transcript(&self) -> Vec<ProtocolFrame> {
        let mut out = Vec::new();
        let mut server = self.server_frames.iter();
        for f in &self.card_frames {
            out.push(f.clone());
            out.extend(server.next().cloned());
        }
        out.extend(server.cloned());
        out
    }
}

/// Runs one handshake between a card and a server without a transport. A
/// party that fails stops sending; the other side is then marked rejected.
pub fn run_in_memory<R: RngCore + CryptoRng>(
    cred: &mut Credential,
    password: &[u8],
    server: &Authenticator,
    rng: &mut R,
) -> RunReport {
    let mut report = RunReport {
        card_frames: Vec::new(),
        server_frames: Vec::new(),
        card_result: Err(Error::Rejected),
        server_result: Err(Error::Rejected),
    };
    let (flow, f1) = match cred.start(password) {
        Ok(v) => v,
        Err(e) => {
            report.card_result = Err(e);
            return report;
        }
    };
    report.card_frames.push(f1.clone());
    let (session, f2) = match server.respond(&f1, rng) {
        Ok(v) => v,
        Err(e) => {
            report.server_result = Err(e);
            return report;
        }
    };
    report.server_frames.push(f2.clone());
    let (last_from_card, card_key, pending) = match flow.step(cred, password, &f2) {
        Ok(CardStep::Accept(f3, key)) => (f3, Some(key), None),
        Ok(CardStep::Continue(next, f3)) => (Some(f3), None, Some(next)),
        Err(e) => {
            report.card_result = Err(e);
            return report;
        }
    };
    let Some(f3) = last_from_card else {
        report.card_result = Err(Error::UnexpectedMessage(f2.msg_type));
        return report;
    };
    report.card_frames.push(f3.clone());
    match session.finish(&f3) {
        Ok((f4, server_key)) => {
            report.server_result = Ok(server_key);
            if let Some(f4) = f4 {
                report.server_frames.push(f4.clone());
                if let Some(next) = pending {
                    report.card_result = match next.step(cred, password, &f4) {
                        Ok(CardStep::Accept(_, key)) => Ok(key),
                        Ok(CardStep::Continue(_, f)) => Err(Error::UnexpectedMessage(f.msg_type)),
                        Err(e) => Err(e),
                    };
                }
            }
            if let Some(key) = card_key {
                report.card_result = Ok(key);
            }
        }
        Err(e) => {
            report.server_result = Err(e);
            // An SSCA card already accepted at this point.
            if let Some(key) = card_key {
                report.card_result = Ok(key);
            }
        }
    }
    report
}

/// Issues one card and a server that knows it, with fresh master secrets
/// drawn from `rng`. The server state holds only what a deployment would.
pub fn provision<R: RngCore + CryptoRng>(
    protocol: ProtocolId,
    config: GroupConfig,
    identity: &[u8],
    server_identity: &[u8],
    password: &[u8],
    counter_limit: u32,
    rng: &mut R,
) -> Result<(Credential, Authenticator)> {
    let mut seed = [0u8; 32];
    let mut chain_key = [0u8; 32];
    rng.fill_bytes(&mut seed);
    rng.fill_bytes(&mut chain_key);
    let card_rng = RngState::new(seed, chain_key);
    seed.zeroize();
    chain_key.zeroize();
    match protocol {
        ProtocolId::Ssca => {
            let master = SscaMasterSecret::generate(rng);
            let card = SscaCardCredential::personalize(&master, identity, server_identity, password, card_rng, counter_limit)?;
            Ok((Credential::Ssca(card), Authenticator::Ssca(SscaServer::new(master, server_identity))))
        }
        ProtocolId::Pscab => {
            let params = PscabParams::setup(config, server_identity)?;
            let master = PscabMasterKey::generate(&config, rng);
            let card = pscab::extract(&params, &master, identity, password, card_rng, counter_limit)?;
            Ok((Credential::Pscab(card), Authenticator::Pscab(PscabServer::new(params, master))))
        }
        ProtocolId::Pscabv => {
            let params = PscabParams::setup(config, server_identity)?;
            let master = PscabMasterKey::generate(&config, rng);
            let (card, record) = pscab::extract_v(&params, &master, identity, password, card_rng, counter_limit)?;
            let users = BTreeMap::from([(identity.to_vec(), record)]);
            let server = PscabServer::with_user_records(params, master, users);
            Ok((Credential::Pscab(card), Authenticator::Pscab(server)))
        }
        ProtocolId::Pscav => {
            let master = PscavMasterSecret::generate(rng);
            let (card, record) = pscav::personalize(&config, &master, identity, server_identity, password, card_rng, counter_limit)?;
            let mut server = PscavServer::new(config, server_identity);
            server.register(record);
            Ok((Credential::Pscav(card), Authenticator::Pscav(server)))
        }
    }
}
