//! Offline dictionary filtering.
//!
//! A candidate password is eliminated only when recomputing an observed value
//! under that candidate gives something different from what was observed.
//! Candidates the attacker cannot test at all are kept.

use crate::card::{draw_scalar, QueryCounter};
use crate::chain_rng::RngState;
use crate::group::{GroupConfig, GroupElement, Scalar};
use crate::handshake::Credential;
use crate::hash::{tags_equal, unwrap_key};
use crate::pscab::{self, PscabCardCredential};
use crate::pscav::{self, PscavCardCredential};
use crate::ssca::{self, Hello, Reply, SscaCardCredential};
use crate::wire::{self, ProtocolFrame, ProtocolId, MSG2, MSG3, MSG4};

use super::{AttackOutcome, Dictionary};

/// Forward chain draws tried when looking for a recorded ephemeral exponent.
const FORWARD_DRAWS: usize = 16;

/// Everything read out of a stolen card or memory stick.
#[derive(Clone)]
pub enum CardMemory {
    Ssca {
        identity: Vec<u8>,
        server_identity: Vec<u8>,
        wrapped_key: [u8; 32],
        rng: RngState,
    },
    Pscab {
        protocol: ProtocolId,
        config: GroupConfig,
        identity: Vec<u8>,
        server_identity: Vec<u8>,
        server_generator: GroupElement,
        blinded_key: GroupElement,
        rng: RngState,
    },
    Pscav {
        config: GroupConfig,
        identity: Vec<u8>,
        server_identity: Vec<u8>,
        blinded_generator: GroupElement,
        rng: RngState,
    },
}

impl CardMemory {
    pub fn read(card: &Credential) -> Self {
        match card {
            Credential::Ssca(c) => CardMemory::Ssca {
                identity: c.identity().to_vec(),
                server_identity: c.server_identity().to_vec(),
                wrapped_key: *c.wrapped_key(),
                rng: c.rng().clone(),
            },
            Credential::Pscab(c) => CardMemory::Pscab {
                protocol: c.protocol(),
                config: c.config(),
                identity: c.identity().to_vec(),
                server_identity: c.server_identity().to_vec(),
                server_generator: c.server_generator(),
                blinded_key: c.blinded_key(),
                rng: c.rng().clone(),
            },
            Credential::Pscav(c) => CardMemory::Pscav {
                config: c.config(),
                identity: c.identity().to_vec(),
                server_identity: c.server_identity().to_vec(),
                blinded_generator: c.blinded_generator(),
                rng: c.rng().clone(),
            },
        }
    }

    /// The raw bytes, in the layout `memory_image` produces.
    pub fn image(&self) -> Vec<u8> {
        self.clone_card().memory_image()
    }

    /// A working copy of the card. The copy has no attempt counter.
    pub fn clone_card(&self) -> Credential {
        let counter = QueryCounter::new(0);
        match self.clone() {
            CardMemory::Ssca {
                identity,
                server_identity,
                wrapped_key,
                rng,
            } => Credential::Ssca(SscaCardCredential::from_parts(identity, server_identity, wrapped_key, rng, counter)),
            CardMemory::Pscab {
                protocol,
                config,
                identity,
                server_identity,
                server_generator,
                blinded_key,
                rng,
            } => Credential::Pscab(
                PscabCardCredential::from_parts(
                    protocol,
                    config,
                    identity,
                    server_identity,
                    server_generator,
                    blinded_key,
                    rng,
                    counter,
                )
                .expect("protocol taken from a valid card"),
            ),
            CardMemory::Pscav {
                config,
                identity,
                server_identity,
                blinded_generator,
                rng,
            } => Credential::Pscav(PscavCardCredential::from_parts(
                config,
                identity,
                server_identity,
                blinded_generator,
                rng,
                counter,
            )),
        }
    }

    /// Exponents an attacker could hope to find among the card's data: the
    /// next draws of the stolen chain and every aligned or unaligned window
    /// of the raw image read as a scalar.
    fn exponent_guesses(&self, config: &GroupConfig, rng: &RngState) -> Vec<Scalar> {
        let mut chain = rng.clone();
        let mut out: Vec<Scalar> = (0..FORWARD_DRAWS).map(|_| draw_scalar(&mut chain, config)).collect();
        let image = self.image();
        for width in [32, config.width()] {
            out.extend(image.windows(width).filter_map(|w| config.scalar_from_bytes_nonzero(w)));
        }
        out
    }
}

/// What an attacker holds when filtering offline.
#[derive(Clone, Default)]
pub struct AttackerView {
    pub memory: Option<CardMemory>,
    /// Frames of one recorded run, in wire order.
    pub transcript: Option<Vec<ProtocolFrame>>,
}

/// Filters `dict` through `oracle`, keeping the words it reports consistent.
pub fn offline_filter<V, F>(view: &V, dict: &Dictionary, oracle: F) -> AttackOutcome
where
    F: Fn(&V, &[u8]) -> bool,
{
    let surviving = dict
        .words()
        .iter()
        .enumerate()
        .filter(|(_, w)| oracle(view, w))
        .map(|(i, _)| i)
        .collect();
    AttackOutcome::from_survivors(dict, surviving)
}

/// Whether `candidate` could be the password given `view`.
pub fn consistent(view: &AttackerView, candidate: &[u8]) -> bool {
    let (Some(memory), Some(transcript)) = (&view.memory, &view.transcript) else {
        return true;
    };
    match memory {
        CardMemory::Ssca {
            identity,
            server_identity,
            wrapped_key,
            ..
        } => ssca_consistent(identity, server_identity, wrapped_key, transcript, candidate),
        CardMemory::Pscab { config, rng, .. } | CardMemory::Pscav { config, rng, .. } => {
            group_consistent(memory, config, rng, transcript, candidate)
        }
    }
}

fn ssca_consistent(
    identity: &[u8],
    server_identity: &[u8],
    wrapped_key: &[u8; 32],
    transcript: &[ProtocolFrame],
    candidate: &[u8],
) -> bool {
    let (Some(Ok(hello)), Some(Ok(reply))) = (
        transcript.first().map(Hello::parse),
        transcript.get(1).map(Reply::parse),
    ) else {
        return true;
    };
    let key = unwrap_key(candidate, wrapped_key);
    let Some((id_c, r_c)) = ssca::open(&key, &hello.nonce, &hello.ciphertext) else {
        return false;
    };
    let Some((id_s, r_s)) = ssca::open(&key, &reply.nonce, &reply.ciphertext) else {
        return false;
    };
    if id_c != identity || id_s != identity {
        return false;
    }
    let sk = ssca::derive_session_secret(identity, server_identity, &r_c, &r_s);
    if !tags_equal(&ssca::server_tag(&sk, identity, server_identity, &r_c, &r_s), &reply.tag) {
        return false;
    }
    match transcript.get(2).map(ssca::parse_confirmation) {
        Some(Ok(tag)) => tags_equal(&ssca::card_tag(&sk, identity, server_identity, &r_c, &r_s), &tag),
        _ => true,
    }
}

/// Observed values of a group-protocol run.
struct GroupRun {
    r_a: GroupElement,
    r_b: GroupElement,
    card_tag: Option<[u8; 32]>,
    server_tag: Option<[u8; 32]>,
}

fn parse_group_run(config: &GroupConfig, protocol: ProtocolId, transcript: &[ProtocolFrame]) -> Option<GroupRun> {
    let (_, r_a) = wire::parse_hello(config, protocol, transcript.first()?).ok()?;
    let second = transcript.get(1)?;
    let (r_b, mut server_tag) = if second.msg_type == MSG2 {
        (wire::parse_reply(config, protocol, second).ok()?, None)
    } else {
        let (r_b, tag) = wire::parse_reply_with_confirmation(config, protocol, second).ok()?;
        (r_b, Some(tag))
    };
    let mut card_tag = None;
    for f in &transcript[2..] {
        match f.msg_type {
            MSG3 => card_tag = wire::parse_tag(protocol, MSG3, f).ok(),
            MSG4 => server_tag = wire::parse_tag(protocol, MSG4, f).ok(),
            _ => {}
        }
    }
    Some(GroupRun {
        r_a,
        r_b,
        card_tag,
        server_tag,
    })
}

fn group_consistent(
    memory: &CardMemory,
    config: &GroupConfig,
    rng: &RngState,
    transcript: &[ProtocolFrame],
    candidate: &[u8],
) -> bool {
    let protocol = match memory {
        CardMemory::Pscab { protocol, .. } => *protocol,
        _ => ProtocolId::Pscav,
    };
    let Some(run) = parse_group_run(config, protocol, transcript) else {
        return true;
    };
    let tags = |x: &Scalar| -> Option<([u8; 32], [u8; 32])> {
        match memory {
            CardMemory::Pscab {
                identity,
                server_identity,
                server_generator,
                blinded_key,
                ..
            } => {
                let h_inv = pscab::password_scalar(config, candidate).ok()?.inverse().ok()?;
                let sk = pscab::card_secret(config, blinded_key, x, &h_inv, server_generator, &run.r_a, &run.r_b).ok()?;
                let k1 = pscab::confirmation_key(&sk);
                Some((
                    pscab::card_confirmation(&k1, identity, server_identity, &run.r_a, &run.r_b),
                    pscab::server_confirmation(&k1, identity, server_identity, &run.r_a, &run.r_b),
                ))
            }
            CardMemory::Pscav {
                identity,
                server_identity,
                ..
            } => {
                let u = pscav::transcript_scalar(config, identity, server_identity, &run.r_a, &run.r_b).ok()?;
                let a = pscav::verifier_scalar(config, candidate).ok()?;
                let sk = run.r_b.exp(&(*x + u * a));
                Some((
                    pscav::card_confirmation(&sk, identity, server_identity, &run.r_a, &run.r_b),
                    pscav::server_confirmation(&sk, identity, server_identity, &run.r_a, &run.r_b),
                ))
            }
            CardMemory::Ssca { .. } => None,
        }
    };
    let Some(generator) = candidate_generator(memory, config, candidate) else {
        return true;
    };
    for x in memory.exponent_guesses(config, rng) {
        if generator.exp(&x) != run.r_a {
            continue;
        }
        let Some((card_tag, server_tag)) = tags(&x) else {
            return true;
        };
        let card_ok = run.card_tag.is_none_or(|t| tags_equal(&t, &card_tag));
        let server_ok = run.server_tag.is_none_or(|t| tags_equal(&t, &server_tag));
        return card_ok && server_ok;
    }
    true
}

/// The generator the card would have used with `candidate` typed in.
fn candidate_generator(memory: &CardMemory, config: &GroupConfig, candidate: &[u8]) -> Option<GroupElement> {
    match memory {
        CardMemory::Pscab {
            protocol, identity, ..
        } => pscab::user_generator(config, *protocol, identity, candidate).ok(),
        CardMemory::Pscav {
            blinded_generator, ..
        } => {
            let b_inv = pscav::blinding_scalar(config, candidate).ok()?.inverse().ok()?;
            Some(blinded_generator.exp(&b_inv))
        }
        CardMemory::Ssca { .. } => None,
    }
}
