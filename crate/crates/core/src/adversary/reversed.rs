//! Offline dictionary attack on the confirmation order.
//!
//! With the stolen card secret the attacker can run the card's side of the
//! protocol for every candidate password at once, because the password only
//! enters as an exponent. One server confirmation tag is then enough to tell
//! the right candidate apart. When the card has to confirm first, the attacker
//! never gets that tag.

use rand::{CryptoRng, Rng, RngCore};

use crate::group::Scalar;
use crate::hash::tags_equal;
use crate::pscab::{self, PscabServer};
use crate::pscav::{self, PscavServer};
use crate::wire::{self, ProtocolFrame, ProtocolId, MSG3};
use crate::{Error, Result};

use super::{AttackOutcome, CardMemory, Dictionary, LabHarness};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfirmationOrder {
    /// The deployed order: the server answers only after the card's tag checked out.
    CardFirst,
    /// The server's tag travels together with its ephemeral.
    ServerFirst,
}

fn not_applicable(scenario: &str, memory: &CardMemory) -> Error {
    let protocol = match memory {
        CardMemory::Ssca { .. } => ProtocolId::Ssca,
        CardMemory::Pscab { protocol, .. } => *protocol,
        CardMemory::Pscav { .. } => ProtocolId::Pscav,
    };
    Error::NotApplicable {
        scenario: scenario.to_string(),
        protocol: protocol.name(),
    }
}

fn random_tag_frame<R: RngCore>(protocol: ProtocolId, rng: &mut R) -> ProtocolFrame {
    let mut tag = [0u8; 32];
    rng.fill_bytes(&mut tag);
    ProtocolFrame::new(protocol, MSG3, tag.to_vec())
}

fn nonzero_scalar<R: RngCore + CryptoRng>(memory: &CardMemory, rng: &mut R) -> Scalar {
    match memory {
        CardMemory::Pscab { config, .. } | CardMemory::Pscav { config, .. } => config.random_scalar(rng),
        CardMemory::Ssca { .. } => unreachable!("checked by callers"),
    }
}

/// Attack on the identity-based protocol using the stolen `D`.
///
/// For the per-user-generator variant the attacker must commit to one guessed
/// generator before it sees anything, so only that guess becomes testable.
pub fn attack_pscab_reversed<R: RngCore + CryptoRng>(
    memory: &CardMemory,
    server: &PscabServer,
    order: ConfirmationOrder,
    dict: &Dictionary,
    rng: &mut R,
) -> Result<AttackOutcome> {
    let CardMemory::Pscab {
        protocol,
        config,
        identity,
        server_identity,
        server_generator,
        blinded_key,
        ..
    } = memory
    else {
        return Err(not_applicable("reversed-confirmation", memory));
    };
    let (protocol, config) = (*protocol, *config);
    let lab = LabHarness::new();

    let committed = match protocol {
        ProtocolId::Pscabv => Some(rng.gen_range(0..dict.len())),
        _ => None,
    };
    let committed_word = committed.and_then(|i| dict.get(i)).unwrap_or_default();
    let g_c = pscab::user_generator(&config, protocol, identity, committed_word)?;
    let x = nonzero_scalar(memory, rng);
    let r_a = g_c.exp(&x);
    let hello = wire::hello_frame(protocol, identity, &r_a);

    let mut outcome = match order {
        ConfirmationOrder::CardFirst => {
            let (session, _) = server.respond(&hello, rng)?;
            let accepted = session.finish(&random_tag_frame(protocol, rng)).is_ok();
            let mut outcome = AttackOutcome::from_survivors(dict, (0..dict.len()).collect());
            outcome.impersonation = accepted;
            outcome
        }
        ConfirmationOrder::ServerFirst => {
            let (session, reply) = server.respond_server_first(&lab, &hello, rng)?;
            let (r_b, server_tag) = wire::parse_reply_with_confirmation(&config, protocol, &reply)?;
            let (s_a, s_b) = pscab::exchange_scalars(&config, &r_a, &r_b)?;
            // T = e(D^(x + s_A), g_S^s_B * R_B) = sk^H(alpha).
            let blinded = config.pair(&blinded_key.exp(&(x + s_a)), &server_generator.exp(&s_b).mul(&r_b)?)?;
            let key_for = |word: &[u8]| -> Result<[u8; 32]> {
                let h_inv = pscab::password_scalar(&config, word)?.inverse()?;
                Ok(pscab::confirmation_key(&blinded.exp(&h_inv)))
            };
            let mut surviving = Vec::new();
            for (i, word) in dict.words().iter().enumerate() {
                if committed.is_some_and(|c| c != i) {
                    surviving.push(i);
                    continue;
                }
                let k1 = key_for(word)?;
                let expected = pscab::server_confirmation(&k1, identity, server_identity, &r_a, &r_b);
                if tags_equal(&expected, &server_tag) {
                    surviving.push(i);
                }
            }
            let confirmed = committed.or(surviving.first().copied()).filter(|i| surviving.contains(i));
            let accepted = match confirmed {
                Some(i) if surviving.len() == 1 || committed.is_some() => {
                    let k1 = key_for(&dict.words()[i])?;
                    let tag = pscab::card_confirmation(&k1, identity, server_identity, &r_a, &r_b);
                    session
                        .finish_server_first(&lab, &ProtocolFrame::new(protocol, MSG3, tag.to_vec()))
                        .is_ok()
                }
                _ => session.finish_server_first(&lab, &random_tag_frame(protocol, rng)).is_ok(),
            };
            let mut outcome = AttackOutcome::from_survivors(dict, surviving);
            outcome.impersonation = accepted;
            outcome
        }
    };
    outcome.scenario = "reversed-confirmation".into();
    outcome.protocol = protocol.name().into();
    outcome.sessions = 1;
    Ok(outcome)
}

/// Attack on the verifier protocol using the stolen `W = g_C^b`.
pub fn attack_pscav_reversed<R: RngCore + CryptoRng>(
    memory: &CardMemory,
    server: &PscavServer,
    order: ConfirmationOrder,
    dict: &Dictionary,
    rng: &mut R,
) -> Result<AttackOutcome> {
    let CardMemory::Pscav {
        config,
        identity,
        server_identity,
        blinded_generator,
        ..
    } = memory
    else {
        return Err(not_applicable("reversed-confirmation", memory));
    };
    let config = *config;
    let protocol = ProtocolId::Pscav;
    let lab = LabHarness::new();
    // R_A = W^r = g_C^(b r): the attacker never needs g_C itself.
    let r = nonzero_scalar(memory, rng);
    let r_a = blinded_generator.exp(&r);
    let hello = wire::hello_frame(protocol, identity, &r_a);

    let mut outcome = match order {
        ConfirmationOrder::CardFirst => {
            let (session, _) = server.respond(&hello, rng)?;
            let accepted = session.finish(&random_tag_frame(protocol, rng)).is_ok();
            let mut outcome = AttackOutcome::from_survivors(dict, (0..dict.len()).collect());
            outcome.impersonation = accepted;
            outcome
        }
        ConfirmationOrder::ServerFirst => {
            let (session, reply) = server.respond_server_first(&lab, &hello, rng)?;
            let (r_b, server_tag) = wire::parse_reply_with_confirmation(&config, protocol, &reply)?;
            let u = pscav::transcript_scalar(&config, identity, server_identity, &r_a, &r_b)?;
            let secret_for = |word: &[u8]| -> Result<_> {
                let b = pscav::blinding_scalar(&config, word)?;
                let a = pscav::verifier_scalar(&config, word)?;
                Ok(r_b.exp(&(r * b + u * a)))
            };
            let mut surviving = Vec::new();
            for (i, word) in dict.words().iter().enumerate() {
                let sk = secret_for(word)?;
                let expected = pscav::server_confirmation(&sk, identity, server_identity, &r_a, &r_b);
                if tags_equal(&expected, &server_tag) {
                    surviving.push(i);
                }
            }
            let accepted = match surviving.as_slice() {
                [only] => {
                    let sk = secret_for(&dict.words()[*only])?;
                    let tag = pscav::card_confirmation(&sk, identity, server_identity, &r_a, &r_b);
                    session
                        .finish_server_first(&lab, &ProtocolFrame::new(protocol, MSG3, tag.to_vec()))
                        .is_ok()
                }
                _ => session.finish_server_first(&lab, &random_tag_frame(protocol, rng)).is_ok(),
            };
            let mut outcome = AttackOutcome::from_survivors(dict, surviving);
            outcome.impersonation = accepted;
            outcome
        }
    };
    outcome.scenario = "reversed-confirmation".into();
    outcome.protocol = protocol.name().into();
    outcome.sessions = 1;
    Ok(outcome)
}
