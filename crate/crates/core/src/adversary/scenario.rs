//! Named, seeded attack scenarios.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::group::GroupConfig;
use crate::handshake::{provision, run_in_memory, Authenticator, CardStep, Credential};
use crate::ssca::Reply;
use crate::wire::{self, ProtocolFrame, ProtocolId, MSG2};
use crate::{Error, Result};

use super::{
    attack_pscab_reversed, attack_pscav_reversed, consistent, offline_filter, tampering_rejected, AttackOutcome,
    AttackerModel, AttackerView, CardMemory, Capability, ConfirmationOrder, Dictionary,
};

pub const SCENARIOS: [&str; 11] = [
    "eavesdrop",
    "replay",
    "mitm",
    "malicious-reader",
    "stolen-card-query",
    "stolen-card-read",
    "memory-stick",
    "counter-exhaustion",
    "reversed-confirmation",
    "secure-confirmation",
    "small-subgroup",
];

const CARD_IDENTITY: &[u8] = b"card-holder";
const SERVER_IDENTITY: &[u8] = b"auth-server";

/// A provisioned card and server plus the attacker's accounting.
struct World {
    protocol: ProtocolId,
    card: Credential,
    server: Authenticator,
    password: Vec<u8>,
    rng: ChaCha20Rng,
    sessions: u32,
    queries: u32,
}

impl World {
    fn new(protocol: ProtocolId, config: GroupConfig, limit: u32, dict: &Dictionary, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let password = dict
            .true_password()
            .map(<[u8]>::to_vec)
            .unwrap_or_else(|| format!("outside-dictionary-{seed}").into_bytes());
        let (card, server) = provision(protocol, config, CARD_IDENTITY, SERVER_IDENTITY, &password, limit, &mut rng)?;
        Ok(World {
            protocol,
            card,
            server,
            password,
            rng,
            sessions: 0,
            queries: 0,
        })
    }

    /// The legitimate owner authenticates once; returns the wire transcript.
    fn owner_run(&mut self) -> Vec<ProtocolFrame> {
        let password = self.password.clone();
        run_in_memory(&mut self.card, &password, &self.server, &mut self.rng).transcript()
    }

    fn outcome(&self, scenario: &str, model: AttackerModel, seed: u64, mut outcome: AttackOutcome) -> AttackOutcome {
        outcome.scenario = scenario.to_string();
        outcome.protocol = self.protocol.name().to_string();
        outcome.model = model.to_string();
        outcome.sessions += self.sessions;
        outcome.queries += self.queries;
        outcome.seed = seed;
        outcome
    }
}

fn all_survive(dict: &Dictionary) -> AttackOutcome {
    AttackOutcome::from_survivors(dict, (0..dict.len()).collect())
}

/// Runs the named scenario. Identical arguments give identical outcomes.
pub fn run_scenario(
    name: &str,
    protocol: ProtocolId,
    model: AttackerModel,
    dict: &Dictionary,
    seed: u64,
) -> Result<AttackOutcome> {
    let config = GroupConfig::mersenne61();
    let limit = model.card_limit();
    match name {
        "eavesdrop" => {
            model.require(Capability::ObserveTranscripts)?;
            let mut w = World::new(protocol, config, limit, dict, seed)?;
            let transcript = w.owner_run();
            let view = AttackerView {
                memory: None,
                transcript: Some(transcript),
            };
            Ok(w.outcome(name, model, seed, offline_filter(&view, dict, consistent)))
        }
        "replay" => {
            model.require(Capability::ObserveTranscripts)?;
            model.require(Capability::ContactServer)?;
            let mut w = World::new(protocol, config, limit, dict, seed)?;
            let transcript = w.owner_run();
            let accepted = replay(&mut w, &transcript);
            let mut outcome = all_survive(dict);
            outcome.impersonation = accepted;
            Ok(w.outcome(name, model, seed, outcome))
        }
        "mitm" => {
            model.require(Capability::ContactServer)?;
            let mut w = World::new(protocol, config, limit, dict, seed)?;
            let mut outcome = all_survive(dict);
            outcome.impersonation = mitm(&mut w, config)?;
            Ok(w.outcome(name, model, seed, outcome))
        }
        "malicious-reader" => {
            model.require(Capability::ControlReader)?;
            let mut w = World::new(protocol, config, limit, dict, seed)?;
            // The reader records the typed password during an honest run.
            let captured = w.password.clone();
            w.owner_run();
            let mut forged = forge_card(&w.card, &mut w.rng);
            let accepted = attempt(&mut forged, &captured, &w.server, &mut w.rng)?;
            w.sessions += 1;
            let known: Vec<usize> = dict.true_index().into_iter().collect();
            let mut outcome = AttackOutcome::from_survivors(dict, known);
            outcome.impersonation = accepted;
            Ok(w.outcome(name, model, seed, outcome))
        }
        "stolen-card-query" => {
            model.require(Capability::QueryCard)?;
            let mut w = World::new(protocol, config, limit, dict, seed)?;
            let mut surviving: Vec<usize> = (0..dict.len()).collect();
            let mut accepted = false;
            for (i, word) in dict.words().iter().enumerate() {
                let result = attempt(&mut w.card, word, &w.server, &mut w.rng);
                if result.is_ok() {
                    w.sessions += 1;
                }
                match result {
                    Ok(true) => {
                        w.queries += 1;
                        surviving = vec![i];
                        accepted = true;
                        break;
                    }
                    Ok(false) => {
                        w.queries += 1;
                        surviving.retain(|&j| j != i);
                    }
                    Err(_) => break,
                }
            }
            let mut outcome = AttackOutcome::from_survivors(dict, surviving);
            outcome.impersonation = accepted;
            Ok(w.outcome(name, model, seed, outcome))
        }
        "stolen-card-read" | "memory-stick" => {
            if name == "memory-stick" && !matches!(model, AttackerModel::TypeIV | AttackerModel::TypeIVPrime) {
                return Err(Error::ModelMismatch {
                    model: model.to_string(),
                    capability: "memory_stick",
                });
            }
            model.require(Capability::ReadCardMemory)?;
            let mut w = World::new(protocol, config, limit, dict, seed)?;
            let observed = w.owner_run();
            let view = AttackerView {
                memory: Some(CardMemory::read(&w.card)),
                transcript: model.has(Capability::ObserveTranscripts).then_some(observed),
            };
            let mut outcome = offline_filter(&view, dict, consistent);
            if let ([only], Some(memory)) = (outcome.surviving_indices.as_slice(), &view.memory) {
                let mut clone = memory.clone_card();
                outcome.impersonation = attempt(&mut clone, &dict.words()[*only], &w.server, &mut w.rng)?;
                w.sessions += 1;
            }
            Ok(w.outcome(name, model, seed, outcome))
        }
        "counter-exhaustion" => {
            model.require(Capability::QueryCard)?;
            let mut w = World::new(protocol, config, limit, dict, seed)?;
            let cap = if limit == 0 { dict.len() as u32 } else { limit + 1 };
            for i in 0..cap {
                let word = dict.get(i as usize % dict.len()).unwrap_or_default().to_vec();
                match w.card.start(&word) {
                    Ok(_) => w.queries += 1,
                    Err(_) => break,
                }
            }
            Ok(w.outcome(name, model, seed, all_survive(dict)))
        }
        "reversed-confirmation" | "secure-confirmation" => {
            model.require(Capability::ReadCardMemory)?;
            model.require(Capability::ContactServer)?;
            let order = if name == "reversed-confirmation" {
                ConfirmationOrder::ServerFirst
            } else {
                ConfirmationOrder::CardFirst
            };
            let mut w = World::new(protocol, config, limit, dict, seed)?;
            let memory = CardMemory::read(&w.card);
            let outcome = match &w.server {
                Authenticator::Pscab(server) => attack_pscab_reversed(&memory, server, order, dict, &mut w.rng)?,
                Authenticator::Pscav(server) => attack_pscav_reversed(&memory, server, order, dict, &mut w.rng)?,
                Authenticator::Ssca(_) => {
                    return Err(Error::NotApplicable {
                        scenario: name.to_string(),
                        protocol: protocol.name(),
                    })
                }
            };
            Ok(w.outcome(name, model, seed, outcome))
        }
        "small-subgroup" => {
            model.require(Capability::ContactServer)?;
            let config = GroupConfig::mersenne61_with_cofactor(3)?;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let rejected = tampering_rejected(protocol, &config, &mut rng)?;
            let mut outcome = all_survive(dict);
            outcome.scenario = name.to_string();
            outcome.protocol = protocol.name().to_string();
            outcome.model = model.to_string();
            outcome.impersonation = !rejected;
            outcome.sessions = 2;
            outcome.seed = seed;
            Ok(outcome)
        }
        other => Err(Error::UnknownScenario(other.to_string())),
    }
}

/// One online attempt through `card`. Returns whether the server accepted.
fn attempt(card: &mut Credential, password: &[u8], server: &Authenticator, rng: &mut ChaCha20Rng) -> Result<bool> {
    let report = run_in_memory(card, password, server, rng);
    if let Err(Error::CardDestroyed) = report.card_result {
        return Err(Error::CardDestroyed);
    }
    Ok(report.server_result.is_ok())
}

/// Replays the owner's card messages into a fresh server session.
fn replay(w: &mut World, transcript: &[ProtocolFrame]) -> bool {
    let Some(hello) = transcript.first() else {
        return false;
    };
    w.sessions += 1;
    let Ok((session, _)) = w.server.respond(hello, &mut w.rng) else {
        return false;
    };
    let card_confirmation = transcript.iter().skip(1).find(|f| f.msg_type == wire::MSG3);
    match card_confirmation {
        Some(f3) => session.finish(f3).is_ok(),
        None => false,
    }
}

/// Swaps the server's reply for one of the attacker's making, then forwards
/// whatever the card answers. True if either side accepts.
fn mitm(w: &mut World, config: GroupConfig) -> Result<bool> {
    let password = w.password.clone();
    let (flow, hello) = w.card.start(&password)?;
    w.sessions += 1;
    let (session, reply) = w.server.respond(&hello, &mut w.rng)?;
    let forged = match w.protocol {
        ProtocolId::Ssca => {
            let mut r = Reply::parse(&reply)?;
            w.rng.fill_bytes(&mut r.ciphertext);
            w.rng.fill_bytes(&mut r.tag);
            r.to_frame()
        }
        p => {
            let own = config.subgroup_generator().exp(&config.random_scalar(&mut w.rng));
            ProtocolFrame::new(p, MSG2, own.to_bytes())
        }
    };
    let card_answer = match flow.step(&mut w.card, &password, &forged) {
        Ok(CardStep::Accept(..)) => return Ok(true),
        Ok(CardStep::Continue(_, f3)) => f3,
        Err(_) => return Ok(false),
    };
    Ok(session.finish(&card_answer).is_ok())
}

/// A card of the right shape whose secrets the attacker made up.
fn forge_card<R: Rng>(original: &Credential, rng: &mut R) -> Credential {
    let mut memory = CardMemory::read(original);
    match &mut memory {
        CardMemory::Ssca { wrapped_key, .. } => rng.fill(wrapped_key),
        CardMemory::Pscab {
            config, blinded_key, ..
        } => *blinded_key = config.subgroup_generator().pow_int(rng.gen_range(1..config.q())),
        CardMemory::Pscav {
            config,
            blinded_generator,
            ..
        } => *blinded_generator = config.subgroup_generator().pow_int(rng.gen_range(1..config.q())),
    }
    memory.clone_card()
}
