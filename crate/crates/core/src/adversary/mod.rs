//! Attacker simulations.
//!
//! Each attacker model grants a fixed set of capabilities. Scenarios set up a
//! card and a server, play the attacker with exactly those capabilities, and
//! report how many dictionary words stay consistent with everything the
//! attacker saw, and whether it got a server to accept.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

mod dictionary;
mod filter;
mod reversed;
mod scenario;
mod subgroup;

pub use dictionary::Dictionary;
pub use filter::{consistent, offline_filter, AttackerView, CardMemory};
pub use reversed::{attack_pscab_reversed, attack_pscav_reversed, ConfirmationOrder};
pub use scenario::{run_scenario, SCENARIOS};
pub use subgroup::{attack_small_subgroup, tampering_rejected, SubgroupTrial};

use crate::{Error, Result};

/// Unlocks the reversed-confirmation protocol variants. Only this crate can
/// create one, so no deployment path can run them.
pub struct LabHarness(());

impl LabHarness {
    pub(crate) fn new() -> Self {
        LabHarness(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Capability {
    QueryCard,
    ReadCardMemory,
    ObserveTranscripts,
    ControlReader,
    ContactServer,
}

impl Capability {
    pub fn name(self) -> &'static str {
        match self {
            Capability::QueryCard => "query_card",
            Capability::ReadCardMemory => "read_card_memory",
            Capability::ObserveTranscripts => "observe_transcripts",
            Capability::ControlReader => "control_reader",
            Capability::ContactServer => "contact_server",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttackerModel {
    /// Tamper-resistant card, unlimited queries to a stolen card.
    TypeI,
    /// As Type I, but the card self-destructs after the given number of queries.
    TypeII(u32),
    /// A stolen card's memory can be read out.
    TypeIII,
    /// Type III without any observed runs before the theft.
    TypeIIIPrime,
    /// Memory stick in a trusted computer: no malicious reader, no card CPU to query.
    TypeIV,
    /// Type IV without any observed runs before the theft.
    TypeIVPrime,
}

impl AttackerModel {
    pub const DEFAULT_LIMIT: u32 = 16;

    pub fn capabilities(self) -> &'static [Capability] {
        use Capability::*;
        match self {
            AttackerModel::TypeI | AttackerModel::TypeII(_) => {
                &[QueryCard, ObserveTranscripts, ControlReader, ContactServer]
            }
            AttackerModel::TypeIII => &[QueryCard, ReadCardMemory, ObserveTranscripts, ControlReader, ContactServer],
            AttackerModel::TypeIIIPrime => &[QueryCard, ReadCardMemory, ControlReader, ContactServer],
            AttackerModel::TypeIV => &[ReadCardMemory, ObserveTranscripts, ContactServer],
            AttackerModel::TypeIVPrime => &[ReadCardMemory, ContactServer],
        }
    }

    pub fn has(self, capability: Capability) -> bool {
        self.capabilities().contains(&capability)
    }

    pub fn require(self, capability: Capability) -> Result<()> {
        if self.has(capability) {
            Ok(())
        } else {
            Err(Error::ModelMismatch {
                model: self.to_string(),
                capability: capability.name(),
            })
        }
    }

    /// Counter limit of the cards in this model's world (0 = none).
    pub fn card_limit(self) -> u32 {
        match self {
            AttackerModel::TypeII(limit) => limit,
            _ => 0,
        }
    }
}

impl fmt::Display for AttackerModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackerModel::TypeI => f.write_str("type-i"),
            AttackerModel::TypeII(limit) => write!(f, "type-ii:{limit}"),
            AttackerModel::TypeIII => f.write_str("type-iii"),
            AttackerModel::TypeIIIPrime => f.write_str("type-iii-prime"),
            AttackerModel::TypeIV => f.write_str("type-iv"),
            AttackerModel::TypeIVPrime => f.write_str("type-iv-prime"),
        }
    }
}

impl FromStr for AttackerModel {
    type Err = Error;

    /// Accepts the display names; `type-ii` alone uses the default limit.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        let (base, limit) = match s.split_once(':') {
            Some((b, l)) => (b, Some(l)),
            None => (s.as_str(), None),
        };
        let model = match (base, limit) {
            ("type-i", None) => AttackerModel::TypeI,
            ("type-ii", None) => AttackerModel::TypeII(Self::DEFAULT_LIMIT),
            ("type-ii", Some(l)) => {
                let limit: u32 = l.parse().map_err(|_| Error::InvalidConfig("counter limit must be a number"))?;
                if limit == 0 {
                    return Err(Error::InvalidConfig("counter limit must be positive"));
                }
                AttackerModel::TypeII(limit)
            }
            ("type-iii", None) => AttackerModel::TypeIII,
            ("type-iii-prime", None) => AttackerModel::TypeIIIPrime,
            ("type-iv", None) => AttackerModel::TypeIV,
            ("type-iv-prime", None) => AttackerModel::TypeIVPrime,
            _ => return Err(Error::InvalidConfig("unknown attacker model")),
        };
        Ok(model)
    }
}

/// Result of one attack, in the shape of the JSON report line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackOutcome {
    pub scenario: String,
    pub protocol: String,
    pub model: String,
    pub dict_size: usize,
    /// Dictionary words still consistent with the attacker's view.
    pub surviving: usize,
    /// Whether a server (or card) accepted the attacker.
    pub impersonation: bool,
    pub sessions: u32,
    pub queries: u32,
    pub seed: u64,
    #[serde(skip)]
    pub surviving_indices: Vec<usize>,
    #[serde(skip)]
    pub true_password_present: bool,
}

impl AttackOutcome {
    pub(crate) fn from_survivors(dict: &Dictionary, surviving_indices: Vec<usize>) -> Self {
        AttackOutcome {
            scenario: String::new(),
            protocol: String::new(),
            model: String::new(),
            dict_size: dict.len(),
            surviving: surviving_indices.len(),
            impersonation: false,
            sessions: 0,
            queries: 0,
            seed: 0,
            surviving_indices,
            true_password_present: dict.true_index().is_some(),
        }
    }

    /// True unless the real password was in the dictionary and got eliminated.
    pub fn is_sound(&self, dict: &Dictionary) -> bool {
        dict.true_index().is_none_or(|i| self.surviving_indices.contains(&i))
    }
}
