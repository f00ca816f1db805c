//! The server's persistent state as a line-oriented text file.
//!
//! ```text
//! id:<server identity>
//! suite:<suite id>
//! master:01:<symmetric master key>
//! master:02:<identity-based master scalar, shared by 02 and 03>
//! master:04:<verifier master key>
//! 03:<identity>:<user generator>
//! 04:<identity>:<user generator>:<verifier>
//! ```
//!
//! Every field is lowercase hex. Lines are written in a fixed order with
//! records sorted by identity, so saving a loaded store reproduces the file
//! byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{CryptoRng, RngCore};
use zeroize::Zeroizing;

use scauth::chain_rng::RngState;
use scauth::group::{GroupConfig, GroupElement};
use scauth::handshake::{Authenticator, Credential};
use scauth::pscab::{self, PscabMasterKey, PscabParams, PscabServer};
use scauth::pscav::{self, PscavMasterSecret, PscavServer, PscavServerRecord};
use scauth::ssca::{SscaCardCredential, SscaMasterSecret, SscaServer};
use scauth::wire::ProtocolId;

use crate::error::{NetError, NetResult};

pub struct ServerStore {
    config: GroupConfig,
    server_identity: Vec<u8>,
    ssca: Option<SscaMasterSecret>,
    pscab: Option<PscabMasterKey>,
    pscav: Option<PscavMasterSecret>,
    pscabv_users: BTreeMap<Vec<u8>, GroupElement>,
    pscav_users: BTreeMap<Vec<u8>, PscavServerRecord>,
}

impl std::fmt::Debug for ServerStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerStore")
            .field("server_identity", &String::from_utf8_lossy(&self.server_identity))
            .field("protocols", &self.protocols())
            .finish_non_exhaustive()
    }
}

impl ServerStore {
    pub fn new(config: GroupConfig, server_identity: &[u8]) -> NetResult<Self> {
        if server_identity.is_empty() {
            return Err(scauth::Error::EmptyIdentity.into());
        }
        Ok(ServerStore {
            config,
            server_identity: server_identity.to_vec(),
            ssca: None,
            pscab: None,
            pscav: None,
            pscabv_users: BTreeMap::new(),
            pscav_users: BTreeMap::new(),
        })
    }

    pub fn server_identity(&self) -> &[u8] {
        &self.server_identity
    }

    pub fn config(&self) -> GroupConfig {
        self.config
    }

    /// Protocols this store can serve.
    pub fn protocols(&self) -> Vec<ProtocolId> {
        let mut out = Vec::new();
        if self.ssca.is_some() {
            out.push(ProtocolId::Ssca);
        }
        if self.pscab.is_some() {
            out.push(ProtocolId::Pscab);
            if !self.pscabv_users.is_empty() {
                out.push(ProtocolId::Pscabv);
            }
        }
        if self.pscav.is_some() {
            out.push(ProtocolId::Pscav);
        }
        out
    }

    /// Issues a card, creating the protocol's master secret on first use.
    /// Re-issuing to an identity replaces its record.
    pub fn personalize<R: RngCore + CryptoRng>(
        &mut self,
        protocol: ProtocolId,
        identity: &[u8],
        password: &[u8],
        counter_limit: u32,
        rng: &mut R,
    ) -> NetResult<Credential> {
        let mut seed = Zeroizing::new([0u8; 32]);
        let mut chain_key = Zeroizing::new([0u8; 32]);
        rng.fill_bytes(seed.as_mut());
        rng.fill_bytes(chain_key.as_mut());
        let card_rng = RngState::new(*seed, *chain_key);
        let config = self.config;
        let server_identity = self.server_identity.clone();
        let card = match protocol {
            ProtocolId::Ssca => {
                let master = self.ssca.get_or_insert_with(|| SscaMasterSecret::generate(rng));
                let card =
                    SscaCardCredential::personalize(master, identity, &server_identity, password, card_rng, counter_limit)?;
                Credential::Ssca(card)
            }
            ProtocolId::Pscab => {
                let params = PscabParams::setup(config, &server_identity)?;
                let master = self.pscab.get_or_insert_with(|| PscabMasterKey::generate(&config, rng));
                Credential::Pscab(pscab::extract(&params, master, identity, password, card_rng, counter_limit)?)
            }
            ProtocolId::Pscabv => {
                let params = PscabParams::setup(config, &server_identity)?;
                let master = self.pscab.get_or_insert_with(|| PscabMasterKey::generate(&config, rng));
                let (card, record) = pscab::extract_v(&params, master, identity, password, card_rng, counter_limit)?;
                self.pscabv_users.insert(identity.to_vec(), record);
                Credential::Pscab(card)
            }
            ProtocolId::Pscav => {
                let master = self.pscav.get_or_insert_with(|| PscavMasterSecret::generate(rng));
                let (card, record) =
                    pscav::personalize(&config, master, identity, &server_identity, password, card_rng, counter_limit)?;
                self.pscav_users.insert(identity.to_vec(), record);
                Credential::Pscav(card)
            }
        };
        Ok(card)
    }

    /// Server state for one protocol, or `None` if nothing was issued for it.
    pub fn authenticator(&self, protocol: ProtocolId) -> NetResult<Option<Authenticator>> {
        if !self.protocols().contains(&protocol) {
            return Ok(None);
        }
        let s = &self.server_identity;
        let server = match protocol {
            ProtocolId::Ssca => Authenticator::Ssca(SscaServer::new(self.ssca.clone().expect("listed"), s)),
            ProtocolId::Pscab => {
                let params = PscabParams::setup(self.config, s)?;
                Authenticator::Pscab(PscabServer::new(params, self.pscab.clone().expect("listed")))
            }
            ProtocolId::Pscabv => {
                let params = PscabParams::setup(self.config, s)?;
                let master = self.pscab.clone().expect("listed");
                Authenticator::Pscab(PscabServer::with_user_records(params, master, self.pscabv_users.clone()))
            }
            ProtocolId::Pscav => {
                let mut server = PscavServer::new(self.config, s);
                for record in self.pscav_users.values() {
                    server.register(record.clone());
                }
                Authenticator::Pscav(server)
            }
        };
        Ok(Some(server))
    }

    /// The canonical text form.
    pub fn render(&self) -> Zeroizing<String> {
        // Sized up front so that growing never leaves a stray copy behind.
        let records = self.pscabv_users.len() + self.pscav_users.len();
        let mut out = Zeroizing::new(String::with_capacity(512 + 256 * records));
        let mut line = |fields: &[&str]| {
            for (i, field) in fields.iter().enumerate() {
                if i > 0 {
                    out.push(':');
                }
                out.push_str(field);
            }
            out.push('\n');
        };
        line(&["id", &hex::encode(&self.server_identity)]);
        line(&["suite", &hex::encode([self.config.suite_id()])]);
        if let Some(m) = &self.ssca {
            line(&["master", "01", &Zeroizing::new(hex::encode(m.as_bytes()))]);
        }
        if let Some(m) = &self.pscab {
            line(&["master", "02", &Zeroizing::new(hex::encode(m.scalar().to_bytes()))]);
        }
        if let Some(m) = &self.pscav {
            line(&["master", "04", &Zeroizing::new(hex::encode(m.as_bytes()))]);
        }
        for (identity, g_c) in &self.pscabv_users {
            line(&["03", &hex::encode(identity), &hex::encode(g_c.to_bytes())]);
        }
        for (identity, record) in &self.pscav_users {
            line(&[
                "04",
                &hex::encode(identity),
                &hex::encode(record.user_generator().to_bytes()),
                &hex::encode(record.verifier().to_bytes()),
            ]);
        }
        out
    }

    pub fn parse(text: &str) -> NetResult<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let bad = |line: usize, reason: &'static str| NetError::Store { line, reason };

        let (n, first) = lines.next().ok_or(bad(1, "empty store"))?;
        let server_identity = match first.split_once(':') {
            Some(("id", h)) => decode_hex(h).ok_or(bad(n, "bad server identity"))?,
            _ => return Err(bad(n, "missing server identity")),
        };
        let (n, second) = lines.next().ok_or(bad(2, "missing suite"))?;
        let suite = match second.split_once(':') {
            Some(("suite", h)) => match decode_hex(h).as_deref() {
                Some(&[id]) => id,
                _ => return Err(bad(n, "bad suite")),
            },
            _ => return Err(bad(n, "missing suite")),
        };
        let config = GroupConfig::from_suite_id(suite).map_err(|_| bad(n, "unknown suite"))?;
        let mut store = ServerStore::new(config, &server_identity).map_err(|_| bad(1, "empty server identity"))?;

        for (n, raw) in lines {
            let fields: Vec<&str> = raw.split(':').collect();
            let field = |i: usize| decode_hex(fields[i]).ok_or(bad(n, "bad hex field"));
            match fields.as_slice() {
                ["master", "01", _] if store.ssca.is_none() => {
                    let key = Zeroizing::new(field(2)?);
                    let bytes: [u8; 32] = key.as_slice().try_into().map_err(|_| bad(n, "bad key length"))?;
                    store.ssca = Some(SscaMasterSecret::new(bytes));
                }
                ["master", "02", _] if store.pscab.is_none() => {
                    let key = Zeroizing::new(field(2)?);
                    let scalar = config.decode_scalar(&key).map_err(|_| bad(n, "bad master scalar"))?;
                    store.pscab = Some(PscabMasterKey::from_scalar(scalar).map_err(|_| bad(n, "zero master scalar"))?);
                }
                ["master", "04", _] if store.pscav.is_none() => {
                    let key = Zeroizing::new(field(2)?);
                    let bytes: [u8; 32] = key.as_slice().try_into().map_err(|_| bad(n, "bad key length"))?;
                    store.pscav = Some(PscavMasterSecret::new(bytes));
                }
                ["03", _, _] => {
                    let identity = field(1)?;
                    let g_c = config.decode_element(&field(2)?).map_err(|_| bad(n, "bad element"))?;
                    config.validate_peer_element(&g_c).map_err(|_| bad(n, "bad element"))?;
                    if store.pscabv_users.insert(identity, g_c).is_some() {
                        return Err(bad(n, "duplicate record"));
                    }
                }
                ["04", _, _, _] => {
                    let identity = field(1)?;
                    let g_c = config.decode_element(&field(2)?).map_err(|_| bad(n, "bad element"))?;
                    let v = config.decode_element(&field(3)?).map_err(|_| bad(n, "bad element"))?;
                    let record =
                        PscavServerRecord::from_parts(identity.clone(), g_c, v).map_err(|_| bad(n, "bad element"))?;
                    if store.pscav_users.insert(identity, record).is_some() {
                        return Err(bad(n, "duplicate record"));
                    }
                }
                _ => return Err(bad(n, "unrecognized line")),
            }
        }
        if !store.pscabv_users.is_empty() && store.pscab.is_none() {
            return Err(bad(0, "records without a master key"));
        }
        if !store.pscav_users.is_empty() && store.pscav.is_none() {
            return Err(bad(0, "records without a master key"));
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> NetResult<Self> {
        let text = Zeroizing::new(fs::read_to_string(path).map_err(|e| NetError::file(path, e))?);
        ServerStore::parse(&text)
    }

    pub fn save(&self, path: &Path) -> NetResult<()> {
        write_private(path, self.render().as_bytes())
    }
}

/// Accepts only lowercase hex, so that every file has one spelling.
fn decode_hex(s: &str) -> Option<Vec<u8>> {
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return None;
    }
    hex::decode(s).ok()
}

/// Writes through a temporary sibling and renames, so a crash never leaves a
/// half-written file. On Unix the file is readable by the owner only.
pub(crate) fn write_private(path: &Path, bytes: &[u8]) -> NetResult<()> {
    use std::io::Write;
    let tmp = path.with_extension("tmp");
    let mut options = fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut file = options.open(&tmp).map_err(|e| NetError::file(&tmp, e))?;
    file.write_all(bytes).map_err(|e| NetError::file(&tmp, e))?;
    file.sync_all().map_err(|e| NetError::file(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| NetError::file(path, e))
}
