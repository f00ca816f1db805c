//! Card images: a card's whole state as a file.
//!
//! After a 4-byte magic the file is a sequence of `tag (1) | length (2, BE) |
//! value` fields in ascending tag order. Nothing the server keeps ever appears
//! here. Once a card is destroyed its secret and randomness fields are written
//! as zero bytes of their usual length.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use zeroize::Zeroizing;

use scauth::card::QueryCounter;
use scauth::chain_rng::RngState;
use scauth::group::GroupConfig;
use scauth::handshake::Credential;
use scauth::pscab::PscabCardCredential;
use scauth::pscav::PscavCardCredential;
use scauth::ssca::SscaCardCredential;
use scauth::wire::ProtocolId;

use crate::error::{NetError, NetResult};
use crate::store::write_private;

pub const MAGIC: &[u8; 4] = b"SCI\x01";

pub const TAG_PROTOCOL: u8 = 0x01;
pub const TAG_SUITE: u8 = 0x02;
pub const TAG_IDENTITY: u8 = 0x03;
pub const TAG_SERVER_IDENTITY: u8 = 0x04;
/// Wrapped key, blinded private key or blinded generator, by protocol.
pub const TAG_CARD_SECRET: u8 = 0x05;
pub const TAG_SERVER_GENERATOR: u8 = 0x06;
pub const TAG_RNG_SEED: u8 = 0x07;
pub const TAG_RNG_CHAIN_KEY: u8 = 0x08;
pub const TAG_RNG_COUNTER: u8 = 0x09;
pub const TAG_USED: u8 = 0x0a;
pub const TAG_LIMIT: u8 = 0x0b;
pub const TAG_DESTROYED: u8 = 0x0c;

/// Tags whose values are zeroed when the card is destroyed.
pub const SECRET_TAGS: [u8; 4] = [TAG_CARD_SECRET, TAG_RNG_SEED, TAG_RNG_CHAIN_KEY, TAG_RNG_COUNTER];

struct Writer(Zeroizing<Vec<u8>>);

impl Writer {
    fn field(&mut self, tag: u8, value: &[u8]) {
        self.0.push(tag);
        self.0.extend_from_slice(&(value.len() as u16).to_be_bytes());
        self.0.extend_from_slice(value);
    }

    fn secret(&mut self, tag: u8, value: &[u8], destroyed: bool) {
        if destroyed {
            self.field(tag, &vec![0; value.len()]);
        } else {
            self.field(tag, value);
        }
    }
}

pub fn encode(card: &Credential) -> Zeroizing<Vec<u8>> {
    let counter = card.counter();
    let destroyed = counter.is_destroyed();
    let (suite, server_identity, secret, server_generator, rng): (_, &[u8], _, _, &RngState) = match card {
        Credential::Ssca(c) => (None, c.server_identity(), Zeroizing::new(c.wrapped_key().to_vec()), None, c.rng()),
        Credential::Pscab(c) => (
            Some(c.config().suite_id()),
            c.server_identity(),
            Zeroizing::new(c.blinded_key().to_bytes()),
            Some(c.server_generator().to_bytes()),
            c.rng(),
        ),
        Credential::Pscav(c) => (
            Some(c.config().suite_id()),
            c.server_identity(),
            Zeroizing::new(c.blinded_generator().to_bytes()),
            None,
            c.rng(),
        ),
    };

    let mut w = Writer(Zeroizing::new(MAGIC.to_vec()));
    w.field(TAG_PROTOCOL, &[card.protocol().byte()]);
    if let Some(suite) = suite {
        w.field(TAG_SUITE, &[suite]);
    }
    w.field(TAG_IDENTITY, card.identity());
    w.field(TAG_SERVER_IDENTITY, server_identity);
    w.secret(TAG_CARD_SECRET, &secret, destroyed);
    if let Some(g_s) = server_generator {
        w.field(TAG_SERVER_GENERATOR, &g_s);
    }
    w.secret(TAG_RNG_SEED, rng.seed(), destroyed);
    w.secret(TAG_RNG_CHAIN_KEY, rng.chain_key(), destroyed);
    w.secret(TAG_RNG_COUNTER, &rng.counter().to_be_bytes(), destroyed);
    w.field(TAG_USED, &counter.used().to_be_bytes());
    w.field(TAG_LIMIT, &counter.limit().to_be_bytes());
    w.field(TAG_DESTROYED, &[destroyed as u8]);
    w.0
}

/// Splits an image into its fields, checking framing and tag order.
pub fn fields(bytes: &[u8]) -> NetResult<BTreeMap<u8, &[u8]>> {
    let rest = bytes.strip_prefix(MAGIC.as_slice()).ok_or(NetError::Image("bad magic"))?;
    let mut out = BTreeMap::new();
    let mut pos = 0;
    let mut last = 0u8;
    while pos < rest.len() {
        let header = rest.get(pos..pos + 3).ok_or(NetError::Image("truncated field header"))?;
        let tag = header[0];
        let len = u16::from_be_bytes([header[1], header[2]]) as usize;
        if tag <= last || tag > TAG_DESTROYED {
            return Err(NetError::Image("unknown, duplicate or out-of-order tag"));
        }
        let value = rest.get(pos + 3..pos + 3 + len).ok_or(NetError::Image("truncated field"))?;
        out.insert(tag, value);
        last = tag;
        pos += 3 + len;
    }
    Ok(out)
}

fn fixed<const N: usize>(fields: &BTreeMap<u8, &[u8]>, tag: u8) -> NetResult<[u8; N]> {
    let value = fields.get(&tag).ok_or(NetError::Image("missing field"))?;
    (*value).try_into().map_err(|_| NetError::Image("wrong field length"))
}

fn bytes(fields: &BTreeMap<u8, &[u8]>, tag: u8) -> NetResult<Vec<u8>> {
    Ok(fields.get(&tag).ok_or(NetError::Image("missing field"))?.to_vec())
}

pub fn decode(image: &[u8]) -> NetResult<Credential> {
    let f = fields(image)?;
    let [protocol] = fixed::<1>(&f, TAG_PROTOCOL)?;
    let protocol = ProtocolId::from_byte(protocol).map_err(|_| NetError::Image("unknown protocol"))?;
    let destroyed = match fixed::<1>(&f, TAG_DESTROYED)? {
        [0] => false,
        [1] => true,
        _ => return Err(NetError::Image("bad destroyed flag")),
    };
    let counter = QueryCounter::from_parts(
        u32::from_be_bytes(fixed(&f, TAG_USED)?),
        u32::from_be_bytes(fixed(&f, TAG_LIMIT)?),
        destroyed,
    );
    let seed = Zeroizing::new(fixed::<32>(&f, TAG_RNG_SEED)?);
    let chain_key = Zeroizing::new(fixed::<32>(&f, TAG_RNG_CHAIN_KEY)?);
    let rng = RngState::from_parts(*seed, *chain_key, u64::from_be_bytes(fixed(&f, TAG_RNG_COUNTER)?));
    let identity = bytes(&f, TAG_IDENTITY)?;
    let server_identity = bytes(&f, TAG_SERVER_IDENTITY)?;
    let secret = Zeroizing::new(bytes(&f, TAG_CARD_SECRET)?);
    if destroyed && SECRET_TAGS.iter().any(|t| f[t].iter().any(|&b| b != 0)) {
        return Err(NetError::Image("destroyed card still holds secrets"));
    }
    let expect_absent = |tag: u8| match f.contains_key(&tag) {
        true => Err(NetError::Image("field not used by this protocol")),
        false => Ok(()),
    };

    let card = match protocol {
        ProtocolId::Ssca => {
            expect_absent(TAG_SUITE)?;
            expect_absent(TAG_SERVER_GENERATOR)?;
            let wrapped: [u8; 32] = secret.as_slice().try_into().map_err(|_| NetError::Image("wrong field length"))?;
            Credential::Ssca(SscaCardCredential::from_parts(identity, server_identity, wrapped, rng, counter))
        }
        ProtocolId::Pscab | ProtocolId::Pscabv => {
            let config = suite(&f)?;
            let g_s = config
                .decode_element(&bytes(&f, TAG_SERVER_GENERATOR)?)
                .map_err(|_| NetError::Image("bad server generator"))?;
            let key = if destroyed {
                config.identity()
            } else {
                config.decode_element(&secret).map_err(|_| NetError::Image("bad card secret"))?
            };
            let card = PscabCardCredential::from_parts(protocol, config, identity, server_identity, g_s, key, rng, counter)?;
            Credential::Pscab(card)
        }
        ProtocolId::Pscav => {
            expect_absent(TAG_SERVER_GENERATOR)?;
            let config = suite(&f)?;
            let w = if destroyed {
                config.identity()
            } else {
                config.decode_element(&secret).map_err(|_| NetError::Image("bad card secret"))?
            };
            Credential::Pscav(PscavCardCredential::from_parts(config, identity, server_identity, w, rng, counter))
        }
    };
    Ok(card)
}

fn suite(f: &BTreeMap<u8, &[u8]>) -> NetResult<GroupConfig> {
    let [id] = fixed::<1>(f, TAG_SUITE)?;
    GroupConfig::from_suite_id(id).map_err(|_| NetError::Image("unknown suite"))
}

pub fn load(path: &Path) -> NetResult<Credential> {
    let raw = Zeroizing::new(fs::read(path).map_err(|e| NetError::file(path, e))?);
    decode(&raw)
}

pub fn save(path: &Path, card: &Credential) -> NetResult<()> {
    write_private(path, &encode(card))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use scauth::handshake::provision;

    fn card(protocol: ProtocolId, limit: u32) -> Credential {
        let mut rng = ChaCha20Rng::seed_from_u64(protocol.byte() as u64);
        provision(protocol, GroupConfig::mersenne61(), b"card", b"srv", b"pw", limit, &mut rng).unwrap().0
    }

    #[test]
    fn images_round_trip() {
        for p in ProtocolId::ALL {
            let mut c = card(p, 5);
            c.start(b"pw").unwrap();
            let image = encode(&c);
            let back = decode(&image).unwrap();
            assert_eq!(*encode(&back), *image, "{p}");
            assert_eq!(back.memory_image(), c.memory_image());
            assert_eq!(back.counter(), c.counter());
        }
    }

    #[test]
    fn destroyed_images_hold_only_zero_secrets() {
        for p in ProtocolId::ALL {
            let mut c = card(p, 1);
            c.start(b"pw").unwrap();
            assert!(c.start(b"pw").is_err());
            let image = encode(&c);
            let f = fields(&image).unwrap();
            for tag in SECRET_TAGS {
                assert!(f[&tag].iter().all(|&b| b == 0), "{p} tag {tag}");
            }
            let back = decode(&image).unwrap();
            assert!(back.counter().is_destroyed());
        }
    }

    #[test]
    fn corrupt_images_are_refused() {
        let image = encode(&card(ProtocolId::Pscav, 0));
        assert!(decode(&image[..image.len() - 1]).is_err());
        assert!(decode(&image[1..]).is_err());
        let mut extra = image.to_vec();
        extra.extend_from_slice(&[TAG_USED, 0, 0]);
        assert!(decode(&extra).is_err());
        let mut wrong_protocol = image.to_vec();
        wrong_protocol[7] = 0x01;
        assert!(decode(&wrong_protocol).is_err());
    }

    #[test]
    fn live_secret_in_destroyed_image_is_refused() {
        let image = encode(&card(ProtocolId::Ssca, 0));
        let mut flipped = image.to_vec();
        let n = flipped.len();
        flipped[n - 1] = 1;
        assert!(matches!(decode(&flipped), Err(NetError::Image(_))));
    }
}
