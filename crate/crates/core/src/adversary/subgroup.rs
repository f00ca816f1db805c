//! Small-subgroup confinement.
//!
//! In a group of order `q * t` an active attacker raises both Diffie-Hellman
//! shares to the power `q`. The shared value then lies in the order-`t`
//! subgroup, and one observed key-confirmation tag lets the attacker find it
//! in at most `t` guesses. The unprotected exchange below exists only to show
//! that; the real protocols check subgroup membership and refuse.

use rand::{CryptoRng, Rng, RngCore};

use crate::group::{GroupConfig, GroupElement};
use crate::handshake::provision;
use crate::hash::{hmac, kdf, tags_equal};
use crate::ssca::{Hello, Reply};
use crate::wire::{self, ProtocolFrame, ProtocolId, MSG2};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubgroupTrial {
    pub cofactor: u64,
    /// The attacker found the key both victims derived.
    pub recovered: bool,
    pub guesses: u32,
}

fn baseline_tag(key: &GroupElement) -> [u8; 32] {
    hmac(&kdf(&[b"dh-baseline", &key.to_bytes()]), b"client finished")
}

/// One man-in-the-middle run against a Diffie-Hellman exchange in the full
/// group that performs no membership checks.
pub fn attack_small_subgroup<R: RngCore + CryptoRng>(config: &GroupConfig, rng: &mut R) -> Result<SubgroupTrial> {
    let t = config.cofactor();
    if t == 1 {
        return Err(Error::NotApplicable {
            scenario: "small-subgroup".into(),
            protocol: "dh-baseline",
        });
    }
    let g = config.generator();
    let n = config.order();
    let (a, b) = (rng.gen_range(1..n), rng.gen_range(1..n));
    let (share_a, share_b) = (g.pow_int(a), g.pow_int(b));

    // The attacker substitutes X^q for each share in transit.
    let seen_by_b = share_a.pow_int(config.q());
    let seen_by_a = share_b.pow_int(config.q());
    let key_a = seen_by_a.pow_int(a);
    let key_b = seen_by_b.pow_int(b);
    let tag = baseline_tag(&key_a);

    let mut guesses = 0;
    let mut found = None;
    for i in 0..t {
        guesses += 1;
        let candidate = g.pow_int(config.q() * i);
        if tags_equal(&baseline_tag(&candidate), &tag) {
            found = Some(candidate);
            break;
        }
    }
    Ok(SubgroupTrial {
        cofactor: t,
        recovered: found == Some(key_a) && key_a == key_b,
        guesses,
    })
}

/// Pushes the other party's element out of the prime-order subgroup, or for
/// the symmetric protocol, flips a ciphertext byte.
fn tamper(config: &GroupConfig, frame: &ProtocolFrame) -> Result<ProtocolFrame> {
    let small = config.element_from_exponent(config.q());
    let protocol = frame.protocol;
    match (protocol, frame.msg_type) {
        (ProtocolId::Ssca, MSG2) => {
            let mut reply = Reply::parse(frame)?;
            reply.ciphertext[0] ^= 0x80;
            Ok(reply.to_frame())
        }
        (ProtocolId::Ssca, _) => {
            let mut hello = Hello::parse(frame)?;
            hello.ciphertext[0] ^= 0x80;
            Ok(hello.to_frame())
        }
        (_, MSG2) => {
            let r_b = wire::parse_reply(config, protocol, frame)?;
            Ok(ProtocolFrame::new(protocol, MSG2, r_b.mul(&small)?.to_bytes()))
        }
        _ => {
            let (identity, r_a) = wire::parse_hello(config, protocol, frame)?;
            Ok(wire::hello_frame(protocol, &identity, &r_a.mul(&small)?))
        }
    }
}

/// Tampers once with each direction of a run and reports whether both the
/// server and the card refused the tampered message.
pub fn tampering_rejected<R: RngCore + CryptoRng>(
    protocol: ProtocolId,
    config: &GroupConfig,
    rng: &mut R,
) -> Result<bool> {
    const PASSWORD: &[u8] = b"subgroup-demo";
    let (mut card, server) = provision(protocol, *config, b"victim", b"server", PASSWORD, 0, rng)?;

    let (_, hello) = card.start(PASSWORD)?;
    let server_refused = server.respond(&tamper(config, &hello)?, rng).is_err();

    let (flow, hello) = card.start(PASSWORD)?;
    let (_, reply) = server.respond(&hello, rng)?;
    let card_refused = flow.step(&mut card, PASSWORD, &tamper(config, &reply)?).is_err();
    Ok(server_refused && card_refused)
}
