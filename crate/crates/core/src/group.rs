//! Exponent-tracking debug group with a symmetric pairing.
//!
//! The group is cyclic of order `n = q * t` with a fixed generator `g`. An
//! element is stored as its discrete logarithm `e` with respect to `g`, so
//! group multiplication is addition of exponents mod `n` and exponentiation is
//! multiplication. Honest protocol elements live in the order-`q` subgroup
//! generated by `g^t`, i.e. `e = 0 (mod t)`.
//!
//! The pairing maps `(g^(t*a), g^(t*b))` to `gT^(a*b)` in a target group of
//! order `q`. Nothing here is hard to invert; the point is that every identity
//! the protocols rely on holds (or fails) exactly.

use rand::{CryptoRng, Rng, RngCore};
use zeroize::Zeroize;

use crate::hash::{role_digest, HashRole, HASH_ID_SHA256};
use crate::{Error, Result};

/// 2^61 - 1.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

const ELEMENT_TYPE: u8 = 0x01;
const TARGET_TYPE: u8 = 0x02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroupConfig {
    q: u64,
    t: u64,
    suite_id: u8,
}

impl GroupConfig {
    pub fn new(q: u64, t: u64, suite_id: u8) -> Result<Self> {
        if !primal_check::miller_rabin(q) {
            return Err(Error::InvalidConfig("subgroup order must be prime"));
        }
        if t == 0 {
            return Err(Error::InvalidConfig("cofactor must be positive"));
        }
        if t.is_multiple_of(q) {
            return Err(Error::InvalidConfig("cofactor must be coprime to the subgroup order"));
        }
        match q.checked_mul(t) {
            Some(n) if n < (1 << 63) => Ok(GroupConfig { q, t, suite_id }),
            _ => Err(Error::InvalidConfig("group order must stay below 2^63")),
        }
    }

    /// Prime-order group with q = 2^61 - 1.
    pub fn mersenne61() -> Self {
        GroupConfig {
            q: MERSENNE_61,
            t: 1,
            suite_id: 0x01,
        }
    }

    /// q = 2^61 - 1 with a small cofactor, for the subgroup-confinement demo.
    pub fn mersenne61_with_cofactor(t: u64) -> Result<Self> {
        GroupConfig::new(MERSENNE_61, t, 0x80 | (t.min(0x7f) as u8))
    }

    /// The configuration a suite identifier stands for.
    pub fn from_suite_id(suite_id: u8) -> Result<Self> {
        match suite_id {
            0x01 => Ok(GroupConfig::mersenne61()),
            id if id & 0x80 != 0 && id & 0x7f > 1 => GroupConfig::mersenne61_with_cofactor((id & 0x7f) as u64),
            _ => Err(Error::InvalidConfig("unknown suite identifier")),
        }
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn cofactor(&self) -> u64 {
        self.t
    }

    pub fn order(&self) -> u64 {
        self.q * self.t
    }

    pub fn suite_id(&self) -> u8 {
        self.suite_id
    }

    pub fn hash_id(&self) -> u8 {
        HASH_ID_SHA256
    }

    /// Byte width of encoded exponents and scalars.
    pub fn width(&self) -> usize {
        let bits = 64 - self.order().leading_zeros() as usize;
        bits.div_ceil(8).max(1)
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement { cfg: *self, exp: 0 }
    }

    /// Generator of the whole group (order `n`).
    pub fn generator(&self) -> GroupElement {
        GroupElement { cfg: *self, exp: 1 % self.order() }
    }

    /// Generator of the order-`q` subgroup, `g^t`.
    pub fn subgroup_generator(&self) -> GroupElement {
        GroupElement { cfg: *self, exp: self.t % self.order() }
    }

    /// Element with a chosen discrete log. Debug backend only.
    pub fn element_from_exponent(&self, exp: u64) -> GroupElement {
        GroupElement { cfg: *self, exp: exp % self.order() }
    }

    pub fn target_identity(&self) -> TargetElement {
        TargetElement { cfg: *self, exp: 0 }
    }

    pub fn target_from_exponent(&self, exp: u64) -> TargetElement {
        TargetElement { cfg: *self, exp: exp % self.q }
    }

    pub fn scalar(&self, value: u64) -> Scalar {
        Scalar { cfg: *self, value: value % self.q }
    }

    /// Reduces a byte string (big-endian) into a scalar, or `None` if it reduces to zero.
    pub fn scalar_from_bytes_nonzero(&self, bytes: &[u8]) -> Option<Scalar> {
        let value = reduce_be(bytes, self.q);
        (value != 0).then(|| self.scalar(value))
    }

    /// Uniform scalar in Z_q*.
    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        self.scalar(rng.gen_range(1..self.q))
    }

    pub fn hash_to_group(&self, role: HashRole, fields: &[&[u8]]) -> Result<GroupElement> {
        match role {
            HashRole::HashToGroup | HashRole::KeyedUserGenerator => {}
            other => return Err(Error::WrongRole(other)),
        }
        let k = self.hash_nonzero(role, fields)?;
        Ok(self.element_from_exponent(mul_mod(self.t, k, self.order())))
    }

    /// Hashes into Z_q*, re-hashing with an appended counter byte on zero.
    pub fn hash_to_scalar(&self, role: HashRole, fields: &[&[u8]]) -> Result<Scalar> {
        match role {
            HashRole::HashToScalar
            | HashRole::VerifierScalar
            | HashRole::BlindingScalar
            | HashRole::Pi => {}
            other => return Err(Error::WrongRole(other)),
        }
        Ok(self.scalar(self.hash_nonzero(role, fields)?))
    }

    fn hash_nonzero(&self, role: HashRole, fields: &[&[u8]]) -> Result<u64> {
        let first = reduce_be(&role_digest(role, fields)[..16], self.q);
        if first != 0 {
            return Ok(first);
        }
        for counter in 1..=u8::MAX {
            let counter = [counter];
            let mut extended: Vec<&[u8]> = fields.to_vec();
            extended.push(&counter);
            let value = reduce_be(&role_digest(role, &extended)[..16], self.q);
            if value != 0 {
                return Ok(value);
            }
        }
        Err(Error::HashExhausted)
    }

    /// Symmetric pairing. Both inputs must be in the order-`q` subgroup.
    pub fn pair(&self, a: &GroupElement, b: &GroupElement) -> Result<TargetElement> {
        self.check_suite(a.cfg)?;
        self.check_suite(b.cfg)?;
        if !a.is_in_subgroup() || !b.is_in_subgroup() {
            return Err(Error::NonSubgroupElement);
        }
        let a_log = a.exp / self.t;
        let b_log = b.exp / self.t;
        Ok(self.target_from_exponent(mul_mod(a_log, b_log, self.q)))
    }

    /// Rejects elements a peer sent unless they are non-identity members of the subgroup.
    pub fn validate_peer_element(&self, x: &GroupElement) -> Result<()> {
        self.check_suite(x.cfg)?;
        if x.is_identity() || !x.is_in_subgroup() {
            return Err(Error::NonSubgroupElement);
        }
        Ok(())
    }

    fn check_suite(&self, other: GroupConfig) -> Result<()> {
        if other == *self {
            Ok(())
        } else {
            Err(Error::SuiteMismatch)
        }
    }

    pub fn decode_element(&self, bytes: &[u8]) -> Result<GroupElement> {
        let exp = self.decode_tagged(bytes, ELEMENT_TYPE, self.order())?;
        Ok(GroupElement { cfg: *self, exp })
    }

    pub fn decode_target(&self, bytes: &[u8]) -> Result<TargetElement> {
        let exp = self.decode_tagged(bytes, TARGET_TYPE, self.q)?;
        Ok(TargetElement { cfg: *self, exp })
    }

    pub fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar> {
        if bytes.len() != self.width() {
            return Err(Error::InvalidEncoding);
        }
        let value = be_to_u64(bytes);
        if value >= self.q {
            return Err(Error::InvalidEncoding);
        }
        Ok(self.scalar(value))
    }

    /// Encoded length of a group or target element.
    pub fn element_len(&self) -> usize {
        2 + self.width()
    }

    fn decode_tagged(&self, bytes: &[u8], type_byte: u8, modulus: u64) -> Result<u64> {
        if bytes.len() != self.element_len() {
            return Err(Error::InvalidEncoding);
        }
        if bytes[0] != self.suite_id {
            return Err(Error::SuiteMismatch);
        }
        if bytes[1] != type_byte {
            return Err(Error::InvalidEncoding);
        }
        let exp = be_to_u64(&bytes[2..]);
        if exp >= modulus {
            return Err(Error::InvalidEncoding);
        }
        Ok(exp)
    }

    fn encode_tagged(&self, type_byte: u8, value: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.element_len());
        out.push(self.suite_id);
        out.push(type_byte);
        out.extend_from_slice(&value.to_be_bytes()[8 - self.width()..]);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroupElement {
    cfg: GroupConfig,
    exp: u64,
}

impl GroupElement {
    pub fn config(&self) -> GroupConfig {
        self.cfg
    }

    pub fn exp(&self, k: &Scalar) -> GroupElement {
        self.pow_int(k.value)
    }

    /// Raises to an integer exponent taken mod the full group order.
    pub fn pow_int(&self, k: u64) -> GroupElement {
        let n = self.cfg.order();
        GroupElement {
            cfg: self.cfg,
            exp: mul_mod(self.exp, k % n, n),
        }
    }

    pub fn mul(&self, other: &GroupElement) -> Result<GroupElement> {
        self.cfg.check_suite(other.cfg)?;
        let n = self.cfg.order();
        Ok(GroupElement {
            cfg: self.cfg,
            exp: add_mod(self.exp, other.exp, n),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.exp == 0
    }

    /// True iff the element lies in the order-`q` subgroup.
    pub fn is_in_subgroup(&self) -> bool {
        self.exp.is_multiple_of(self.cfg.t)
    }

    /// Discrete log base `g`. Debug backend only.
    pub fn debug_exponent(&self) -> u64 {
        self.exp
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.cfg.encode_tagged(ELEMENT_TYPE, self.exp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TargetElement {
    cfg: GroupConfig,
    exp: u64,
}

impl TargetElement {
    pub fn exp(&self, k: &Scalar) -> TargetElement {
        TargetElement {
            cfg: self.cfg,
            exp: mul_mod(self.exp, k.value, self.cfg.q),
        }
    }

    pub fn mul(&self, other: &TargetElement) -> Result<TargetElement> {
        self.cfg.check_suite(other.cfg)?;
        Ok(TargetElement {
            cfg: self.cfg,
            exp: add_mod(self.exp, other.exp, self.cfg.q),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.exp == 0
    }

    pub fn debug_exponent(&self) -> u64 {
        self.exp
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.cfg.encode_tagged(TARGET_TYPE, self.exp)
    }
}

impl Zeroize for TargetElement {
    fn zeroize(&mut self) {
        self.exp.zeroize();
    }
}

/// Element of Z_q.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Scalar {
    cfg: GroupConfig,
    value: u64,
}

impl Scalar {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    pub fn inverse(&self) -> Result<Scalar> {
        if self.value == 0 {
            return Err(Error::NotInvertible);
        }
        // q is prime: k^(q-2) = k^-1.
        Ok(Scalar {
            cfg: self.cfg,
            value: pow_mod(self.value, self.cfg.q - 2, self.cfg.q),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.value.to_be_bytes()[8 - self.cfg.width()..].to_vec()
    }
}

impl std::ops::Add for Scalar {
    type Output = Scalar;

    fn add(self, rhs: Scalar) -> Scalar {
        debug_assert_eq!(self.cfg, rhs.cfg);
        Scalar {
            cfg: self.cfg,
            value: add_mod(self.value, rhs.value, self.cfg.q),
        }
    }
}

impl std::ops::Mul for Scalar {
    type Output = Scalar;

    fn mul(self, rhs: Scalar) -> Scalar {
        debug_assert_eq!(self.cfg, rhs.cfg);
        Scalar {
            cfg: self.cfg,
            value: mul_mod(self.value, rhs.value, self.cfg.q),
        }
    }
}

impl Zeroize for Scalar {
    fn zeroize(&mut self) {
        self.value.zeroize();
    }
}

impl Zeroize for GroupElement {
    fn zeroize(&mut self) {
        self.exp.zeroize();
    }
}

fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 + b as u128) % m as u128) as u64
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

fn reduce_be(bytes: &[u8], m: u64) -> u64 {
    bytes
        .iter()
        .fold(0u128, |acc, &b| ((acc << 8) | b as u128) % m as u128) as u64
}

fn be_to_u64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64)
}
