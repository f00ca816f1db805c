//! Password-protected smart-card and memory-stick authentication.
//!
//! Three protocol families are provided as explicit card/server state machines:
//!
//! * [`ssca`]: symmetric-key card authentication. The card holds its secret key
//!   wrapped under the user's password and runs a three-message exchange.
//! * [`pscab`]: identity-based key agreement over a bilinear group, with the
//!   password blinding the card's private key. Also hosts the variant where
//!   the server keeps a per-user generator.
//! * [`pscav`]: the server keeps password validation data, the card keeps a
//!   password-blinded generator.
//!
//! All three run over [`group`], an exponent-tracking debug group in which
//! every algebraic identity used by the protocols can be checked exactly.
//! [`adversary`] scripts the attacker models (stolen cards, malicious readers,
//! memory sticks, reversed key confirmation, small-subgroup confinement) and
//! measures how far an offline dictionary attack gets.

#![forbid(unsafe_code)]
#![warn(rust_2018_idioms)]

pub mod adversary;
pub mod card;
pub mod chain_rng;
mod error;
pub mod group;
pub mod handshake;
pub mod hash;
pub mod pscab;
pub mod pscav;
mod session_key;
pub mod ssca;
pub mod wire;

pub use error::{Error, Result};
pub use session_key::SessionKey;
