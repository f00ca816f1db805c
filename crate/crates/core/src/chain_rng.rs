//! Hash-chain random number generator for cards.
//!
//! The card keeps a 32-byte chain value and a card-local key. Each draw
//! replaces the chain value with a keyed hash of itself, and the number handed
//! out is a second keyed hash of the *previous* chain value under a different
//! label. The stored state therefore never contains an output, and reading the
//! card after a session does not reveal that session's random values.

use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::hash::hmac;

pub const SEED_LEN: usize = 32;

const LABEL_NEXT_SEED: u8 = 0x00;
const LABEL_OUTPUT: u8 = 0x01;

#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct RngState {
    seed: [u8; SEED_LEN],
    chain_key: [u8; SEED_LEN],
    counter: u64,
}

impl RngState {
    pub fn new(seed: [u8; SEED_LEN], chain_key: [u8; SEED_LEN]) -> Self {
        RngState {
            seed,
            chain_key,
            counter: 0,
        }
    }

    /// Restores a persisted state.
    pub fn from_parts(seed: [u8; SEED_LEN], chain_key: [u8; SEED_LEN], counter: u64) -> Self {
        RngState {
            seed,
            chain_key,
            counter,
        }
    }

    pub fn next_block(&mut self) -> [u8; SEED_LEN] {
        let mut input = [0u8; 1 + SEED_LEN + 8];
        input[1..1 + SEED_LEN].copy_from_slice(&self.seed);
        input[1 + SEED_LEN..].copy_from_slice(&self.counter.to_be_bytes());

        input[0] = LABEL_OUTPUT;
        let output = hmac(&self.chain_key, &input);
        input[0] = LABEL_NEXT_SEED;
        self.seed = hmac(&self.chain_key, &input);
        input.zeroize();

        self.counter += 1;
        output
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn seed(&self) -> &[u8; SEED_LEN] {
        &self.seed
    }

    pub fn chain_key(&self) -> &[u8; SEED_LEN] {
        &self.chain_key
    }

    /// Wipes the whole state, leaving a generator that no longer matches the card.
    pub fn erase(&mut self) {
        self.seed.zeroize();
        self.chain_key.zeroize();
    }
}

impl std::fmt::Debug for RngState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RngState")
            .field("counter", &self.counter)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ::hmac::{Hmac, Mac};
    use sha2::Sha256;

    fn oracle_draws(seed: [u8; 32], key: [u8; 32], n: usize) -> Vec<[u8; 32]> {
        let mut chain = seed;
        let mut out = Vec::new();
        for i in 0..n as u64 {
            let keyed = |label: u8, chain: &[u8; 32]| -> [u8; 32] {
                let mut mac = Hmac::<Sha256>::new_from_slice(&key).unwrap();
                mac.update(&[label]);
                mac.update(chain);
                mac.update(&i.to_be_bytes());
                mac.finalize().into_bytes().into()
            };
            out.push(keyed(1, &chain));
            chain = keyed(0, &chain);
        }
        out
    }

    #[test]
    fn init_is_deterministic() {
        let a = RngState::new([1; 32], [2; 32]);
        let b = RngState::new([1; 32], [2; 32]);
        assert_eq!(a, b);
        assert_eq!(a.counter(), 0);
    }

    #[test]
    fn distinct_seeds_give_distinct_first_outputs() {
        let mut a = RngState::new([1; 32], [2; 32]);
        let mut b = RngState::new([3; 32], [2; 32]);
        assert_ne!(a.next_block(), b.next_block());
    }

    #[test]
    fn five_draws_match_reiteration_oracle() {
        let mut rng = RngState::new([5; 32], [6; 32]);
        let draws: Vec<_> = (0..5).map(|_| rng.next_block()).collect();
        assert_eq!(draws, oracle_draws([5; 32], [6; 32], 5));
        assert_ne!(draws[0], draws[1]);
        assert_eq!(rng.counter(), 5);
    }

    #[test]
    fn state_never_holds_outputs_or_old_seeds() {
        let mut rng = RngState::new([9; 32], [4; 32]);
        let mut seen = vec![*rng.seed()];
        for _ in 0..8 {
            seen.push(rng.next_block());
            for old in &seen {
                assert_ne!(rng.seed(), old);
                assert_ne!(rng.chain_key(), old);
            }
            seen.push(*rng.seed());
        }
    }
}
