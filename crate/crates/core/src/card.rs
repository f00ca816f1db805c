//! Pieces shared by every card credential: the self-destruct counter and
//! drawing protocol randomness from the card's hash chain.

use crate::chain_rng::RngState;
use crate::group::{GroupConfig, Scalar};
use crate::{Error, Result};

/// Attempt counter of a Type II card. A limit of 0 means no counter protection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryCounter {
    used: u32,
    limit: u32,
    destroyed: bool,
}

impl QueryCounter {
    pub fn new(limit: u32) -> Self {
        QueryCounter {
            used: 0,
            limit,
            destroyed: false,
        }
    }

    pub fn from_parts(used: u32, limit: u32, destroyed: bool) -> Self {
        QueryCounter {
            used,
            limit,
            destroyed,
        }
    }

    pub fn used(&self) -> u32 {
        self.used
    }

    pub fn limit(&self) -> u32 {
        self.limit
    }

    pub fn is_destroyed(&self) -> bool {
        self.destroyed
    }

    /// Counts one protocol start. Returns `CardDestroyed` once the limit is
    /// exhausted; the caller must then wipe the card's secrets.
    pub(crate) fn admit(&mut self) -> Result<()> {
        if self.destroyed {
            return Err(Error::CardDestroyed);
        }
        if self.limit > 0 && self.used >= self.limit {
            self.destroyed = true;
            return Err(Error::CardDestroyed);
        }
        self.used += 1;
        Ok(())
    }

    /// A run that authenticated the server clears the attempt count.
    pub(crate) fn record_success(&mut self) {
        self.used = 0;
    }
}

/// Draws a scalar in Z_q* from the card's chain.
pub fn draw_scalar(rng: &mut RngState, cfg: &GroupConfig) -> Scalar {
    loop {
        let block = rng.next_block();
        if let Some(s) = cfg.scalar_from_bytes_nonzero(&block) {
            return s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_allows_exactly_limit_starts() {
        let mut c = QueryCounter::new(3);
        for _ in 0..3 {
            c.admit().unwrap();
        }
        assert_eq!(c.admit(), Err(Error::CardDestroyed));
        assert!(c.is_destroyed());
        c.record_success();
        assert_eq!(c.admit(), Err(Error::CardDestroyed));
    }

    #[test]
    fn zero_limit_is_unlimited() {
        let mut c = QueryCounter::new(0);
        for _ in 0..1000 {
            c.admit().unwrap();
        }
        assert!(!c.is_destroyed());
    }

    #[test]
    fn success_resets_count() {
        let mut c = QueryCounter::new(2);
        c.admit().unwrap();
        c.admit().unwrap();
        c.record_success();
        c.admit().unwrap();
        assert_eq!(c.used(), 1);
    }
}
