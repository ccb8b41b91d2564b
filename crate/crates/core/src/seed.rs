//! Seed derivation for order-independent parallel trials.
//!
//! Every random stream is keyed by `(master_seed, index, purpose)`, so a
//! trial's draws never depend on which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tags separating the streams that share a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Cell = 1,
    Trial = 2,
    Directions = 3,
    Reference = 4,
    Bootstrap = 5,
    Campaign = 6,
    Design = 7,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed; distinct `(index, purpose)` pairs give unrelated streams.
pub fn derive_seed(master: u64, index: u64, purpose: Purpose) -> u64 {
    let a = mix(master.wrapping_add(GOLDEN));
    let b = mix(a ^ (purpose as u64).wrapping_mul(GOLDEN));
    mix(b.wrapping_add(index.wrapping_mul(GOLDEN) ^ 0xD6E8_FEB8_6659_FD93))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = HashSet::new();
        for purpose in [Purpose::Cell, Purpose::Trial, Purpose::Directions] {
            for i in 0..1000 {
                assert!(seen.insert(derive_seed(42, i, purpose)));
            }
        }
        assert_ne!(derive_seed(1, 0, Purpose::Trial), derive_seed(2, 0, Purpose::Trial));
    }

    #[test]
    fn derivation_is_pure() {
        assert_eq!(
            derive_seed(7, 3, Purpose::Bootstrap),
            derive_seed(7, 3, Purpose::Bootstrap)
        );
    }
}
