//! Seed derivation.
//!
//! Every random stream in a run is derived from a parent seed and a path of
//! integers, so results never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a path of stream indices.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(parent);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named stream tags used when deriving per-stage seeds inside a run.
pub mod stream {
    pub const GROUND_TRUTH: u64 = 1;
    pub const AGENT_PRIORS: u64 = 2;
    pub const TEAMS: u64 = 3;
    pub const DESIGN: u64 = 4;
    pub const DATASET: u64 = 5;
    pub const TRIAL: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn derivation_is_path_sensitive() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
        assert_eq!(derive_seed(9, &[3, 4]), derive_seed(9, &[3, 4]));
    }

    #[test]
    fn no_collisions_over_sweep_grid() {
        let mut seen = HashSet::new();
        for combo in 0..8 {
            for rep in 0..2000 {
                assert!(seen.insert(derive_seed(42, &[combo, rep])));
            }
        }
    }
}
