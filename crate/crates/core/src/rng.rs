//! Seed derivation and the project-wide deterministic RNG.
//!
//! Every stochastic component (data sampling, parameter init, shuffling,
//! dropout masks, reparameterization noise, pair sampling) owns a private
//! [`ChaCha8Rng`] seeded through [`derive_seed`], so streams never alias
//! across purposes and every artifact is a pure function of the base seed.

use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer: a bijective avalanche mix.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from `(base, purpose, index)`.
/// The purpose tag is folded in bytewise so distinct tags give unrelated
/// streams even for adjacent base seeds.
pub fn derive_seed(base: u64, purpose: &str, index: u64) -> u64 {
    let mut h = splitmix64(base);
    for &byte in purpose.as_bytes() {
        h = splitmix64(h ^ u64::from(byte));
    }
    splitmix64(h ^ index)
}

/// A ChaCha stream for one purpose.
pub fn stream(base: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, purpose, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_seed_is_deterministic() {
        assert_eq!(derive_seed(7, "data", 0), derive_seed(7, "data", 0));
    }

    #[test]
    fn derive_seed_separates_purposes_and_indices() {
        let ids = [
            derive_seed(7, "data", 0),
            derive_seed(7, "init", 0),
            derive_seed(7, "data", 1),
            derive_seed(8, "data", 0),
        ];
        for i in 0..ids.len() {
            for j in (i + 1)..ids.len() {
                assert_ne!(ids[i], ids[j]);
            }
        }
    }

    #[test]
    fn stream_reproduces_bit_identical_draws() {
        let mut r1 = stream(3, "x", 2);
        let mut r2 = stream(3, "x", 2);
        let a: Vec<u64> = (0..32).map(|_| r1.random()).collect();
        let b: Vec<u64> = (0..32).map(|_| r2.random()).collect();
        assert_eq!(a, b);
    }
}
