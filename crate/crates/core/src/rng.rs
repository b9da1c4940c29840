//! Seed derivation. Every stochastic component draws from its own ChaCha
//! stream keyed by `(master seed, component name)`, so stages can be re-run
//! independently and still reproduce the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Stable 64-bit sub-seed for a named component.
pub fn derive_seed(master: u64, component: &str) -> u64 {
    let h = fnv1a(&master.to_le_bytes(), FNV_OFFSET);
    let h = fnv1a(component.as_bytes(), h);
    // splitmix finalizer
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn component_rng(master: u64, component: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(master, component))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
