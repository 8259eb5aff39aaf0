//! Deterministic seed derivation.
//!
//! Every random stream in a run is derived from one root seed plus a purpose
//! tag and a path of integers (fold, epoch, ...), so runs are reproducible
//! regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a root seed with a purpose tag and a path of indices.
pub fn derive_seed(root: u64, purpose: &str, path: &[u64]) -> u64 {
    let mut h = splitmix64(root);
    for b in purpose.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    for &p in path {
        h = splitmix64(h ^ p.wrapping_mul(0x2545_f491_4f6c_dd1d));
    }
    h
}

pub fn rng_for(root: u64, purpose: &str, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(root, purpose, path))
}
