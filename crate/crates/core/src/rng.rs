//! Named, index-addressable random sub-streams derived from one run seed.
//!
//! Every consumer (initialisation, shuffling, rollouts, confidence sampling)
//! draws from its own stream so results do not depend on evaluation order
//! or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for stream `name` at position `indices`.
pub fn substream(seed: u64, name: &str, indices: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for b in name.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i));
    }
    ChaCha8Rng::seed_from_u64(h)
}
