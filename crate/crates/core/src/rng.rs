//! Counter-based splittable random streams.
//!
//! Every stream is keyed by a seed and a short tuple of counters, so the
//! draw for a given (seed, key) never depends on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const LATTICE_TAG: u64 = 0x6c61_7474;
pub const SAMPLE_TAG: u64 = 0x7361_6d70;
pub const WEIGHT_TAG: u64 = 0x7765_6967;
pub const SHIFT_TAG: u64 = 0x7368_6966;
pub const START_TAG: u64 = 0x7374_6172;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a sequence of keys into a new 64-bit seed.
pub fn derive(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k)))
}

/// Independent stream for `(seed, keys)`.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, keys))
}

/// Seed of Monte Carlo sample `i` under `seed`.
pub fn sample_seed(seed: u64, i: u64) -> u64 {
    derive(seed, &[SAMPLE_TAG, i])
}
