//! Derivation of independent RNG streams from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream identified by `key` under `master`.
pub fn stream_seed(master: u64, key: u64) -> u64 {
    splitmix64(splitmix64(master) ^ key.rotate_left(17) ^ 0x5851_f42d_4c95_7f2d)
}

/// Key for a set of cluster ids; a single id keys as itself.
pub fn set_key(sorted_ids: &[u64]) -> u64 {
    match sorted_ids {
        [one] => *one,
        ids => ids
            .iter()
            .fold(0xcbf2_9ce4_8422_2325, |acc, &id| splitmix64(acc ^ id)),
    }
}

pub fn stream_rng(master: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, key))
}
