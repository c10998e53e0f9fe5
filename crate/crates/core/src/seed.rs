//! Counter-based seed derivation.
//!
//! Every stochastic choice in a run draws from a generator keyed by a path of
//! integers such as `(master, run, tag, agent)`. Nothing reads global RNG state,
//! so any component can be regenerated in isolation and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags mixed into derived seeds.
pub mod tag {
    pub const PARTITION: u64 = 0x5041_5254;
    pub const INIT: u64 = 0x494e_4954;
    pub const SELF_TRAIN: u64 = 0x5345_4c46;
    pub const SHARED_SHUFFLE: u64 = 0x5348_5246;
    pub const REVIEW: u64 = 0x5256_4557;
    pub const GRAPH: u64 = 0x4752_5048;
    pub const ARCH_MIX: u64 = 0x4152_4348;
    pub const DATA: u64 = 0x4441_5441;
    pub const EPOCH: u64 = 0x4550_4f43;
}

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed from `seed` and a path of counters.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |h, &p| splitmix64(h ^ splitmix64(p.wrapping_add(h.rotate_left(17)))))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generator for stream `stream` of `seed`; streams are independent and random-access.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
