//! Named, reproducible random streams.
//!
//! Every consumer of randomness derives its own generator from a master seed
//! and a path of keys (cell, replicate, purpose), so parallel tasks never share
//! a stream and results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes. Distinct constants keep streams for different draws apart.
pub mod purpose {
    pub const TEXT: u64 = 0x7465_7874;
    pub const NOISE: u64 = 0x6e6f_6973;
    pub const OUTCOME: u64 = 0x6f75_7463;
    pub const PROXY: u64 = 0x7072_6f78;
    pub const INIT: u64 = 0x696e_6974;
    pub const SHUFFLE: u64 = 0x7368_7566;
    pub const FOLDS: u64 = 0x666f_6c64;
    pub const SAMPLE: u64 = 0x7361_6d70;
    pub const WORLD: u64 = 0x776f_726c;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a 64-bit seed from a master seed and a key path.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// A generator for the stream identified by `(master, keys...)`.
pub fn stream(master: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, keys))
}
