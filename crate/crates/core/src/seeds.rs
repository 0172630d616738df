//! Named sub-seeds so a single run seed drives every random stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FIT: &str = "fit";
pub const SAMPLE: &str = "sample";
pub const GENERATE: &str = "generate";
pub const DOWNSAMPLE: &str = "downsample";

/// Mixes `seed` with a stream label (FNV-1a over the label, then splitmix64).
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
