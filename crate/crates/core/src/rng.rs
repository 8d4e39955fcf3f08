//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng`
//! seeded from a master seed mixed with the stream's coordinates, so results
//! never depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep unrelated streams apart even when their coordinates match.
pub mod tag {
    pub const SUITE: u64 = 0x5355_4954;
    pub const DRIFT: u64 = 0x4452_4946;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const EXPLORE: u64 = 0x4558_504c;
    pub const TRAIN: u64 = 0x5452_4149;
    pub const INIT: u64 = 0x494e_4954;
    pub const VARIANT: u64 = 0x5641_5249;
    pub const SWEEP: u64 = 0x5357_4550;
    pub const EVAL: u64 = 0x4556_414c;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a seed with a list of stream coordinates.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}
