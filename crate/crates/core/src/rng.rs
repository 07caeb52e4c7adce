//! Seeded random streams. Independent concerns (batch order, segment
//! selection, dropout masks, initialization) draw from separate streams so
//! that consuming one never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SegRng = ChaCha8Rng;

pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const SELECT: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const TRACE: u64 = 5;
    pub const GENERATE: u64 = 6;
}

pub fn stream(seed: u64, stream: u64) -> SegRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
