//! Seed derivation.
//!
//! Every stochastic operation draws from a stream derived from the root seed
//! and a fixed tag, so that e.g. the chunk-order shuffle and the layout are
//! independently reproducible. Per-point streams additionally mix in the
//! iteration and point index, which makes parallel and serial schedules draw
//! the same numbers.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

pub const TAG_NEIGHBOR_INIT: u64 = 0x6e65_6967_685f_696e;
pub const TAG_NEIGHBOR_UPDATE: u64 = 0x6e65_6967_685f_7570;
pub const TAG_JITTER: u64 = 0x6a69_7474_6572_0000;
pub const TAG_HIERARCHY: u64 = 0x6869_6572_6172_6368;
pub const TAG_POSITIONS: u64 = 0x706f_7369_7469_6f6e;
pub const TAG_INTERPOLATE: u64 = 0x696e_7465_7270_6f6c;
pub const TAG_ORDER: u64 = 0x6f72_6465_725f_7368;
pub const TAG_LEVEL: u64 = 0x6c65_7665_6c5f_5f5f;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a root seed with a sequence of words into a new 64-bit seed.
pub fn derive(root: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(root: u64, parts: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive(root, parts))
}

/// Uniform value in `[0, 1)` that depends only on the inputs.
pub fn unit_hash(root: u64, parts: &[u64]) -> f64 {
    (derive(root, parts) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
