//! Counter-based seed derivation.
//!
//! Every random stream in the testbed is keyed by `(base seed, counter, tag)`
//! so that results never depend on evaluation order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Distinct tags give statistically independent streams for
/// the same `(base, counter)` pair.
pub mod tag {
    pub const EXAMPLE: u64 = 0x45_58_41_4d;
    pub const OFFSET: u64 = 0x4f_46_46_53;
    pub const IDLE: u64 = 0x49_44_4c_45;
    pub const SHUFFLE: u64 = 0x53_48_55_46;
    pub const INIT: u64 = 0x49_4e_49_54;
    pub const SWEEP: u64 = 0x53_57_45_45;
    pub const POINT: u64 = 0x50_4f_49_4e;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 64-bit seed from a base seed, a counter and a stream tag.
pub fn derive_seed(base: u64, counter: u64, tag: u64) -> u64 {
    let a = splitmix64(base ^ splitmix64(tag));
    splitmix64(a ^ splitmix64(counter.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// A ChaCha8 generator for the given counter-keyed stream.
pub fn stream(base: u64, counter: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, counter, tag))
}
