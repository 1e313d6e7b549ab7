//! Seed derivation.
//!
//! Every random stream in a run is keyed off one user seed. A stream's seed is
//! `splitmix64(splitmix64(base) ^ tag)`, where `tag` names the consumer (see the
//! constants below) and may be combined with a small index such as a stage or
//! worker id via [`derive_indexed`]. Each derived seed initialises a ChaCha8
//! generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_SYNTH: u64 = 0x5359_4e54;
pub const TAG_SUBSET: u64 = 0x5355_4253;
pub const TAG_PAIRS: u64 = 0x5041_4952;
pub const TAG_MIX: u64 = 0x4d49_5800;
pub const TAG_PAIRING: u64 = 0x5041_5247;
pub const TAG_VERIFY: u64 = 0x5645_5246;

/// One round of the splitmix64 output function.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive(base: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(base) ^ tag)
}

pub fn derive_indexed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(derive(base, tag) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
