//! Seed splitting.
//!
//! Every random stream in a run is a pure function of the master seed and a
//! path of integer tags, so results do not depend on scheduling. A child seed
//! is `splitmix64(parent ^ splitmix64(tag + STREAM_SALT))`, applied once per
//! tag; generators are ChaCha8 seeded from the resulting `u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tag for the outer Monte Carlo replication index.
pub const REPLICATION: u64 = 0x5245_504c;
/// Tag for simulated data.
pub const DATA: u64 = 0x4441_5441;
/// Tag for cross-validation fold assignment.
pub const TUNING: u64 = 0x5455_4e45;
/// Tag for random test locations.
pub const LOCATIONS: u64 = 0x4c4f_4341;
/// Tag for bootstrap multipliers.
pub const BOOTSTRAP: u64 = 0x424f_4f54;

const STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    splitmix64(parent ^ splitmix64(tag.wrapping_add(STREAM_SALT)))
}

pub fn derive_path(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(parent, |seed, &tag| derive_seed(seed, tag))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
