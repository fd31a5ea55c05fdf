//! Deterministic seed derivation.
//!
//! Every random stream in a run is derived from the run seed plus a salt, so
//! training, evaluation and data draws never share or perturb each other's
//! streams. All derivations are pure integer mixing and identical on every
//! platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SALT_DATA: u64 = 0x9065_7265_616c_6431;
pub const SALT_G_INIT: u64 = 0x6765_6e5f_696e_6974;
pub const SALT_D_INIT: u64 = 0x6469_735f_696e_6974;
pub const SALT_EVAL: u64 = 0x6576_616c_5f72_6e67;
pub const SALT_THEORY: u64 = 0x7468_656f_7279_5f31;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a salt (and optionally a counter via repeated
/// application) into an independent stream seed.
pub fn derive(base: u64, salt: u64) -> u64 {
    splitmix64(base ^ splitmix64(salt))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
