//! Seed derivation for reproducible, schedule-independent trials.
//!
//! Every random stream is keyed by `(master seed, purpose, index)` through a
//! SplitMix64 finalizer, so a trial's draws never depend on which worker ran
//! it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Trial,
    Assignment,
    Labels,
    Eigensolver,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Trial => 0x7472_6961_6c00_0001,
            Purpose::Assignment => 0x6173_7367_6e00_0002,
            Purpose::Labels => 0x6c61_6265_6c00_0003,
            Purpose::Eigensolver => 0x6569_6765_6e00_0004,
        }
    }
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(master, purpose, index)`.
pub fn derive_seed(master: u64, purpose: Purpose, index: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ purpose.tag()) ^ index)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
