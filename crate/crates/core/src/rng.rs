//! Seeding.
//!
//! Every random draw goes through [`ChaCha8Rng`], whose output stream is
//! fixed by its algorithm and therefore identical on every platform. Child
//! seeds (per trial, per round, per class) are derived from a parent seed and
//! a stream index with the SplitMix64 finaliser, so independent pieces of work
//! can be replayed in any order.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `stream` under `parent`.
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(parent ^ splitmix64(stream))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags keep the derived seeds of unrelated consumers apart.
pub(crate) mod stream {
    pub const CLASS_ORDER: u64 = 0x0100_0000;
    pub const CLASS_SAMPLES: u64 = 0x0200_0000;
    pub const HARVEST_ROUND: u64 = 0x0300_0000;
}
