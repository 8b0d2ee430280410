//! Seed derivation.
//!
//! Every experiment carries one 64-bit master seed. Sub-streams are derived
//! from `(master, stream, index)` with a splitmix64 finalizer, so a given
//! stream is reproducible regardless of which other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named sub-streams. The values are part of the reproducibility contract.
pub mod stream {
    pub const ENVIRONMENT: u64 = 0x01;
    pub const DATASET: u64 = 0x02;
    pub const EVALUATION: u64 = 0x03;
    pub const SURROGATE_NOISE: u64 = 0x04;
    pub const OBSERVATION_NOISE: u64 = 0x05;
    pub const SPLIT: u64 = 0x06;
    pub const BOOTSTRAP: u64 = 0x07;
    pub const TRAINING: u64 = 0x08;
    pub const SUMMARY: u64 = 0x09;
    pub const ITEM_SUBSET: u64 = 0x0a;
    pub const LOGGING_POLICY: u64 = 0x0b;
    pub const SIMULATION: u64 = 0x0c;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for `(stream, index)` from `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)).wrapping_add(index))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_rng(master: u64, stream: u64, index: u64) -> Rng {
    rng_from_seed(derive_seed(master, stream, index))
}
