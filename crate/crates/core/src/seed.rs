//! Seed derivation.
//!
//! Every random stream in a run is keyed by `(base seed, stream tag, cell,
//! generation)` instead of being drawn from one long-lived generator. That
//! makes a resumed run draw exactly the same numbers as an uninterrupted one,
//! without having to persist generator state in checkpoints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags keep unrelated consumers of randomness apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    GeneratorInit = 1,
    DiscriminatorInit = 2,
    Dataset = 3,
    Generation = 4,
    Mixture = 5,
    MetricsProbe = 6,
    HeldOut = 7,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of a cell: the experiment seed xor the cell index.
pub fn cell_seed(seed: u64, cell: usize) -> u64 {
    seed ^ cell as u64
}

pub fn derive(seed: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ stream as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b)
}

pub fn rng(seed: u64, stream: Stream, a: u64, b: u64) -> Rng {
    Rng::seed_from_u64(derive(seed, stream, a, b))
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
