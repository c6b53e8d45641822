//! Reproducible random streams.
//!
//! Every replica (or seed) of an experiment draws from its own ChaCha8 stream,
//! selected by the replica index on top of a base seed. Any single replica can
//! therefore be replayed in isolation, and parallel sweeps produce the same
//! numbers regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// Generator for replica `index` of an experiment seeded with `base_seed`.
pub fn replica_rng(base_seed: u64, index: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Base seed for a derived sub-experiment (pilot runs, oracles) so that they
/// never share streams with the main replicas.
pub fn derive_seed(base_seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
