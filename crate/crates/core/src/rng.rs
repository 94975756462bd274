//! Reproducible substreams.
//!
//! Every replication gets its own ChaCha8 stream keyed by the run seed and
//! the replication index, so results do not depend on how replications are
//! split across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn stream(seed: u64, replication: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Uniform on (0, 1], safe to feed into `ln` and negative powers.
pub fn open_uniform(rng: &mut SimRng) -> f64 {
    1.0 - rng.random::<f64>()
}
