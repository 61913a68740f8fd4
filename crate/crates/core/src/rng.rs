use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent deterministic streams derived from one user seed.
pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const STREAM_NOISE: u64 = 1;
pub(crate) const STREAM_CORNERS: u64 = 2;
pub(crate) const STREAM_TRAIN: u64 = 3;
pub(crate) const STREAM_INIT: u64 = 4;
pub(crate) const STREAM_SUBSET: u64 = 5;
pub(crate) const STREAM_FEATURES: u64 = 6;
