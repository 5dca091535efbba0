//! Deterministic random-stream derivation.
//!
//! Every replicate, mixture draw and diagnostic sample gets its own ChaCha8
//! stream keyed by `(master seed, purpose, index)`, so results do not depend
//! on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type SimRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Replicate,
    MixtureEndpoints,
    Normalizer,
    ScanRun,
    ScanGbarEndpoints,
    ScanPhatEndpoints,
    Diagnostic,
    Paths,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Replicate => 0x5245_504c,
            Purpose::MixtureEndpoints => 0x4d49_5854,
            Purpose::Normalizer => 0x4e4f_524d,
            Purpose::ScanRun => 0x5343_4e52,
            Purpose::ScanGbarEndpoints => 0x5343_4e47,
            Purpose::ScanPhatEndpoints => 0x5343_4e50,
            Purpose::Diagnostic => 0x4449_4147,
            Purpose::Paths => 0x5041_5448,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Independent stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose.tag())));
    rng.set_stream(index);
    rng
}
