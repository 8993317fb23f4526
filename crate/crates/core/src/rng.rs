//! Counter-based random substreams.
//!
//! Every stochastic step of an experiment draws from its own ChaCha20 stream
//! keyed by `(master seed, replication, purpose)`. Streams never depend on
//! scheduling, so results are identical for any number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha20Rng;

/// What a substream is used for. The tag is part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Design,
    Responses,
    Prediction,
    Oracle,
    Diagnostic,
    Other(u32),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Design => 1,
            Purpose::Responses => 2,
            Purpose::Prediction => 3,
            Purpose::Oracle => 4,
            Purpose::Diagnostic => 5,
            Purpose::Other(t) => 0x1_0000_0000 | u64::from(t),
        }
    }
}

pub fn substream(master: u64, replication: u64, purpose: Purpose) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(b"loopi-substream-v1");
    hasher.update(master.to_le_bytes());
    hasher.update(replication.to_le_bytes());
    hasher.update(purpose.tag().to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}
