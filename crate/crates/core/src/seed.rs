//! Deterministic random streams.
//!
//! Nothing in the crate draws from a global RNG. Each stochastic component
//! asks for its own stream, derived from the run seed plus a tag and index,
//! so results do not depend on call order or on concurrency.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    root: u64,
}

impl Seeds {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// 64-bit seed for `(tag, index)`.
    pub fn derive(&self, tag: &str, index: u64) -> u64 {
        let mut h = Sha256::new();
        h.update(self.root.to_le_bytes());
        h.update(tag.as_bytes());
        h.update([0u8]);
        h.update(index.to_le_bytes());
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
    }

    pub fn stream(&self, tag: &str, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive(tag, index))
    }
}

/// Returns the stream factory every stochastic component of a run draws from.
pub fn seed_everything(seed: u64) -> Seeds {
    Seeds::new(seed)
}

/// Stable 64-bit hash of a string, used to key per-sample streams by id.
pub fn string_key(s: &str) -> u64 {
    let out = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
}
