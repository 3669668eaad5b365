//! Seed derivation, RNG construction and content hashing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives an independent seed for a named role: the first eight bytes of
/// `sha256(master_le ‖ tag)`.
pub fn sub_seed(master: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Counter-based stream: the same `(seed, stream)` always yields the same
/// sequence regardless of what other streams were drawn.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Incremental content hash rendered as 16 hex digits.
#[derive(Default, Clone)]
pub struct ContentHasher(Sha256);

impl ContentHasher {
    pub fn new() -> Self {
        Self(Sha256::new())
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn f64s(&mut self, vs: &[f64]) -> &mut Self {
        self.0.update((vs.len() as u64).to_le_bytes());
        for v in vs {
            self.0.update(v.to_le_bytes());
        }
        self
    }

    pub fn usizes(&mut self, vs: &[usize]) -> &mut Self {
        self.0.update((vs.len() as u64).to_le_bytes());
        for &v in vs {
            self.0.update((v as u64).to_le_bytes());
        }
        self
    }

    pub fn finish(&self) -> String {
        hex16(&self.0.clone().finalize())
    }
}

/// Full sha256 of a byte string as 64 hex digits.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hex16(digest: &[u8]) -> String {
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
