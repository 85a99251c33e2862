//! Hashing, keyed randomness and clocks.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the canonical JSON encoding of `value`.
///
/// Struct fields serialize in declaration order and all maps used in hashed
/// records are `BTreeMap`s, so the encoding is stable across runs.
pub fn canonical_digest<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("record types always serialize");
    sha256_hex(&bytes)
}

fn key_bytes(seed: u64, parts: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let mut out = [0u8; 32];
    out.copy_from_slice(&hasher.finalize());
    out
}

/// RNG whose stream depends only on `seed` and the key parts, never on call order.
pub fn keyed_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(key_bytes(seed, parts))
}

pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let bytes = key_bytes(seed, parts);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}

/// Bernoulli draw keyed on `parts`. `p <= 0` never fires and `p >= 1` always fires.
pub fn keyed_bernoulli(seed: u64, parts: &[&str], p: f64) -> bool {
    use rand::Rng;
    if p <= 0.0 {
        return false;
    }
    if p >= 1.0 {
        return true;
    }
    keyed_rng(seed, parts).random::<f64>() < p
}

/// Millisecond timestamps for events and ledger records.
pub trait Clock: Send + Sync {
    fn now(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Strictly increasing tick counter, used by simulated campaigns so that logs
/// are byte-identical across runs.
#[derive(Debug, Default)]
pub struct LogicalClock {
    tick: AtomicU64,
}

impl LogicalClock {
    pub fn starting_at(tick: u64) -> Self {
        Self {
            tick: AtomicU64::new(tick),
        }
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> u64 {
        self.tick.fetch_add(1, Ordering::SeqCst) + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_draws_ignore_call_order() {
        let a = keyed_bernoulli(7, &["c1", "A", "slot0"], 0.5);
        let _ = keyed_bernoulli(7, &["c2", "A", "slot0"], 0.5);
        assert_eq!(a, keyed_bernoulli(7, &["c1", "A", "slot0"], 0.5));
    }

    #[test]
    fn key_parts_are_length_prefixed() {
        assert_ne!(derive_seed(1, &["ab", "c"]), derive_seed(1, &["a", "bc"]));
    }

    #[test]
    fn degenerate_probabilities() {
        for i in 0..100 {
            let k = i.to_string();
            assert!(!keyed_bernoulli(3, &[&k], 0.0));
            assert!(keyed_bernoulli(3, &[&k], 1.0));
        }
    }

    #[test]
    fn logical_clock_is_strictly_increasing() {
        let clock = LogicalClock::default();
        let a = clock.now();
        let b = clock.now();
        assert!(b > a);
    }
}
