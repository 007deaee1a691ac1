//! Per-path random streams keyed by `(seed, arm, ε-index, path-index)`.
//!
//! The four words form the 32-byte ChaCha8 key directly, so distinct tuples
//! always give distinct streams and no stream depends on scheduling.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arm {
    Brownian,
    Jump,
    /// Random fields used by the hypothesis checks.
    Witness,
    /// The fixed test-point panel of the generator gap.
    Panel,
}

impl Arm {
    fn tag(self) -> u64 {
        match self {
            Arm::Brownian => 0,
            Arm::Jump => 1,
            Arm::Witness => 2,
            Arm::Panel => 3,
        }
    }
}

pub fn stream_key(seed: u64, arm: Arm, eps_index: u64, path: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([seed, arm.tag(), eps_index, path]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    key
}

pub fn stream(seed: u64, arm: Arm, eps_index: u64, path: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(stream_key(seed, arm, eps_index, path))
}

/// Checks that every stream of an experiment has a distinct key and a distinct
/// first output block. Returns the number of streams audited.
pub fn audit_streams(seed: u64, eps_count: u64, paths: u64) -> Result<usize, String> {
    use rand::RngCore;
    let mut keys = HashSet::new();
    let mut heads = HashSet::new();
    let arms = std::iter::once((Arm::Brownian, 0)).chain((0..eps_count).map(|e| (Arm::Jump, e)));
    for (arm, e) in arms {
        for p in 0..paths {
            let key = stream_key(seed, arm, e, p);
            if !keys.insert(key) {
                return Err(format!("key collision at arm {arm:?}, eps {e}, path {p}"));
            }
            let mut r = ChaCha8Rng::from_seed(key);
            let head = [r.next_u64(), r.next_u64()];
            if !heads.insert(head) {
                return Err(format!("output collision at arm {arm:?}, eps {e}, path {p}"));
            }
        }
    }
    Ok(keys.len())
}
