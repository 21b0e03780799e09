//! Deterministic random streams keyed by (master seed, task index).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream for task `task` under `seed`. Streams do not depend on
/// scheduling, so parallel and serial runs draw identical numbers.
pub fn task_rng(seed: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

/// Pack a multi-part task index into one stream id.
pub fn task_id(parts: &[u64]) -> u64 {
    // FNV-1a over the parts; collisions are astronomically unlikely for the
    // small index spaces used here.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for byte in p.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    h
}
