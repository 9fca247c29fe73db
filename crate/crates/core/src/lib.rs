//! Continual skill discovery and lifelong imitation learning on
//! demonstration streams.
//!
//! Demonstrations are cut into temporal segments, the segments are grouped
//! into skill partitions that grow as new tasks arrive, and each partition
//! trains a goal-conditioned skill policy selected by a masked
//! meta-controller. An exemplar buffer replays old data while the library
//! grows. The [`synth`] module provides a small deterministic manipulation
//! benchmark with oracle labels.

pub mod clustering;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod persist;
pub mod pipeline;
pub mod policy;
pub mod replay;
pub mod report;
pub mod segmentation;
pub mod synth;
pub mod trajectory;

/// Folds several integers into one well-mixed 64-bit seed (splitmix64).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}
