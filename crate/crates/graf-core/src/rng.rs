//! Seed derivation and random number generation.
//!
//! Every stochastic stage of a run draws from a ChaCha stream whose seed is
//! derived from the experiment base seed through a fixed tag path, so two runs
//! with the same configuration are bit-identical no matter how work is
//! scheduled. The derivation is `derive(base, &[tag, index, ...])` with the
//! following stage tags:
//!
//! | stage                                   | path                                              |
//! |-----------------------------------------|---------------------------------------------------|
//! | train/validation/test split generation  | `[SPLITS]`                                        |
//! | parameter init (shared weights)         | `[run_seed, PARAM_INIT, slot]`                    |
//! | parameter init (per-association head)   | `[run_seed, PARAM_INIT, hash_name(assoc), head]`  |
//! | dropout mask for one epoch              | `[run_seed, DROPOUT, epoch]`                      |
//! | attention repeat `r` in grid cell `c`   | `[GRID_CELL, c, ATTENTION_REPEAT, r]`             |
//! | evaluation repeat `r` in grid cell `c`  | `[GRID_CELL, c, EVAL_REPEAT, r]`                  |
//! | final evaluation repeat `r`             | `[FINAL, r]`                                      |
//! | edge elimination for grid cell `c`      | `[ELIMINATION, c]`                                |
//! | k-means on repeat `r` embeddings        | `[KMEANS, r]`                                     |
//!
//! Per-association seeds are keyed by the association *name*, not its position,
//! so reordering the association list leaves every per-association stream
//! unchanged.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stage tags for seed derivation.
pub mod stage {
    pub const SPLITS: u64 = 0x01;
    pub const PARAM_INIT: u64 = 0x02;
    pub const DROPOUT: u64 = 0x03;
    pub const ELIMINATION: u64 = 0x04;
    pub const KMEANS: u64 = 0x05;
    pub const ATTENTION_REPEAT: u64 = 0x06;
    pub const EVAL_REPEAT: u64 = 0x07;
    pub const GRID_CELL: u64 = 0x08;
    pub const FINAL: u64 = 0x09;
    pub const SYNTH: u64 = 0x0A;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix one tag into a seed.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Derive a child seed by folding a tag path into the base seed.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |acc, &t| mix(acc, t))
}

/// Stable FNV-1a hash of a name, for name-keyed (order-independent) seeds.
pub fn hash_name(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Deterministic generator for a derived seed.
pub fn rng_from(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
