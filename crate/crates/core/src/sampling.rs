//! Seeded uniform sampling without replacement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deterministic generator for a seed. ChaCha is counter based, so streams
/// are reproducible across platforms.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `k` distinct indices from `0..n`, uniform over subsets and in uniformly
/// random order (partial Fisher-Yates).
pub fn sample_without_replacement(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "cannot sample {k} distinct items from {n}"
        )));
    }
    let mut rng = rng_for(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    Ok(pool)
}

/// Uniformly shuffled `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    sample_without_replacement(n, n, seed).expect("n >= 1")
}

/// Mixes a master seed with a run index into an independent stream seed
/// (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
