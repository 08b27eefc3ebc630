use faultsketch_core::{derive_seed, permutation};

use crate::error::{Error, Result};

/// Shuffles `0..n` and returns the training indices followed by the test
/// indices.
///
/// The training size is `n * train_fraction` rounded down or up at random
/// (seeded), with the fractional part as the probability of rounding up, so
/// every index lands in the test split with probability `1 - train_fraction`.
/// A rounding that would leave a split empty is never chosen.
pub fn holdout_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let exact = n as f64 * train_fraction;
    let (lo, hi) = (exact.floor() as usize, exact.ceil() as usize);
    let valid = |k: usize| k >= 1 && k < n;
    let n_train = match (valid(lo), valid(hi)) {
        (false, false) => {
            return Err(Error::Parameter(format!(
                "fraction {train_fraction} of {n} samples leaves an empty split"
            )))
        }
        (true, false) => lo,
        (false, true) => hi,
        (true, true) => {
            let u = (derive_seed(seed, u64::MAX) >> 11) as f64 / (1u64 << 53) as f64;
            if u < exact - lo as f64 {
                hi
            } else {
                lo
            }
        }
    };
    let mut perm = permutation(n, seed);
    let test = perm.split_off(n_train);
    Ok((perm, test))
}
