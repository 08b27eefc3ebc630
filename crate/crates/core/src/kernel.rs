//! Gaussian RBF kernel evaluation and kernel-matrix assembly.
//!
//! Matrix assembly uses `||a - b||^2 = ||a||^2 + ||b||^2 - 2 a.b` with cached
//! row norms, so the inner products run through a blocked GEMM. Rows are split
//! into fixed-size blocks that are assembled in parallel. Every entry is
//! produced by the same GEMM call shape regardless of which block holds it, so
//! the output does not depend on the partition or the thread count.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::sampling::sample_without_replacement;

const BLOCK_ROWS: usize = 64;

/// `exp(-||a - b||^2 / (2 sigma^2))`.
pub fn rbf(a: &[f64], b: &[f64], sigma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "rbf arguments have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    check_sigma(sigma)?;
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Input("rbf argument contains non-finite values".into()));
    }
    Ok(rbf_from_sq_dist(squared_distance(a, b), sigma))
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn rbf_from_sq_dist(sq: f64, sigma: f64) -> f64 {
    (-sq.max(0.0) / (2.0 * sigma * sigma)).exp()
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "kernel width must be positive and finite, got {sigma}"
        )))
    }
}

fn alloc_zeroed(len: usize, what: &str) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len).map_err(|_| {
        Error::Resource(format!(
            "cannot allocate {len} values for {what}; use a Nystrom sketch instead"
        ))
    })?;
    v.resize(len, 0.0);
    Ok(v)
}

/// `out[i * m + j] = a_i . b_j` for row-major `a` (`a_rows x d`) and `b`
/// (`m x d`).
fn gram_block(a: &[f64], b: &[f64], d: usize, out: &mut [f64]) {
    let n = a.len() / d;
    let m = b.len() / d;
    debug_assert_eq!(out.len(), n * m);
    if n == 0 || m == 0 {
        return;
    }
    // SAFETY: the slices hold exactly n*d, m*d and n*m elements and the
    // strides describe row-major layouts inside those bounds.
    unsafe {
        matrixmultiply::dgemm(
            n,
            d,
            m,
            1.0,
            a.as_ptr(),
            d as isize,
            1,
            b.as_ptr(),
            1,
            d as isize,
            0.0,
            out.as_mut_ptr(),
            m as isize,
            1,
        );
    }
}

/// Row-major `a.rows() x b.rows()` cross-kernel values.
pub(crate) fn cross_kernel_rowmajor(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    sigma: f64,
    block_rows: usize,
) -> Result<Vec<f64>> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "cross kernel feature widths differ: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    check_sigma(sigma)?;
    let (n, m, d) = (a.rows(), b.rows(), a.cols());
    let len = n
        .checked_mul(m)
        .ok_or_else(|| Error::Resource(format!("{n}x{m} kernel block overflows")))?;
    let mut out = alloc_zeroed(len, "cross kernel")?;
    let na = a.row_sq_norms();
    let nb = b.row_sq_norms();
    let inv = 1.0 / (2.0 * sigma * sigma);
    out.par_chunks_mut(block_rows * m)
        .enumerate()
        .for_each(|(blk, chunk)| {
            let r0 = blk * block_rows;
            let rows = chunk.len() / m;
            gram_block(&a.as_slice()[r0 * d..(r0 + rows) * d], b.as_slice(), d, chunk);
            for (i, row) in chunk.chunks_exact_mut(m).enumerate() {
                let ni = na[r0 + i];
                for (v, nj) in row.iter_mut().zip(&nb) {
                    let sq = (ni + nj - 2.0 * *v).max(0.0);
                    *v = (-sq * inv).exp();
                }
            }
        });
    Ok(out)
}

/// Kernel values between every row of `a` and every row of `b`
/// (`a.rows() x b.rows()`).
pub fn cross_kernel(a: &FeatureMatrix, b: &FeatureMatrix, sigma: f64) -> Result<DMatrix<f64>> {
    let data = cross_kernel_rowmajor(a, b, sigma, BLOCK_ROWS)?;
    Ok(DMatrix::from_row_slice(a.rows(), b.rows(), &data))
}

/// Full `n x n` training kernel matrix. Symmetric with an exact unit diagonal.
pub fn kernel_matrix(x: &FeatureMatrix, sigma: f64) -> Result<DMatrix<f64>> {
    kernel_matrix_blocked(x, sigma, BLOCK_ROWS)
}

pub(crate) fn kernel_matrix_blocked(
    x: &FeatureMatrix,
    sigma: f64,
    block_rows: usize,
) -> Result<DMatrix<f64>> {
    check_sigma(sigma)?;
    let (n, d) = (x.rows(), x.cols());
    let len = n
        .checked_mul(n)
        .ok_or_else(|| Error::Resource(format!("{n}x{n} kernel matrix overflows")))?;
    let mut out = alloc_zeroed(len, "kernel matrix")?;
    let norms = x.row_sq_norms();
    let inv = 1.0 / (2.0 * sigma * sigma);
    let data = x.as_slice();
    // Each block fills its own rows from the block start to the right edge;
    // the strictly lower triangle is mirrored afterwards.
    out.par_chunks_mut(block_rows * n)
        .enumerate()
        .for_each(|(blk, chunk)| {
            let r0 = blk * block_rows;
            let rows = chunk.len() / n;
            let width = n - r0;
            let mut gram = vec![0.0; rows * width];
            gram_block(&data[r0 * d..(r0 + rows) * d], &data[r0 * d..], d, &mut gram);
            for i in 0..rows {
                let gi = r0 + i;
                let row = &mut chunk[i * n..(i + 1) * n];
                for j in gi..n {
                    let g = gram[i * width + (j - r0)];
                    row[j] = if j == gi {
                        1.0
                    } else {
                        (-(norms[gi] + norms[j] - 2.0 * g).max(0.0) * inv).exp()
                    };
                }
            }
        });
    for i in 0..n {
        for j in 0..i {
            out[i * n + j] = out[j * n + i];
        }
    }
    // Symmetric, so the row-major buffer is also the column-major layout.
    Ok(DMatrix::from_vec(n, n, out))
}

/// Kernel-width heuristic: the root mean squared pairwise distance over a
/// uniformly sampled subset of `subsample` rows,
/// `sqrt(1/|J|^2 * sum_{i,j in J} ||x_i - x_j||^2)`.
///
/// Evaluated as `sqrt(2/|J| * sum_i ||x_i - mean_J||^2)`, which is the same
/// double sum. Identical rows give a zero width, reported as an error.
pub fn sigma_heuristic(x: &FeatureMatrix, subsample: usize, seed: u64) -> Result<f64> {
    if subsample < 2 {
        return Err(Error::Parameter(format!(
            "sigma heuristic needs at least 2 samples, got {subsample}"
        )));
    }
    if subsample > x.rows() {
        return Err(Error::Parameter(format!(
            "sigma heuristic subsample {subsample} exceeds {} rows",
            x.rows()
        )));
    }
    let idx = sample_without_replacement(x.rows(), subsample, seed)?;
    let d = x.cols();
    let mut mean = vec![0.0; d];
    for &i in &idx {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    let j = idx.len() as f64;
    mean.iter_mut().for_each(|m| *m /= j);
    let spread: f64 = idx.iter().map(|&i| squared_distance(x.row(i), &mean)).sum();
    let sigma = (2.0 * spread / j).sqrt();
    if sigma > 0.0 && sigma.is_finite() {
        Ok(sigma)
    } else {
        Err(Error::Input(
            "kernel width heuristic is zero: all sampled rows are identical".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureMatrix::new(n, d, data).unwrap()
    }

    fn brute_force(a: &FeatureMatrix, b: &FeatureMatrix, sigma: f64) -> Vec<Vec<f64>> {
        (0..a.rows())
            .map(|i| {
                (0..b.rows())
                    .map(|j| {
                        let sq: f64 = a
                            .row(i)
                            .iter()
                            .zip(b.row(j))
                            .map(|(p, q)| (p - q).powi(2))
                            .sum();
                        (-sq / (2.0 * sigma * sigma)).exp()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn rbf_examples() {
        assert_eq!(rbf(&[0.3, -2.0], &[0.3, -2.0], 1.0).unwrap(), 1.0);
        let v = rbf(&[0.0, 0.0], &[3.0, 4.0], 5.0).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.606531).abs() < 1e-6);
        let v = rbf(&[1.0], &[1.0 + 1e-300], 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rbf_errors() {
        assert!(matches!(rbf(&[1.0], &[1.0, 2.0], 1.0), Err(Error::Dimension(_))));
        assert!(matches!(rbf(&[f64::NAN], &[1.0], 1.0), Err(Error::Input(_))));
        assert!(matches!(rbf(&[1.0], &[1.0], 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn kernel_matrix_small_cases() {
        let one = FeatureMatrix::from_rows(&[[4.0, -1.0]]).unwrap();
        assert_eq!(kernel_matrix(&one, 0.7).unwrap(), DMatrix::from_element(1, 1, 1.0));
        let twins = FeatureMatrix::from_rows(&[[1.5, 2.0], [1.5, 2.0]]).unwrap();
        assert_eq!(kernel_matrix(&twins, 0.3).unwrap(), DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn kernel_matrix_matches_double_loop() {
        let x = random_matrix(5, 3, 11);
        let k = kernel_matrix(&x, 0.8).unwrap();
        let oracle = brute_force(&x, &x, 0.8);
        for i in 0..5 {
            for j in 0..5 {
                assert!((k[(i, j)] - oracle[i][j]).abs() < 1e-13, "({i},{j})");
            }
        }
    }

    #[test]
    fn cross_kernel_matches_double_loop() {
        let a = random_matrix(4, 2, 3);
        let b = random_matrix(3, 2, 4);
        let c = cross_kernel(&a, &b, 0.5).unwrap();
        assert_eq!(c.shape(), (4, 3));
        let oracle = brute_force(&a, &b, 0.5);
        for i in 0..4 {
            for j in 0..3 {
                assert!((c[(i, j)] - oracle[i][j]).abs() < 1e-13);
            }
        }
        let single = b.select_rows(&[1]).unwrap();
        let col = cross_kernel(&a, &single, 0.5).unwrap();
        for i in 0..4 {
            assert_eq!(col[(i, 0)], c[(i, 1)]);
        }
        assert!(matches!(
            cross_kernel(&a, &random_matrix(2, 3, 1), 0.5),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn cross_kernel_of_self_matches_kernel_matrix() {
        let x = random_matrix(9, 4, 5);
        let k = kernel_matrix(&x, 1.1).unwrap();
        let c = cross_kernel(&x, &x, 1.1).unwrap();
        assert!((k - c).amax() < 1e-13);
    }

    #[test]
    fn assembly_is_partition_independent() {
        let x = random_matrix(131, 17, 8);
        let reference = kernel_matrix_blocked(&x, 2.0, 64).unwrap();
        let cross_ref = cross_kernel_rowmajor(&x, &x, 2.0, 64).unwrap();
        for block in [1, 3, 7, 50, 200] {
            assert_eq!(kernel_matrix_blocked(&x, 2.0, block).unwrap(), reference);
            assert_eq!(cross_kernel_rowmajor(&x, &x, 2.0, block).unwrap(), cross_ref);
        }
    }

    #[test]
    fn kernel_matrix_is_exactly_symmetric_with_unit_diagonal() {
        let x = random_matrix(70, 6, 21);
        let k = kernel_matrix(&x, 0.9).unwrap();
        assert_eq!(k, k.transpose());
        assert!((0..70).all(|i| k[(i, i)] == 1.0));
    }

    #[test]
    fn kernel_matrix_is_numerically_psd() {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 7);
            let x = random_matrix(n, 3, 100 + seed);
            let k = kernel_matrix(&x, 0.6).unwrap();
            let norm = k.norm();
            let eig = k.symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e >= -1e-10 * norm), "seed {seed}: {eig}");
        }
    }

    #[test]
    fn sigma_heuristic_examples() {
        let x = FeatureMatrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let s = sigma_heuristic(&x, 2, 0).unwrap();
        assert!((s - 12.5f64.sqrt()).abs() < 1e-14);
        assert!((s - 3.5355).abs() < 1e-4);

        let same = FeatureMatrix::from_rows(&[[1.0, 2.0]; 4]).unwrap();
        assert!(matches!(sigma_heuristic(&same, 3, 1), Err(Error::Input(_))));
        assert!(matches!(sigma_heuristic(&x, 1, 0), Err(Error::Parameter(_))));
        assert!(matches!(sigma_heuristic(&x, 3, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn sigma_heuristic_full_subset_matches_double_sum() {
        for seed in 0..10 {
            let x = random_matrix(6, 3, 40 + seed);
            let mut total = 0.0;
            for i in 0..6 {
                for j in 0..6 {
                    total += x
                        .row(i)
                        .iter()
                        .zip(x.row(j))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>();
                }
            }
            let oracle = (total / 36.0).sqrt();
            let s = sigma_heuristic(&x, 6, seed).unwrap();
            assert!(((s - oracle) / oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_heuristic_is_seed_deterministic() {
        let x = random_matrix(200, 5, 9);
        assert_eq!(sigma_heuristic(&x, 30, 4).unwrap(), sigma_heuristic(&x, 30, 4).unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rbf_monotone_in_distance_and_width(
                base in proptest::collection::vec(-5.0f64..5.0, 3),
                dir in proptest::collection::vec(-1.0f64..1.0, 3),
                t1 in 0.01f64..2.0, t2 in 0.01f64..2.0,
                s1 in 0.1f64..5.0, s2 in 0.1f64..5.0,
            ) {
                prop_assume!(dir.iter().any(|v| v.abs() > 1e-3));
                let at = |t: f64| base.iter().zip(&dir).map(|(b, d)| b + t * d).collect::<Vec<_>>();
                let (near, far) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                let sigma = 1.0;
                prop_assert!(rbf(&base, &at(near), sigma).unwrap() >= rbf(&base, &at(far), sigma).unwrap());
                let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
                prop_assert!(rbf(&base, &at(t1), lo).unwrap() <= rbf(&base, &at(t1), hi).unwrap());
                prop_assert_eq!(rbf(&base, &at(t1), s1).unwrap(), rbf(&at(t1), &base, s1).unwrap());
            }
        }
    }
}
