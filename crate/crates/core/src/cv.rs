//! K-fold grid search over the regularizer and kernel width.

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Standardizer};
use crate::kernel::{cross_kernel_rowmajor, kernel_matrix};
use crate::krr::{SmwSolver, TrainOptions};
use crate::metrics::mae;
use crate::nystrom::{build_sketch, sample_columns, DEFAULT_EIGEN_CUTOFF};
use crate::sampling::{derive_seed, permutation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub lambda: f64,
    pub sigma: f64,
    pub mean_mae: f64,
    pub fold_mae: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda: f64,
    pub sigma: f64,
    pub scores: Vec<CvScore>,
}

/// A single train/validation split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits a seeded shuffle of `0..n` into `folds` contiguous parts whose
/// sizes differ by at most one.
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(Error::Parameter(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::Parameter(format!(
            "{folds} folds over {n} samples leaves an empty split"
        )));
    }
    let perm = permutation(n, seed);
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let test = perm[start..start + len].to_vec();
        let train = perm[..start].iter().chain(&perm[start + len..]).copied().collect();
        out.push(Fold { train, test });
        start += len;
    }
    Ok(out)
}

fn sorted_grid(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Parameter(format!("{what} grid is empty")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter(format!("{what} grid has non-finite values")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// Scores every `(lambda, sigma)` pair by mean held-out MAE over `folds`
/// folds and returns the minimizer. Ties go to the larger `lambda`, then the
/// larger `sigma`. With `sketch_size = Some(s)` each fold trains through a
/// Nystrom sketch of `min(s, n_train)` landmarks, otherwise by exact solve.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    x: &FeatureMatrix,
    y: &[f64],
    lambda_grid: &[f64],
    sigma_grid: &[f64],
    folds: usize,
    sketch_size: Option<usize>,
    seed: u64,
    opts: &TrainOptions,
) -> Result<CvResult> {
    if y.len() != x.rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows",
            y.len(),
            x.rows()
        )));
    }
    let lambdas = sorted_grid(lambda_grid, "lambda")?;
    let sigmas = sorted_grid(sigma_grid, "sigma")?;
    if lambdas[0] < 0.0 {
        return Err(Error::Parameter("lambda grid has negative values".into()));
    }
    if sigmas[0] <= 0.0 {
        return Err(Error::Parameter("sigma grid has non-positive values".into()));
    }
    let splits = kfold_indices(x.rows(), folds, seed)?;

    // fold_mae[sigma][lambda][fold]
    let mut table = vec![vec![Vec::with_capacity(folds); lambdas.len()]; sigmas.len()];
    for (f, split) in splits.iter().enumerate() {
        let mut train = x.select_rows(&split.train)?;
        let mut test = x.select_rows(&split.test)?;
        if opts.standardize {
            let st = Standardizer::fit(&train);
            train = st.apply(&train)?;
            test = st.apply(&test)?;
        }
        let y_train: Vec<f64> = split.train.iter().map(|&i| y[i]).collect();
        let y_test: Vec<f64> = split.test.iter().map(|&i| y[i]).collect();
        let offset = if opts.center_targets {
            y_train.iter().sum::<f64>() / y_train.len() as f64
        } else {
            0.0
        };
        let rhs = DVector::from_iterator(y_train.len(), y_train.iter().map(|v| v - offset));
        let n_train = train.rows();

        for (si, &sigma) in sigmas.iter().enumerate() {
            let k_test = cross_kernel_rowmajor(&test, &train, sigma, 64)?;
            let score = |alpha: &[f64]| -> Result<f64> {
                let pred: Vec<f64> = k_test
                    .chunks_exact(n_train)
                    .map(|row| offset + row.iter().zip(alpha).map(|(k, a)| k * a).sum::<f64>())
                    .collect();
                mae(&y_test, &pred)
            };
            match sketch_size {
                Some(s) => {
                    let s = s.min(n_train);
                    let idx = sample_columns(n_train, s, derive_seed(seed, f as u64))?;
                    let sketch = build_sketch(&train, sigma, &idx, DEFAULT_EIGEN_CUTOFF)?;
                    let solver = SmwSolver::new(sketch.psi().clone());
                    for (li, &lambda) in lambdas.iter().enumerate() {
                        let alpha = solver.solve(lambda, rhs.as_slice())?;
                        table[si][li].push(score(&alpha)?);
                    }
                }
                None => {
                    if n_train > opts.exact_ceiling {
                        return Err(Error::Resource(format!(
                            "exact cross-validation limited to {} samples, fold has {n_train}",
                            opts.exact_ceiling
                        )));
                    }
                    let k = kernel_matrix(&train, sigma)?;
                    for (li, &lambda) in lambdas.iter().enumerate() {
                        let mut reg = k.clone();
                        for i in 0..n_train {
                            reg[(i, i)] += lambda;
                        }
                        let chol = Cholesky::new(reg).ok_or_else(|| {
                            Error::Numerical(format!(
                                "K + lambda I not positive definite for lambda = {lambda}"
                            ))
                        })?;
                        let alpha = chol.solve(&rhs);
                        table[si][li].push(score(alpha.as_slice())?);
                    }
                }
            }
        }
    }

    let mut scores = Vec::with_capacity(lambdas.len() * sigmas.len());
    for (li, &lambda) in lambdas.iter().enumerate() {
        for (si, &sigma) in sigmas.iter().enumerate() {
            let fold_mae = table[si][li].clone();
            let mean_mae = fold_mae.iter().sum::<f64>() / fold_mae.len() as f64;
            scores.push(CvScore {
                lambda,
                sigma,
                mean_mae,
                fold_mae,
            });
        }
    }
    let best = scores
        .iter()
        .min_by(|a, b| {
            a.mean_mae
                .total_cmp(&b.mean_mae)
                .then(b.lambda.total_cmp(&a.lambda))
                .then(b.sigma.total_cmp(&a.sigma))
        })
        .expect("grids are non-empty");
    Ok(CvResult {
        lambda: best.lambda,
        sigma: best.sigma,
        scores,
    })
}
