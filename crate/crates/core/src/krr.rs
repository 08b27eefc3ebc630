//! Kernel ridge regression: the exact dual solve and the Nystrom-sketched
//! solve through the Sherman-Morrison-Woodbury identity.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, KernelConfig, Standardizer};
use crate::kernel::{cross_kernel_rowmajor, kernel_matrix};
use crate::nystrom::{build_sketch, sample_columns};

/// Largest training set the exact solver accepts unless overridden.
pub const DEFAULT_EXACT_CEILING: usize = 10_000;

const PREDICT_BLOCK: usize = 256;

/// How the dual weights were obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Variant {
    Exact,
    Nystrom { s: usize, seed: u64, eigen_cutoff: f64 },
}

impl Variant {
    pub fn tag(&self) -> &'static str {
        match self {
            Variant::Exact => "exact",
            Variant::Nystrom { .. } => "nystrom",
        }
    }
}

/// Training switches. The defaults reproduce the plain dual solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    /// Exact training refuses more samples than this.
    pub exact_ceiling: usize,
    /// Standardize feature columns with training-split statistics.
    pub standardize: bool,
    /// Fit the targets minus their training mean and add it back at
    /// prediction time.
    pub center_targets: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            exact_ceiling: DEFAULT_EXACT_CEILING,
            standardize: false,
            center_targets: false,
        }
    }
}

/// Trained single-output model. Immutable; prediction needs all training
/// features, which are shared rather than copied.
#[derive(Clone, Debug, PartialEq)]
pub struct KrrModel {
    pub(crate) alpha: Vec<f64>,
    pub(crate) config: KernelConfig,
    pub(crate) train_features: FeatureMatrix,
    pub(crate) variant: Variant,
    pub(crate) intercept: f64,
    pub(crate) standardizer: Option<Standardizer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub wall_time_train: f64,
    pub n: usize,
    pub d: usize,
    pub s: Option<usize>,
    pub rank: Option<usize>,
    pub variant: String,
    pub lambda: f64,
    pub sigma: f64,
}

impl KrrModel {
    /// Assembles a model from its parts. `alpha` must match the training rows.
    pub fn from_parts(
        alpha: Vec<f64>,
        config: KernelConfig,
        train_features: FeatureMatrix,
        variant: Variant,
        intercept: f64,
        standardizer: Option<Standardizer>,
    ) -> Result<Self> {
        config.validate()?;
        if alpha.len() != train_features.rows() {
            return Err(Error::Dimension(format!(
                "{} weights for {} training rows",
                alpha.len(),
                train_features.rows()
            )));
        }
        if alpha.iter().any(|a| !a.is_finite()) || !intercept.is_finite() {
            return Err(Error::Numerical("model weights are not finite".into()));
        }
        if let Some(st) = &standardizer {
            if st.mean.len() != train_features.cols() || st.scale.len() != train_features.cols() {
                return Err(Error::Dimension("standardizer width differs from features".into()));
            }
        }
        Ok(Self {
            alpha,
            config,
            train_features,
            variant,
            intercept,
            standardizer,
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn train_features(&self) -> &FeatureMatrix {
        &self.train_features
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.train_features.cols()
    }

    /// Same model with different weights.
    pub fn with_alpha(&self, alpha: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            alpha,
            self.config,
            self.train_features.clone(),
            self.variant.clone(),
            self.intercept,
            self.standardizer.clone(),
        )
    }

    /// `intercept + sum_i alpha_i k(x, x_i)`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "query has {} features, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let q = FeatureMatrix::new(1, x.len(), x.to_vec())?;
        Ok(self.predict_batch(&q)?[0])
    }

    /// Row-wise [`predict`](Self::predict). Queries are processed in blocks,
    /// and each row's result does not depend on the blocking.
    pub fn predict_batch(&self, queries: &FeatureMatrix) -> Result<Vec<f64>> {
        if queries.cols() != self.dim() {
            return Err(Error::Dimension(format!(
                "queries have {} features, model expects {}",
                queries.cols(),
                self.dim()
            )));
        }
        let queries = match &self.standardizer {
            Some(st) => st.apply(queries)?,
            None => queries.clone(),
        };
        let n = self.train_features.rows();
        let mut out = Vec::with_capacity(queries.rows());
        let all: Vec<usize> = (0..queries.rows()).collect();
        for block in all.chunks(PREDICT_BLOCK) {
            let q = queries.select_rows(block)?;
            let k = cross_kernel_rowmajor(&q, &self.train_features, self.config.sigma, 64)?;
            for row in k.chunks_exact(n) {
                let dot: f64 = row.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
                out.push(self.intercept + dot);
            }
        }
        Ok(out)
    }
}

struct Prepared {
    features: FeatureMatrix,
    standardizer: Option<Standardizer>,
    targets: Vec<(f64, DVector<f64>)>,
}

fn prepare(x: &FeatureMatrix, ys: &[&[f64]], opts: &TrainOptions) -> Result<Prepared> {
    if ys.is_empty() {
        return Err(Error::Input("no targets to train".into()));
    }
    let mut targets = Vec::with_capacity(ys.len());
    for y in ys {
        if y.len() != x.rows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} feature rows",
                y.len(),
                x.rows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("labels contain non-finite values".into()));
        }
        let offset = if opts.center_targets {
            y.iter().sum::<f64>() / y.len() as f64
        } else {
            0.0
        };
        targets.push((offset, DVector::from_iterator(y.len(), y.iter().map(|v| v - offset))));
    }
    let (features, standardizer) = if opts.standardize {
        let st = Standardizer::fit(x);
        (st.apply(x)?, Some(st))
    } else {
        (x.clone(), None)
    };
    Ok(Prepared {
        features,
        standardizer,
        targets,
    })
}

fn finish(
    prepared: Prepared,
    alphas: Vec<DVector<f64>>,
    config: &KernelConfig,
    variant: Variant,
) -> Result<Vec<KrrModel>> {
    prepared
        .targets
        .iter()
        .zip(alphas)
        .map(|((offset, _), alpha)| {
            KrrModel::from_parts(
                alpha.as_slice().to_vec(),
                *config,
                prepared.features.clone(),
                variant.clone(),
                *offset,
                prepared.standardizer.clone(),
            )
        })
        .collect()
}

/// Exact KRR: `alpha = (K + lambda I)^{-1} y` by Cholesky.
pub fn train_exact(
    x: &FeatureMatrix,
    y: &[f64],
    config: &KernelConfig,
    opts: &TrainOptions,
) -> Result<(KrrModel, TrainReport)> {
    let (mut models, report) = train_exact_multi(x, &[y], config, opts)?;
    Ok((models.remove(0), report))
}

/// Exact KRR for several targets sharing one kernel factorization.
pub fn train_exact_multi(
    x: &FeatureMatrix,
    ys: &[&[f64]],
    config: &KernelConfig,
    opts: &TrainOptions,
) -> Result<(Vec<KrrModel>, TrainReport)> {
    config.validate()?;
    let n = x.rows();
    if n > opts.exact_ceiling {
        return Err(Error::Resource(format!(
            "exact KRR limited to {} samples, got {n}",
            opts.exact_ceiling
        )));
    }
    let start = Instant::now();
    let prepared = prepare(x, ys, opts)?;
    let mut k = kernel_matrix(&prepared.features, config.sigma)?;
    for i in 0..n {
        k[(i, i)] += config.lambda;
    }
    let chol = Cholesky::new(k).ok_or_else(|| {
        Error::Numerical(format!(
            "K + lambda I is not positive definite (lambda = {})",
            config.lambda
        ))
    })?;
    let alphas: Vec<DVector<f64>> = prepared.targets.iter().map(|(_, y)| chol.solve(y)).collect();
    if alphas.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numerical("exact solve produced non-finite weights".into()));
    }
    let wall = start.elapsed().as_secs_f64();
    let report = TrainReport {
        wall_time_train: wall,
        n,
        d: x.cols(),
        s: None,
        rank: None,
        variant: "exact".into(),
        lambda: config.lambda,
        sigma: config.sigma,
    };
    Ok((finish(prepared, alphas, config, Variant::Exact)?, report))
}

/// Nystrom KRR:
/// `alpha = y / lambda - Psi (lambda I + Psi^T Psi)^{-1} Psi^T y / lambda`.
/// Never forms an `n x n` matrix.
pub fn train_nystrom(
    x: &FeatureMatrix,
    y: &[f64],
    config: &KernelConfig,
    s: usize,
    seed: u64,
    eigen_cutoff: f64,
    opts: &TrainOptions,
) -> Result<(KrrModel, TrainReport)> {
    let (mut models, report) = train_nystrom_multi(x, &[y], config, s, seed, eigen_cutoff, opts)?;
    Ok((models.remove(0), report))
}

/// Nystrom KRR for several targets sharing one sketch.
pub fn train_nystrom_multi(
    x: &FeatureMatrix,
    ys: &[&[f64]],
    config: &KernelConfig,
    s: usize,
    seed: u64,
    eigen_cutoff: f64,
    opts: &TrainOptions,
) -> Result<(Vec<KrrModel>, TrainReport)> {
    config.validate()?;
    check_lambda_positive(config.lambda)?;
    let start = Instant::now();
    let prepared = prepare(x, ys, opts)?;
    let indices = sample_columns(x.rows(), s, seed)?;
    let sketch = build_sketch(&prepared.features, config.sigma, &indices, eigen_cutoff)?;
    let solver = SmwSolver::new(sketch.psi().clone());
    let alphas = prepared
        .targets
        .iter()
        .map(|(_, y)| solver.solve(config.lambda, y.as_slice()).map(DVector::from_vec))
        .collect::<Result<Vec<_>>>()?;
    let wall = start.elapsed().as_secs_f64();
    let report = TrainReport {
        wall_time_train: wall,
        n: x.rows(),
        d: x.cols(),
        s: Some(s),
        rank: Some(sketch.rank()),
        variant: "nystrom".into(),
        lambda: config.lambda,
        sigma: config.sigma,
    };
    let variant = Variant::Nystrom {
        s,
        seed,
        eigen_cutoff,
    };
    Ok((finish(prepared, alphas, config, variant)?, report))
}

fn check_lambda_positive(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "the Woodbury solve needs lambda > 0, got {lambda}"
        )))
    }
}

/// Applies `(Psi Psi^T + lambda I_n)^{-1}` through `r x r` factorizations.
///
/// `Psi^T Psi` is computed once, so solving for several regularizers or
/// right-hand sides costs `O(n r)` each after an `O(n r^2)` setup.
pub struct SmwSolver {
    psi: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl SmwSolver {
    pub fn new(psi: DMatrix<f64>) -> Self {
        let gram = psi.tr_mul(&psi);
        Self { psi, gram }
    }

    pub fn rank(&self) -> usize {
        self.psi.ncols()
    }

    pub fn solve(&self, lambda: f64, v: &[f64]) -> Result<Vec<f64>> {
        check_lambda_positive(lambda)?;
        let n = self.psi.nrows();
        if v.len() != n {
            return Err(Error::Dimension(format!(
                "right-hand side has {} entries, factor has {n} rows",
                v.len()
            )));
        }
        let v = DVector::from_column_slice(v);
        let r = self.psi.ncols();
        if r == 0 {
            return Ok((v / lambda).as_slice().to_vec());
        }
        let chol = self.inner_factor(lambda)?;
        let proj = self.psi.tr_mul(&v);
        let inner = chol.solve(&proj);
        let out = (v - &self.psi * inner) / lambda;
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("Woodbury solve produced non-finite values".into()));
        }
        Ok(out.as_slice().to_vec())
    }

    /// Cholesky of `lambda I_r + Psi^T Psi`, with one jittered retry.
    fn inner_factor(&self, lambda: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        let r = self.gram.nrows();
        let mut m = self.gram.clone();
        for i in 0..r {
            m[(i, i)] += lambda;
        }
        if let Some(c) = Cholesky::new(m.clone()) {
            return Ok(c);
        }
        let jitter = 1e-10 * m.trace().abs() / r as f64;
        for i in 0..r {
            m[(i, i)] += jitter;
        }
        Cholesky::new(m).ok_or_else(|| {
            Error::Numerical("inner Woodbury system is not positive definite".into())
        })
    }
}

/// `(Psi Psi^T + lambda I_n)^{-1} v` using only `r x r` factorizations.
pub fn smw_inverse_apply(psi: &DMatrix<f64>, lambda: f64, v: &[f64]) -> Result<Vec<f64>> {
    SmwSolver::new(psi.clone()).solve(lambda, v)
}
