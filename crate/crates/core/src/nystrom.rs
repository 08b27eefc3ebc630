//! Nystrom low-rank factor of the RBF kernel matrix from uniformly sampled
//! landmark columns.
//!
//! With `S` the sampled index set, `C = K[:, S]` and `W = K[S, S]`, the factor
//! `Psi = C V_r diag(l_r^{-1/2})` built from the retained eigenpairs of `W`
//! satisfies `Psi Psi^T = C W^+ C^T`. Eigenvalues at or below
//! `eigen_cutoff * l_max` are treated as zero and their columns are dropped,
//! so `Psi` is `n x r` with `r <= s`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::kernel::cross_kernel;
use crate::sampling::sample_without_replacement;

/// Default relative eigenvalue threshold for the pseudo-inverse of `W`.
pub const DEFAULT_EIGEN_CUTOFF: f64 = 1e-12;

/// Matrix norm used to report approximation error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    Spectral,
    Frobenius,
    Trace,
}

/// Uniformly samples `s` distinct landmark indices from `0..n`.
pub fn sample_columns(n: usize, s: usize, seed: u64) -> Result<Vec<usize>> {
    if s == 0 || s > n {
        return Err(Error::Parameter(format!(
            "sketch size must satisfy 1 <= s <= n, got s = {s}, n = {n}"
        )));
    }
    sample_without_replacement(n, s, seed)
}

#[derive(Clone, Debug)]
pub struct NystromSketch {
    sample_indices: Vec<usize>,
    c: DMatrix<f64>,
    w: DMatrix<f64>,
    psi: DMatrix<f64>,
    eigen_cutoff: f64,
}

impl NystromSketch {
    pub fn sample_indices(&self) -> &[usize] {
        &self.sample_indices
    }

    /// `n x s` kernel columns at the landmarks.
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// `s x s` landmark block; identical to the landmark rows of `C`.
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// `n x r` low-rank factor.
    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn eigen_cutoff(&self) -> f64 {
        self.eigen_cutoff
    }

    pub fn sketch_size(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn rank(&self) -> usize {
        self.psi.ncols()
    }

    /// Dense `Psi Psi^T`. Test-scale only.
    pub fn approximation(&self) -> DMatrix<f64> {
        &self.psi * self.psi.transpose()
    }
}

/// Builds the sketch for the landmark rows `indices` of `x`.
pub fn build_sketch(
    x: &FeatureMatrix,
    sigma: f64,
    indices: &[usize],
    eigen_cutoff: f64,
) -> Result<NystromSketch> {
    let n = x.rows();
    if indices.is_empty() || indices.len() > n {
        return Err(Error::Parameter(format!(
            "sketch needs 1..={n} landmarks, got {}",
            indices.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(Error::Parameter(format!("landmark {i} out of range for n = {n}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Parameter(format!("landmark {i} sampled twice")));
        }
    }
    if !(eigen_cutoff.is_finite() && eigen_cutoff >= 0.0) {
        return Err(Error::Parameter(format!(
            "eigen cutoff must be non-negative, got {eigen_cutoff}"
        )));
    }

    let landmarks = x.select_rows(indices)?;
    let mut c = cross_kernel(x, &landmarks, sigma)?;
    let s = indices.len();
    // The landmark rows of C are W; make them exactly symmetric with a unit
    // diagonal so that W can be read straight out of C.
    for a in 0..s {
        c[(indices[a], a)] = 1.0;
        for b in (a + 1)..s {
            let v = 0.5 * (c[(indices[a], b)] + c[(indices[b], a)]);
            c[(indices[a], b)] = v;
            c[(indices[b], a)] = v;
        }
    }
    let w = c.select_rows(indices);

    let eig = SymmetricEigen::new(w.clone());
    let l_max = eig.eigenvalues.max();
    if !(l_max.is_finite() && l_max > 0.0) {
        return Err(Error::DegenerateSketch(format!(
            "landmark block has no positive eigenvalue (max {l_max})"
        )));
    }
    let threshold = eigen_cutoff * l_max;
    let kept: Vec<usize> = (0..s).filter(|&k| eig.eigenvalues[k] > threshold).collect();
    if kept.is_empty() {
        return Err(Error::DegenerateSketch(
            "every eigenvalue of the landmark block is below the cutoff".into(),
        ));
    }
    let mut scaled = DMatrix::zeros(s, kept.len());
    for (col, &k) in kept.iter().enumerate() {
        let f = eig.eigenvalues[k].sqrt().recip();
        scaled.set_column(col, &(eig.eigenvectors.column(k) * f));
    }
    let psi = &c * scaled;

    Ok(NystromSketch {
        sample_indices: indices.to_vec(),
        c,
        w,
        psi,
        eigen_cutoff,
    })
}

/// `||K - Psi Psi^T||` in the requested norm.
pub fn approximation_error(k: &DMatrix<f64>, sketch: &NystromSketch, norm: Norm) -> Result<f64> {
    let n = sketch.psi.nrows();
    if k.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "kernel matrix is {}x{}, sketch has {n} rows",
            k.nrows(),
            k.ncols()
        )));
    }
    let residual = k - sketch.approximation();
    Ok(match norm {
        Norm::Frobenius => residual.norm(),
        Norm::Spectral => residual.symmetric_eigenvalues().amax(),
        Norm::Trace => residual.symmetric_eigenvalues().iter().map(|v| v.abs()).sum(),
    })
}
