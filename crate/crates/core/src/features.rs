//! Dense feature storage and the kernel hyperparameters.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `n x d` matrix of finite features, one sample per row.
///
/// Storage is shared, so cloning is cheap and a trained model can retain its
/// training features without copying them.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Arc<[f64]>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Input(format!(
                "feature matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} values for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite feature at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            data: data.into(),
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::Dimension(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.cols, data)
    }

    /// Squared Euclidean norm of every row.
    pub fn row_sq_norms(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|r| r.iter().map(|v| v * v).sum())
            .collect()
    }
}

/// RBF kernel width and ridge regularizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub sigma: f64,
    pub lambda: f64,
}

impl KernelConfig {
    pub fn new(sigma: f64, lambda: f64) -> Result<Self> {
        let cfg = Self { sigma, lambda };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Parameter(format!(
                "kernel width must be positive and finite, got {}",
                self.sigma
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Parameter(format!(
                "regularizer must be non-negative and finite, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Per-column affine standardization fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Columns with zero spread keep a unit scale.
    pub fn fit(x: &FeatureMatrix) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for r in x.as_slice().chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in x.as_slice().chunks_exact(d) {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.scale) {
            *o = (v - m) / s;
        }
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "standardizer fitted on {} columns, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let mut data = vec![0.0; x.rows() * x.cols()];
        for (out, row) in data
            .chunks_exact_mut(x.cols())
            .zip(x.as_slice().chunks_exact(x.cols()))
        {
            self.apply_row(row, out);
        }
        FeatureMatrix::new(x.rows(), x.cols(), data)
    }
}
