//! Dense row-major matrix and the training-sample container.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`. Small on purpose: the crate only needs
/// row access, element access and shape checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("matrix needs at least one row"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Mat {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert!(i < self.rows);
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A training or evaluation sample: feature matrix `x` (one row per point)
/// and response vector `y` of matching length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Mat,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Mat, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                got: y.len(),
            });
        }
        if !x.is_finite() || !y.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Dataset { x, y })
    }

    /// Univariate convenience constructor.
    pub fn univariate(x: &[f64], y: &[f64]) -> Result<Self> {
        Dataset::new(Mat::column(x), y.to_vec())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }
}
