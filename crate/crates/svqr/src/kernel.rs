//! Kernel evaluation and Gram-matrix construction.

use serde::{Deserialize, Serialize};

use crate::data::Mat;
use crate::error::{Error, Result};

/// Kernel family plus its parameters.
///
/// The RBF kernel is `exp(-||x - y||^2 / q)` with width parameter `q > 0`
/// (same units as a squared feature distance). `Linear` is the plain inner
/// product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    Rbf { q: f64 },
    Linear,
}

impl KernelSpec {
    pub fn rbf(q: f64) -> Self {
        KernelSpec::Rbf { q }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Rbf { q } if !(q.is_finite() && *q > 0.0) => Err(Error::invalid(
                format!("RBF width q must be positive and finite, got {q}"),
            )),
            _ => Ok(()),
        }
    }

    /// Evaluate the kernel on a pair of equal-length feature vectors.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.validate()?;
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.eval_raw(x, y))
    }

    #[inline]
    pub(crate) fn eval_raw(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Rbf { q } => {
                let mut d2 = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let d = a - b;
                    d2 += d * d;
                }
                (-d2 / q).exp()
            }
            KernelSpec::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }

    /// Gram matrix `G[i][j] = k(x_i, x_j)` for the rows of `x`.
    ///
    /// Each unordered pair is evaluated once and mirrored, so the result is
    /// exactly symmetric.
    pub fn gram(&self, x: &Mat) -> Result<Mat> {
        self.validate()?;
        if x.rows() == 0 {
            return Err(Error::invalid("cannot build a Gram matrix of an empty sample"));
        }
        let l = x.rows();
        let mut g = Mat::zeros(l, l);
        for i in 0..l {
            for j in i..l {
                let v = self.eval_raw(x.row(i), x.row(j));
                g.set(i, j, v);
                g.set(j, i, v);
            }
        }
        Ok(g)
    }
}
