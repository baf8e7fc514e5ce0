//! Evaluation criteria and tube-geometry statistics.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::Tau;
use crate::model::TrainedModel;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    if a == 0 {
        return Err(Error::invalid("metric inputs must be nonempty"));
    }
    Ok(())
}

/// Root mean squared difference between predictions and the true quantile.
pub fn rmse_vs_truth(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let ss: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Mean absolute difference between predictions and the true quantile.
pub fn mae_vs_truth(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// `|p_tau - tau|` where `p_tau` is the fraction of responses at or below
/// the prediction.
pub fn coverage_error(pred: &[f64], y: &[f64], tau: Tau) -> Result<f64> {
    check_lengths(pred.len(), y.len())?;
    let below = y.iter().zip(pred).filter(|(yi, pi)| yi <= pi).count();
    Ok((below as f64 / y.len() as f64 - tau.value()).abs())
}

/// Fraction of entries with `|value| <= zero_tol`.
pub fn sparsity(coeffs: &[f64], zero_tol: f64) -> Result<f64> {
    if coeffs.is_empty() {
        return Err(Error::invalid("sparsity needs a nonempty vector"));
    }
    let zeros = coeffs.iter().filter(|c| c.abs() <= zero_tol).count();
    Ok(zeros as f64 / coeffs.len() as f64)
}

/// Classification of the training points against the insensitive tube.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeStats {
    /// Points strictly above the tube (m1).
    pub n_above: usize,
    /// Points strictly below the tube (m2).
    pub n_below: usize,
    pub n_on_boundary: usize,
    pub n_sv: usize,
    pub frac_errors: f64,
    pub frac_sv: f64,
    /// `m1 / m2`, `+inf` when `m2 = 0`.
    pub ratio_above_below: f64,
    pub eps_width: f64,
}

/// Classify each training point by its residual against the asymmetric
/// band edges `(1-tau)*eps` above and `-tau*eps` below, using a boundary
/// tolerance of `1e-6 * (1 + max|y|)`.
pub fn tube_stats(model: &TrainedModel, data: &Dataset) -> Result<TubeStats> {
    let preds = model.predict(&data.x)?;
    let t = model.config.tau.value();
    let eps = model.eps_width;
    let y_scale = data.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let btol = 1e-6 * (1.0 + y_scale);

    let upper = (1.0 - t) * eps;
    let lower = -t * eps;
    let mut n_above = 0;
    let mut n_below = 0;
    let mut n_on_boundary = 0;
    for (yi, pi) in data.y.iter().zip(&preds) {
        let r = yi - pi;
        if r > upper + btol {
            n_above += 1;
        } else if r < lower - btol {
            n_below += 1;
        } else if (r - upper).abs() <= btol || (r - lower).abs() <= btol {
            n_on_boundary += 1;
        }
    }

    let l = data.len() as f64;
    let n_sv = model.sv_indices.len();
    Ok(TubeStats {
        n_above,
        n_below,
        n_on_boundary,
        n_sv,
        frac_errors: (n_above + n_below) as f64 / l,
        frac_sv: n_sv as f64 / l,
        ratio_above_below: if n_below == 0 {
            f64::INFINITY
        } else {
            n_above as f64 / n_below as f64
        },
        eps_width: eps,
    })
}
