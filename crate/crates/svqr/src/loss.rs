//! Pinball losses used for quantile-regression diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A quantile level constrained to the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Tau(f64);

impl Tau {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 && tau < 1.0 {
            Ok(Tau(tau))
        } else {
            Err(Error::invalid(format!("tau must lie in (0, 1), got {tau}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - tau`, the complementary weight.
    #[inline]
    pub fn co(self) -> f64 {
        1.0 - self.0
    }
}

impl TryFrom<f64> for Tau {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Tau::new(v)
    }
}

impl From<Tau> for f64 {
    fn from(t: Tau) -> f64 {
        t.0
    }
}

/// Pinball loss: `tau * u` for `u >= 0`, `(tau - 1) * u` otherwise.
#[inline]
pub fn pinball_loss(tau: Tau, u: f64) -> f64 {
    if u >= 0.0 {
        tau.value() * u
    } else {
        (tau.value() - 1.0) * u
    }
}

/// Pinball loss with an asymmetric insensitive band of total width `eps`.
///
/// Zero exactly on `-tau*eps <= u <= (1-tau)*eps` (closed band), slope `tau`
/// above, slope `-(1-tau)` below. Reduces to [`pinball_loss`] at `eps = 0`.
pub fn asym_eps_pinball_loss(tau: Tau, eps: f64, u: f64) -> Result<f64> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::invalid(format!(
            "insensitive width eps must be nonnegative, got {eps}"
        )));
    }
    Ok(asym_eps_pinball_unchecked(tau, eps, u))
}

#[inline]
pub(crate) fn asym_eps_pinball_unchecked(tau: Tau, eps: f64, u: f64) -> f64 {
    let t = tau.value();
    let below = -(1.0 - t) * (u + t * eps);
    let above = t * (u - (1.0 - t) * eps);
    below.max(0.0).max(above)
}

/// Sum of [`asym_eps_pinball_loss`] over a residual vector.
pub fn empirical_risk(tau: Tau, eps: f64, residuals: &[f64]) -> Result<f64> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::invalid(format!(
            "insensitive width eps must be nonnegative, got {eps}"
        )));
    }
    Ok(residuals
        .iter()
        .map(|&u| asym_eps_pinball_unchecked(tau, eps, u))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau(v: f64) -> Tau {
        Tau::new(v).unwrap()
    }

    #[test]
    fn tau_bounds() {
        assert!(Tau::new(0.0).is_err());
        assert!(Tau::new(1.0).is_err());
        assert!(Tau::new(0.5).is_ok());
    }

    #[test]
    fn pinball_direct_values() {
        assert_eq!(pinball_loss(tau(0.5), 2.0), 1.0);
        assert_eq!(pinball_loss(tau(0.3), 0.0), 0.0);
        assert!((pinball_loss(tau(0.2), -1.0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn asym_band_examples() {
        let t = tau(0.2);
        assert_eq!(asym_eps_pinball_loss(t, 1.0, 0.5).unwrap(), 0.0);
        assert!((asym_eps_pinball_loss(t, 1.0, 1.0).unwrap() - 0.04).abs() < 1e-15);
        assert!((asym_eps_pinball_loss(t, 1.0, -0.5).unwrap() - 0.24).abs() < 1e-15);
    }

    #[test]
    fn negative_eps_is_rejected() {
        assert!(asym_eps_pinball_loss(tau(0.2), -0.1, 0.0).is_err());
        assert!(empirical_risk(tau(0.2), -0.1, &[0.0]).is_err());
    }

    #[test]
    fn risk_sums_elementwise() {
        let t = tau(0.2);
        assert_eq!(empirical_risk(t, 1.0, &[0.1, -0.1, 0.5]).unwrap(), 0.0);
        let r = empirical_risk(t, 1.0, &[1.0, -0.5]).unwrap();
        assert!((r - 0.28).abs() < 1e-15);
    }
}
