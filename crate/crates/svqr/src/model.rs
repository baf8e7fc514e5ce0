//! The three quantile-regression models: assemble and solve their duals,
//! recover the insensitive-tube width and bias from boundary support
//! vectors, and predict quantile values.
//!
//! All three models share one dual shape over stacked variables
//! `z = (alpha; beta)` with quadratic term `[[K, -K], [-K, K]]`:
//!
//! * `NuSVQR` trades the tube width off automatically via `nu`; its dual
//!   carries the extra budget inequality and box caps `C*tau/l`,
//!   `C*(1-tau)/l`. The tube width `eps` is recovered from the solution.
//! * `EpsSVQR` fixes `eps` up front; box caps are `C*tau`, `C*(1-tau)`.
//! * `StandardSVQR` is `EpsSVQR` with `eps = 0`, which is exactly the
//!   Wolfe dual of the plain pinball-loss model.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Mat};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::loss::Tau;
use crate::qp::{solve_qp, LinearConstraint, QpProblem, QuadTerm};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Standard,
    Eps,
    Nu,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Standard => write!(f, "standard"),
            ModelKind::Eps => write!(f, "eps"),
            ModelKind::Nu => write!(f, "nu"),
        }
    }
}

/// Everything needed to fit one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub model: ModelKind,
    pub tau: Tau,
    /// Trade-off parameter C > 0. Note the scale difference between model
    /// families: the nu-model boxes are `[0, C*tau/l]` while the eps-model
    /// boxes are `[0, C*tau]`, so a nu-model `C` corresponds to an
    /// eps-model `C/l`.
    pub c: f64,
    pub nu: Option<f64>,
    pub eps: Option<f64>,
    pub kernel: KernelSpec,
    pub tol: f64,
    pub max_iter: usize,
}

impl FitConfig {
    pub fn nu_svqr(tau: Tau, c: f64, nu: f64, kernel: KernelSpec) -> Self {
        FitConfig {
            model: ModelKind::Nu,
            tau,
            c,
            nu: Some(nu),
            eps: None,
            kernel,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn eps_svqr(tau: Tau, c: f64, eps: f64, kernel: KernelSpec) -> Self {
        FitConfig {
            model: ModelKind::Eps,
            tau,
            c,
            nu: None,
            eps: Some(eps),
            kernel,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn standard_svqr(tau: Tau, c: f64, kernel: KernelSpec) -> Self {
        FitConfig {
            model: ModelKind::Standard,
            tau,
            c,
            nu: None,
            eps: None,
            kernel,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_solver(mut self, tol: f64, max_iter: usize) -> Self {
        self.tol = tol;
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid(format!("solver tol must be positive, got {}", self.tol)));
        }
        match self.model {
            ModelKind::Nu => match self.nu {
                Some(nu) if nu.is_finite() && nu > 0.0 && nu <= 1.0 => Ok(()),
                other => Err(Error::invalid(format!(
                    "nu must lie in (0, 1] for the nu model, got {other:?}"
                ))),
            },
            ModelKind::Eps => match self.eps {
                Some(e) if e.is_finite() && e >= 0.0 => Ok(()),
                other => Err(Error::invalid(format!(
                    "eps must be nonnegative for the eps model, got {other:?}"
                ))),
            },
            ModelKind::Standard => Ok(()),
        }
    }

    /// The fixed insensitive width entering the dual's linear term:
    /// 0 for both the standard model and the (recovered-width) nu model.
    fn dual_eps(&self) -> f64 {
        match self.model {
            ModelKind::Eps => self.eps.unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Per-side box caps of the dual variables.
    pub fn box_caps(&self, l: usize) -> (f64, f64) {
        let t = self.tau.value();
        match self.model {
            ModelKind::Nu => (self.c * t / l as f64, self.c * (1.0 - t) / l as f64),
            _ => (self.c * t, self.c * (1.0 - t)),
        }
    }
}

/// Coefficient magnitude below which a dual coefficient counts as zero
/// when collecting support vectors.
pub fn sv_zero_tolerance(config: &FitConfig, l: usize) -> f64 {
    let (ca, cb) = config.box_caps(l);
    1e-8 * (ca + cb)
}

/// Dual of the nu model: budget inequality plus balance equality.
pub fn build_nu_dual(data: &Dataset, config: &FitConfig, gram: Mat) -> Result<QpProblem> {
    if config.model != ModelKind::Nu {
        return Err(Error::invalid("build_nu_dual requires the nu model"));
    }
    config.validate()?;
    let l = data.len();
    if gram.rows() != l || gram.cols() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: gram.rows(),
        });
    }
    let t = config.tau.value();
    let nu = config.nu.unwrap();
    let (cap_a, cap_b) = config.box_caps(l);

    let mut linear = Vec::with_capacity(2 * l);
    linear.extend(data.y.iter().map(|y| -y));
    linear.extend(data.y.iter().copied());

    let mut upper = vec![cap_a; l];
    upper.extend(std::iter::repeat_n(cap_b, l));

    let mut eq = vec![1.0; l];
    eq.extend(std::iter::repeat_n(-1.0, l));

    let mut ineq = vec![1.0 - t; l];
    ineq.extend(std::iter::repeat_n(t, l));

    Ok(QpProblem {
        quad: QuadTerm::kernel_block(gram)?,
        linear,
        lower: vec![0.0; 2 * l],
        upper,
        eq: Some(LinearConstraint::new(eq, 0.0)),
        ineq: Some(LinearConstraint::new(ineq, config.c * nu * t * (1.0 - t))),
    })
}

/// Dual shared by the eps and standard models (the latter with `eps = 0`).
pub fn build_eps_dual(data: &Dataset, config: &FitConfig, gram: Mat) -> Result<QpProblem> {
    if config.model == ModelKind::Nu {
        return Err(Error::invalid("build_eps_dual requires the eps or standard model"));
    }
    config.validate()?;
    let l = data.len();
    if gram.rows() != l || gram.cols() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: gram.rows(),
        });
    }
    let t = config.tau.value();
    let eps = config.dual_eps();
    let (cap_a, cap_b) = config.box_caps(l);

    let mut linear = Vec::with_capacity(2 * l);
    linear.extend(data.y.iter().map(|y| -y + (1.0 - t) * eps));
    linear.extend(data.y.iter().map(|y| y + t * eps));

    let mut upper = vec![cap_a; l];
    upper.extend(std::iter::repeat_n(cap_b, l));

    let mut eq = vec![1.0; l];
    eq.extend(std::iter::repeat_n(-1.0, l));

    Ok(QpProblem {
        quad: QuadTerm::kernel_block(gram)?,
        linear,
        lower: vec![0.0; 2 * l],
        upper,
        eq: Some(LinearConstraint::new(eq, 0.0)),
        ineq: None,
    })
}

/// Solver and recovery diagnostics attached to a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub eq_multiplier: f64,
    pub ineq_multiplier: f64,
    /// True when the tube width or bias came from a fallback path because
    /// no interior multipliers were available.
    pub recovery_degenerate: bool,
}

/// A fitted quantile-regression model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: FitConfig,
    /// Dual coefficients `alpha_i - beta_i`; the predictor weights.
    pub coeffs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub bias: f64,
    /// Recovered (nu model) or given (eps model) insensitive width.
    pub eps_width: f64,
    pub sv_indices: Vec<usize>,
    /// Indices with interior `alpha`: points on the upper tube boundary.
    pub boundary_upper: Vec<usize>,
    /// Indices with interior `beta`: points on the lower tube boundary.
    pub boundary_lower: Vec<usize>,
    pub train_x: Mat,
    pub diagnostics: FitDiagnostics,
}

/// Fit a model by solving its dual and recovering `eps` and `b`.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<TrainedModel> {
    config.validate()?;
    let l = data.len();
    if l < 2 {
        return Err(Error::invalid(format!(
            "training requires at least 2 points, got {l}"
        )));
    }

    let gram = config.kernel.gram(&data.x)?;
    let problem = match config.model {
        ModelKind::Nu => build_nu_dual(data, config, gram)?,
        _ => build_eps_dual(data, config, gram)?,
    };
    let mut solution = solve_qp(&problem, config.tol, config.max_iter)?;

    // Canonical representative: when the tube degenerates to zero width the
    // optimum is not unique and mass may sit on both sides of one index.
    // Shifting the common mass out preserves the coefficients, the
    // objective and feasibility, and restores alpha_i * beta_i = 0.
    for i in 0..l {
        let s = solution.z[i].min(solution.z[l + i]);
        if s > 0.0 {
            solution.z[i] -= s;
            solution.z[l + i] -= s;
        }
    }

    let alpha = solution.z[..l].to_vec();
    let beta = solution.z[l..].to_vec();
    let coeffs: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| a - b).collect();

    // Bias-free predictions at the training points: top half of Q z.
    let mut qz = vec![0.0; 2 * l];
    problem.quad.matvec(&solution.z, &mut qz);
    let f_tilde = &qz[..l];

    let (cap_a, cap_b) = config.box_caps(l);
    let (eps_width, eps_degenerate) = match config.model {
        ModelKind::Nu => recover_epsilon(&data.y, f_tilde, &alpha, &beta, cap_a, cap_b),
        ModelKind::Eps => (config.eps.unwrap_or(0.0), false),
        ModelKind::Standard => (0.0, false),
    };
    let (bias, bias_degenerate) = recover_bias(
        &data.y, f_tilde, &alpha, &beta, cap_a, cap_b, config.tau, eps_width,
    );

    let sv_tol = sv_zero_tolerance(config, l);
    let sv_indices: Vec<usize> = (0..l).filter(|&i| coeffs[i].abs() > sv_tol).collect();
    let boundary_upper = interior_indices(&alpha, cap_a);
    let boundary_lower = interior_indices(&beta, cap_b);

    Ok(TrainedModel {
        config: *config,
        coeffs,
        alpha,
        beta,
        bias,
        eps_width,
        sv_indices,
        boundary_upper,
        boundary_lower,
        train_x: data.x.clone(),
        diagnostics: FitDiagnostics {
            objective: solution.objective,
            kkt_residual: solution.kkt_residual,
            iterations: solution.iterations,
            eq_multiplier: solution.eq_multiplier,
            ineq_multiplier: solution.ineq_multiplier,
            recovery_degenerate: eps_degenerate || bias_degenerate,
        },
    })
}

fn interior_indices(v: &[f64], cap: f64) -> Vec<usize> {
    let margin = 1e-7 * cap;
    (0..v.len())
        .filter(|&i| v[i] > margin && v[i] < cap - margin)
        .collect()
}

/// Recover the tube width from boundary support vectors without needing
/// the bias: average, over interior-multiplier points on each side, of the
/// bias-free upper and lower widths; their sum is the width. Falls back to
/// capped points (tightest residual) or to the tightest data-consistent
/// edge when a side has no interior or no support vectors; any fallback
/// sets the degeneracy flag. The result is clamped at zero.
pub fn recover_epsilon(
    y: &[f64],
    f_tilde: &[f64],
    alpha: &[f64],
    beta: &[f64],
    cap_a: f64,
    cap_b: f64,
) -> (f64, bool) {
    let upper = side_edge(y, f_tilde, alpha, cap_a, |y, f| y - f);
    let lower = side_edge(y, f_tilde, beta, cap_b, |y, f| f - y);
    let eps = (upper.0 + lower.0).max(0.0);
    (eps, upper.1 || lower.1)
}

/// Edge estimate for one side, in bias-free units. Returns
/// `(edge, degenerate)`.
fn side_edge(
    y: &[f64],
    f_tilde: &[f64],
    mult: &[f64],
    cap: f64,
    residual: impl Fn(f64, f64) -> f64,
) -> (f64, bool) {
    let margin = 1e-7 * cap;
    let mut interior_sum = 0.0;
    let mut interior_n = 0usize;
    let mut capped_min = f64::INFINITY;
    let mut any_max = f64::NEG_INFINITY;
    for i in 0..y.len() {
        let r = residual(y[i], f_tilde[i]);
        any_max = any_max.max(r);
        if mult[i] > margin && mult[i] < cap - margin {
            interior_sum += r;
            interior_n += 1;
        } else if mult[i] >= cap - margin {
            capped_min = capped_min.min(r);
        }
    }
    if interior_n > 0 {
        (interior_sum / interior_n as f64, false)
    } else if capped_min.is_finite() {
        (capped_min, true)
    } else {
        // No support vectors on this side: every point lies strictly
        // inside; the tightest consistent edge touches the extreme point.
        (any_max, true)
    }
}

/// Recover the bias: pooled mean over boundary (interior-multiplier)
/// points of the edge-shifted residuals. Falls back to bracketing by
/// capped points, and finally to the empirical `tau`-quantile of the
/// bias-free residuals (the pinball minimizer).
#[allow(clippy::too_many_arguments)]
pub fn recover_bias(
    y: &[f64],
    f_tilde: &[f64],
    alpha: &[f64],
    beta: &[f64],
    cap_a: f64,
    cap_b: f64,
    tau: Tau,
    eps: f64,
) -> (f64, bool) {
    let t = tau.value();
    let (margin_a, margin_b) = (1e-7 * cap_a, 1e-7 * cap_b);
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut upper_cap_min = f64::INFINITY; // b <= y - f~ - (1-tau)eps at capped alpha
    let mut lower_cap_max = f64::NEG_INFINITY; // b >= y - f~ + tau*eps at capped beta
    for i in 0..y.len() {
        let u = y[i] - f_tilde[i];
        if alpha[i] > margin_a && alpha[i] < cap_a - margin_a {
            sum += u - (1.0 - t) * eps;
            n += 1;
        } else if alpha[i] >= cap_a - margin_a {
            upper_cap_min = upper_cap_min.min(u - (1.0 - t) * eps);
        }
        if beta[i] > margin_b && beta[i] < cap_b - margin_b {
            sum += u + t * eps;
            n += 1;
        } else if beta[i] >= cap_b - margin_b {
            lower_cap_max = lower_cap_max.max(u + t * eps);
        }
    }
    if n > 0 {
        return (sum / n as f64, false);
    }
    match (lower_cap_max.is_finite(), upper_cap_min.is_finite()) {
        (true, true) => (0.5 * (lower_cap_max + upper_cap_min), true),
        (true, false) => (lower_cap_max, true),
        (false, true) => (upper_cap_min, true),
        (false, false) => {
            let mut resid: Vec<f64> = y.iter().zip(f_tilde).map(|(y, f)| y - f).collect();
            resid.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let l = resid.len();
            let idx = ((t * l as f64).ceil() as usize).max(1) - 1;
            (resid[idx.min(l - 1)], true)
        }
    }
}

impl TrainedModel {
    /// Quantile estimates for the rows of `x`.
    pub fn predict(&self, x: &Mat) -> Result<Vec<f64>> {
        if x.cols() != self.train_x.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.train_x.cols(),
                got: x.cols(),
            });
        }
        self.config.kernel.validate()?;
        let mut out = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            out.push(self.predict_row(x.row(r)));
        }
        Ok(out)
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.bias;
        for i in 0..self.coeffs.len() {
            let w = self.coeffs[i];
            if w != 0.0 {
                acc += w * self.config.kernel.eval_raw(self.train_x.row(i), row);
            }
        }
        acc
    }

    /// Bias-free training-point predictions recomputed from the stored
    /// coefficients (used by duality diagnostics and tests).
    pub fn decision_values(&self, x: &Mat) -> Result<Vec<f64>> {
        let preds = self.predict(x)?;
        Ok(preds.into_iter().map(|p| p - self.bias).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            model: self.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::ModelIo(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::ModelIo(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelIo(format!(
                "unsupported model format '{}', expected '{MODEL_FORMAT}'",
                file.format
            )));
        }
        Ok(file.model)
    }
}

const MODEL_FORMAT: &str = "svqr-model/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    model: TrainedModel,
}
