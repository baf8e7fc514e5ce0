//! Convex quadratic programming over box constraints, one linear equality
//! and at most one linear inequality.
//!
//! ```text
//!     minimize    1/2 z' Q z + c' z
//!     subject to  eq_coeffs' z  = eq_rhs        (optional)
//!                 ineq_coeffs' z <= ineq_rhs    (optional)
//!                 lower <= z <= upper
//! ```
//!
//! `Q` is symmetric positive semidefinite (possibly singular). The solver
//! contract is the KKT certificate carried by [`QpSolution`], not a
//! particular algorithm: a solution is accepted only when its reconstructed
//! multipliers certify stationarity, feasibility and complementary
//! slackness to the requested tolerance.
//!
//! Internally a two-phase decomposition method does the work: the problem
//! is first solved with the inequality dropped; if the inequality is
//! violated it is reinstated as an equality (for a single inequality in a
//! convex program this loses nothing) and the problem re-solved. Each
//! equality-constrained subproblem is minimized by pairwise coordinate
//! updates; problems whose constraint geometry does not decompose into
//! pairwise moves fall back to projected gradient with Dykstra
//! projections.

mod projgrad;
mod refine;
mod smo;

use serde::{Deserialize, Serialize};

use crate::data::Mat;
use crate::error::{Error, Result};

/// A single linear constraint `coeffs' z (= or <=) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        LinearConstraint { coeffs, rhs }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        dot(&self.coeffs, z)
    }
}

/// The quadratic term of a [`QpProblem`].
///
/// Either an explicit dense symmetric matrix, or the structured form
/// `[[K, -K], [-K, K]]` that every SVQR dual shares, stored as the `l x l`
/// kernel Gram matrix `K` (the full `2l x 2l` matrix is never materialized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QuadTerm {
    Dense { dim: usize, data: Vec<f64> },
    KernelBlock { gram: Mat },
}

impl QuadTerm {
    /// Dense symmetric matrix from row-major data.
    pub fn dense(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::invalid(format!(
                "dense quadratic term needs {}x{} entries, got {}",
                dim,
                dim,
                data.len()
            )));
        }
        let scale = 1.0 + data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (data[i * dim + j] - data[j * dim + i]).abs() > 1e-9 * scale {
                    return Err(Error::invalid("quadratic term must be symmetric"));
                }
            }
        }
        Ok(QuadTerm::Dense { dim, data })
    }

    /// Structured `[[K, -K], [-K, K]]` term over a kernel Gram matrix.
    pub fn kernel_block(gram: Mat) -> Result<Self> {
        if gram.rows() != gram.cols() {
            return Err(Error::invalid("Gram matrix must be square"));
        }
        Ok(QuadTerm::KernelBlock { gram })
    }

    pub fn dim(&self) -> usize {
        match self {
            QuadTerm::Dense { dim, .. } => *dim,
            QuadTerm::KernelBlock { gram } => 2 * gram.rows(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            QuadTerm::Dense { dim, data } => data[i * dim + j],
            QuadTerm::KernelBlock { gram } => {
                let l = gram.rows();
                let sign = if (i < l) == (j < l) { 1.0 } else { -1.0 };
                sign * gram.get(i % l, j % l)
            }
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        match self {
            QuadTerm::Dense { dim, data } => data[i * dim + i],
            QuadTerm::KernelBlock { gram } => gram.get(i % gram.rows(), i % gram.rows()),
        }
    }

    /// `g += t * Q[:, i]` (column `i` equals row `i` by symmetry).
    pub fn axpy_col(&self, i: usize, t: f64, g: &mut [f64]) {
        if t == 0.0 {
            return;
        }
        match self {
            QuadTerm::Dense { dim, data } => {
                let row = &data[i * dim..(i + 1) * dim];
                for (gk, qk) in g.iter_mut().zip(row) {
                    *gk += t * qk;
                }
            }
            QuadTerm::KernelBlock { gram } => {
                let l = gram.rows();
                let row = gram.row(i % l);
                let s = if i < l { t } else { -t };
                let (top, bot) = g.split_at_mut(l);
                for ((gt, gb), k) in top.iter_mut().zip(bot.iter_mut()).zip(row) {
                    *gt += s * k;
                    *gb -= s * k;
                }
            }
        }
    }

    /// Copy row `i` of `Q` into `out`.
    pub fn row_into(&self, i: usize, out: &mut [f64]) {
        match self {
            QuadTerm::Dense { dim, data } => {
                out.copy_from_slice(&data[i * dim..(i + 1) * dim]);
            }
            QuadTerm::KernelBlock { gram } => {
                let l = gram.rows();
                let row = gram.row(i % l);
                let s = if i < l { 1.0 } else { -1.0 };
                for j in 0..l {
                    out[j] = s * row[j];
                    out[l + j] = -s * row[j];
                }
            }
        }
    }

    /// `out = Q z`.
    pub fn matvec(&self, z: &[f64], out: &mut [f64]) {
        match self {
            QuadTerm::Dense { dim, data } => {
                for i in 0..*dim {
                    out[i] = dot(&data[i * dim..(i + 1) * dim], z);
                }
            }
            QuadTerm::KernelBlock { gram } => {
                let l = gram.rows();
                for i in 0..l {
                    let row = gram.row(i);
                    let mut acc = 0.0;
                    for j in 0..l {
                        acc += row[j] * (z[j] - z[l + j]);
                    }
                    out[i] = acc;
                    out[l + i] = -acc;
                }
            }
        }
    }

    /// `z' Q z`.
    pub fn quad_form(&self, z: &[f64]) -> f64 {
        let mut qz = vec![0.0; self.dim()];
        self.matvec(z, &mut qz);
        dot(&qz, z)
    }
}

/// A box-and-linearly-constrained convex QP in standard form.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub quad: QuadTerm,
    pub linear: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub eq: Option<LinearConstraint>,
    pub ineq: Option<LinearConstraint>,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.quad.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        if m == 0 {
            return Err(Error::invalid("problem has no variables"));
        }
        for (name, len) in [
            ("linear", self.linear.len()),
            ("lower", self.lower.len()),
            ("upper", self.upper.len()),
        ] {
            if len != m {
                return Err(Error::invalid(format!(
                    "{name} term has length {len}, expected {m}"
                )));
            }
        }
        for c in self.eq.iter().chain(self.ineq.iter()) {
            if c.coeffs.len() != m {
                return Err(Error::invalid(format!(
                    "constraint has {} coefficients, expected {m}",
                    c.coeffs.len()
                )));
            }
        }
        for i in 0..m {
            // negated form also rejects NaN bounds
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(self.lower[i] <= self.upper[i]) {
                return Err(Error::invalid(format!(
                    "box bounds inverted at index {i}: [{}, {}]",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        Ok(())
    }

    /// Objective `1/2 z' Q z + c' z`.
    pub fn objective(&self, z: &[f64]) -> f64 {
        0.5 * self.quad.quad_form(z) + dot(&self.linear, z)
    }
}

/// A solved QP together with its optimality certificate.
///
/// Sign convention for the multipliers: at the solution,
/// `Qz + c + eq_multiplier * eq_coeffs + ineq_multiplier * ineq_coeffs`
/// is nonnegative on coordinates at their lower bound, nonpositive at the
/// upper bound and zero on free coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub eq_multiplier: f64,
    /// Multiplier of the inequality constraint, always nonnegative.
    pub ineq_multiplier: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BoundStatus {
    Fixed,
    Lower,
    Upper,
    Interior,
}

pub(crate) fn bound_status(z: f64, lo: f64, up: f64) -> BoundStatus {
    let tol = 1e-10 * (1.0 + lo.abs() + up.abs());
    if up - lo <= 2.0 * tol {
        BoundStatus::Fixed
    } else if z - lo <= tol {
        BoundStatus::Lower
    } else if up - z <= tol {
        BoundStatus::Upper
    } else {
        BoundStatus::Interior
    }
}

/// Solve the QP and certify the result.
///
/// On success the returned solution satisfies `kkt_residual <= tol`. If the
/// iteration budget runs out first, a [`Error::NonConvergence`] carrying
/// the best iterate is returned. Deterministic: identical inputs produce
/// identical outputs.
pub fn solve_qp(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    problem.validate()?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid(format!("solver tolerance must be positive, got {tol}")));
    }

    // Phase A: inequality dropped.
    let eqs: Vec<&LinearConstraint> = problem.eq.iter().collect();
    let mut state = solve_over_equalities(problem, &eqs, tol, max_iter)?;

    // Phase B: if the inequality is violated it must be active at the
    // optimum; reinstate it as an equality and re-solve.
    if let Some(ineq) = &problem.ineq {
        let viol = ineq.value(&state.z) - ineq.rhs;
        if viol > 1e-12 * (1.0 + ineq.rhs.abs()) {
            let mut both: Vec<&LinearConstraint> = problem.eq.iter().collect();
            both.push(ineq);
            let phase_a_iters = state.iterations;
            state = solve_over_equalities(problem, &both, tol, max_iter)?;
            state.iterations += phase_a_iters;
        }
    }

    finalize(problem, state.z, state.iterations, tol, max_iter)
}

pub(crate) struct SolveState {
    pub z: Vec<f64>,
    pub iterations: usize,
}

/// Minimize over the box intersected with the given constraints, all
/// treated as equalities. Does not certify; `finalize` does that.
fn solve_over_equalities(
    problem: &QpProblem,
    eqs: &[&LinearConstraint],
    tol: f64,
    max_iter: usize,
) -> Result<SolveState> {
    match smo::classify(problem.dim(), eqs) {
        Some(info) => {
            let z0 = feasible_init(problem, eqs, &info)?;
            Ok(smo::minimize(problem, eqs, &info, z0, tol, max_iter))
        }
        None => {
            let z0 = projgrad::project_feasible(problem, eqs, &vec![0.0; problem.dim()])?;
            Ok(projgrad::minimize(problem, eqs, z0, tol, max_iter))
        }
    }
}

/// Greedy construction of a feasible point for box + equalities using the
/// pairwise-move class structure.
fn feasible_init(
    problem: &QpProblem,
    eqs: &[&LinearConstraint],
    info: &smo::ClassInfo,
) -> Result<Vec<f64>> {
    let m = problem.dim();
    let mut z: Vec<f64> = (0..m)
        .map(|i| 0.0f64.clamp(problem.lower[i], problem.upper[i]))
        .collect();
    if eqs.is_empty() {
        return Ok(z);
    }

    // Required weighted sum per class: solve sum_c u_c * s_c = rhs.
    let targets = info.class_deficits(eqs, &z)?;

    for (c, target) in targets.iter().enumerate() {
        let mut deficit = *target;
        for _pass in 0..3 {
            if deficit.abs() <= 1e-13 * (1.0 + target.abs()) {
                break;
            }
            for (i, zi) in z.iter_mut().enumerate().take(m) {
                if info.class_of[i] != c {
                    continue;
                }
                let s = info.scale[i];
                let want = deficit / s;
                let step = want.clamp(problem.lower[i] - *zi, problem.upper[i] - *zi);
                *zi += step;
                deficit -= s * step;
            }
        }
        if deficit.abs() > 1e-9 * (1.0 + target.abs()) {
            return Err(Error::Infeasible(format!(
                "equality constraints unreachable within box (class {c} misses target by {deficit:.3e})"
            )));
        }
    }
    Ok(z)
}

/// Compute multipliers, measure the KKT certificate and package the
/// solution; short projected-gradient polish if the certificate misses.
fn finalize(
    problem: &QpProblem,
    z: Vec<f64>,
    mut iterations: usize,
    tol: f64,
    max_iter: usize,
) -> Result<QpSolution> {
    let m = problem.dim();
    let mut g = vec![0.0; m];
    let evaluate = |z: &[f64], g: &mut Vec<f64>| -> (f64, f64, f64) {
        problem.quad.matvec(z, g);
        for (gi, ci) in g.iter_mut().zip(&problem.linear) {
            *gi += ci;
        }
        let (mu, eta) = recover_multipliers(problem, z, g);
        (mu, eta, kkt_certificate(problem, z, g, mu, eta))
    };

    let (mu, eta, cert) = evaluate(&z, &mut g);
    let mut best = (z, mu, eta, cert);

    // Exact refinement of the identified active set closes the gap the
    // iterative phases leave; a short polish pass feeds it if needed.
    if best.3 > tol {
        let modes: &[bool] = if problem.ineq.is_some() {
            &[true, false]
        } else {
            &[false]
        };
        for &mode in modes {
            if let Some(refined) = refine::refine_active_set(problem, &best.0, mode) {
                let (rmu, reta, rcert) = evaluate(&refined, &mut g);
                if rcert < best.3 {
                    best = (refined, rmu, reta, rcert);
                }
            }
        }
    }
    if best.3 > tol {
        let budget = max_iter.min(2_000);
        let polished = projgrad::polish(problem, best.0.clone(), tol, budget);
        iterations += polished.iterations;
        let (pmu, peta, pcert) = evaluate(&polished.z, &mut g);
        if pcert < best.3 {
            best = (polished.z, pmu, peta, pcert);
        }
        if best.3 > tol {
            let tight = problem
                .ineq
                .as_ref()
                .is_some_and(|c| c.rhs - c.value(&best.0) <= 1e-8 * (1.0 + c.rhs.abs()));
            if let Some(refined) = refine::refine_active_set(problem, &best.0, tight) {
                let (rmu, reta, rcert) = evaluate(&refined, &mut g);
                if rcert < best.3 {
                    best = (refined, rmu, reta, rcert);
                }
            }
        }
    }

    let (z, mu, eta, cert) = best;
    let solution = QpSolution {
        objective: problem.objective(&z),
        z,
        eq_multiplier: mu,
        ineq_multiplier: eta,
        kkt_residual: cert,
        iterations,
    };
    if cert <= tol {
        Ok(solution)
    } else {
        Err(Error::NonConvergence {
            iterations,
            residual: cert,
            best: Box::new(solution),
        })
    }
}

/// Reconstruct the equality and inequality multipliers that minimize the
/// stationarity violation, with the inequality multiplier kept >= 0.
pub(crate) fn recover_multipliers(problem: &QpProblem, z: &[f64], g: &[f64]) -> (f64, f64) {
    let eq = problem.eq.as_ref();
    let ineq = problem.ineq.as_ref();

    let ineq_active = match ineq {
        None => false,
        Some(c) => {
            let slack = c.rhs - c.value(z);
            slack <= 1e-8 * (1.0 + c.rhs.abs())
        }
    };

    match (eq, ineq_active) {
        (None, false) => (0.0, 0.0),
        (Some(e), false) => (best_single_multiplier(problem, z, g, &e.coeffs, None, 0.0), 0.0),
        (eq_opt, true) => {
            let b = &ineq.unwrap().coeffs;
            let eval = |eta: f64| -> (f64, f64) {
                let mu = match eq_opt {
                    Some(e) => best_single_multiplier(problem, z, g, &e.coeffs, Some(b), eta),
                    None => 0.0,
                };
                let v = stationarity_violation(problem, z, g, eq_opt.map(|e| &e.coeffs[..]), mu, Some(&b[..]), eta);
                (mu, v)
            };

            // V(eta) is convex; bracket the minimizer, then ternary search.
            let (mu0, v0) = eval(0.0);
            let mut best = (0.0, mu0, v0);
            let mut hi = 1.0f64;
            let mut prev = v0;
            loop {
                let (mu_h, v_h) = eval(hi);
                if v_h < best.2 {
                    best = (hi, mu_h, v_h);
                }
                if v_h > prev || hi > 1e17 {
                    break;
                }
                prev = v_h;
                hi *= 2.0;
            }
            let (mut lo_e, mut hi_e) = (0.0f64, hi);
            for _ in 0..200 {
                let m1 = lo_e + (hi_e - lo_e) / 3.0;
                let m2 = hi_e - (hi_e - lo_e) / 3.0;
                let (_, v1) = eval(m1);
                let (_, v2) = eval(m2);
                if v1 <= v2 {
                    hi_e = m2;
                } else {
                    lo_e = m1;
                }
            }
            let eta = 0.5 * (lo_e + hi_e);
            let (mu, v) = eval(eta);
            if v < best.2 {
                best = (eta, mu, v);
            }
            (best.1, best.0)
        }
    }
}

/// Optimal single equality multiplier for fixed inequality multiplier
/// `eta`: the requirements on `mu` from every coordinate form an interval
/// `[lo, hi]`; the minimax choice is its midpoint (or the midpoint of the
/// conflict when empty).
fn best_single_multiplier(
    problem: &QpProblem,
    z: &[f64],
    g: &[f64],
    a: &[f64],
    b: Option<&Vec<f64>>,
    eta: f64,
) -> f64 {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..z.len() {
        let ai = a[i];
        if ai == 0.0 {
            continue;
        }
        let gi = g[i] + eta * b.map_or(0.0, |b| b[i]);
        let t = -gi / ai;
        match bound_status(z[i], problem.lower[i], problem.upper[i]) {
            BoundStatus::Fixed => {}
            BoundStatus::Interior => {
                lo = lo.max(t);
                hi = hi.min(t);
            }
            BoundStatus::Lower => {
                // need g_i + mu a_i >= 0
                if ai > 0.0 {
                    lo = lo.max(t);
                } else {
                    hi = hi.min(t);
                }
            }
            BoundStatus::Upper => {
                if ai > 0.0 {
                    hi = hi.min(t);
                } else {
                    lo = lo.max(t);
                }
            }
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (false, false) => 0.0,
        (true, false) => lo.max(0.0),
        (false, true) => hi.min(0.0),
        (true, true) => 0.5 * (lo + hi),
    }
}

fn stationarity_violation(
    problem: &QpProblem,
    z: &[f64],
    g: &[f64],
    a: Option<&[f64]>,
    mu: f64,
    b: Option<&[f64]>,
    eta: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..z.len() {
        let r = g[i] + mu * a.map_or(0.0, |a| a[i]) + eta * b.map_or(0.0, |b| b[i]);
        let v = match bound_status(z[i], problem.lower[i], problem.upper[i]) {
            BoundStatus::Fixed => 0.0,
            BoundStatus::Interior => r.abs(),
            BoundStatus::Lower => (-r).max(0.0),
            BoundStatus::Upper => r.max(0.0),
        };
        worst = worst.max(v);
    }
    worst
}

/// Full KKT residual: stationarity, primal feasibility and complementary
/// slackness, each with mild normalization.
pub(crate) fn kkt_certificate(
    problem: &QpProblem,
    z: &[f64],
    g: &[f64],
    mu: f64,
    eta: f64,
) -> f64 {
    let mut worst = stationarity_violation(
        problem,
        z,
        g,
        problem.eq.as_ref().map(|e| &e.coeffs[..]),
        mu,
        problem.ineq.as_ref().map(|c| &c.coeffs[..]),
        eta,
    );
    if let Some(e) = &problem.eq {
        worst = worst.max((e.value(z) - e.rhs).abs() / (1.0 + e.rhs.abs()));
    }
    if let Some(c) = &problem.ineq {
        let slack = c.rhs - c.value(z);
        worst = worst.max((-slack).max(0.0) / (1.0 + c.rhs.abs()));
        worst = worst.max(eta * slack.max(0.0) / (1.0 + c.rhs.abs()));
    }
    for (i, zi) in z.iter().enumerate() {
        let scale = 1.0 + problem.lower[i].abs() + problem.upper[i].abs();
        let bv = (problem.lower[i] - zi).max(zi - problem.upper[i]).max(0.0);
        worst = worst.max(bv / scale);
    }
    worst
}
