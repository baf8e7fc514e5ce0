//! Projected gradient with exact line search.
//!
//! Fallback for constraint geometries the pairwise decomposition cannot
//! cover, and the polishing pass used when a certificate narrowly misses
//! its tolerance. Projections onto the intersection of the box with the
//! hyperplanes/halfspace are computed by Dykstra's alternating method.

use super::{dot, kkt_certificate, recover_multipliers, LinearConstraint, QpProblem, SolveState};
use crate::error::{Error, Result};

enum SetKind {
    Hyperplane,
    Halfspace,
}

struct ProjSet<'a> {
    coeffs: &'a [f64],
    rhs: f64,
    norm2: f64,
    kind: SetKind,
}

/// Dykstra's algorithm over the box and the given linear sets. The box is
/// applied last in each sweep so the returned point respects it exactly.
fn dykstra(problem: &QpProblem, sets: &[ProjSet], w: &[f64]) -> Vec<f64> {
    let m = w.len();
    let mut x: Vec<f64> = w.to_vec();
    let mut increments: Vec<Vec<f64>> = vec![vec![0.0; m]; sets.len() + 1];

    for _sweep in 0..5_000 {
        let mut shift = 0.0f64;
        for (s, inc) in sets.iter().zip(increments.iter_mut()) {
            // y = P_s(x + inc); inc = x + inc - y; x = y
            let mut moved = 0.0;
            for k in 0..m {
                x[k] += inc[k];
            }
            let val = dot(s.coeffs, &x) - s.rhs;
            let step = match s.kind {
                SetKind::Hyperplane => val / s.norm2,
                SetKind::Halfspace => (val / s.norm2).max(0.0),
            };
            for k in 0..m {
                let y = x[k] - step * s.coeffs[k];
                inc[k] = x[k] - y;
                moved = f64::max(moved, (inc[k]).abs());
                x[k] = y;
            }
            shift = shift.max(step.abs() * s.norm2.sqrt());
            let _ = moved;
        }
        // box, last
        let inc = increments.last_mut().unwrap();
        let mut box_shift = 0.0f64;
        for k in 0..m {
            let before = x[k] + inc[k];
            let y = before.clamp(problem.lower[k], problem.upper[k]);
            inc[k] = before - y;
            box_shift = box_shift.max((x[k] - y).abs());
            x[k] = y;
        }
        shift = shift.max(box_shift);
        if shift <= 1e-14 * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            break;
        }
    }
    x
}

fn build_sets<'a>(
    eqs: &[&'a LinearConstraint],
    halfspace: Option<&'a LinearConstraint>,
) -> Vec<ProjSet<'a>> {
    let mut sets: Vec<ProjSet> = eqs
        .iter()
        .map(|e| ProjSet {
            coeffs: &e.coeffs,
            rhs: e.rhs,
            norm2: dot(&e.coeffs, &e.coeffs),
            kind: SetKind::Hyperplane,
        })
        .collect();
    if let Some(c) = halfspace {
        sets.push(ProjSet {
            coeffs: &c.coeffs,
            rhs: c.rhs,
            norm2: dot(&c.coeffs, &c.coeffs),
            kind: SetKind::Halfspace,
        });
    }
    sets.retain(|s| s.norm2 > 0.0);
    sets
}

/// Project `w` onto the feasible set of box + equalities, verifying the
/// result. Used to build starting points for irregular geometries.
pub(crate) fn project_feasible(
    problem: &QpProblem,
    eqs: &[&LinearConstraint],
    w: &[f64],
) -> Result<Vec<f64>> {
    let sets = build_sets(eqs, None);
    let z = dykstra(problem, &sets, w);
    for e in eqs {
        if (e.value(&z) - e.rhs).abs() > 1e-7 * (1.0 + e.rhs.abs()) {
            return Err(Error::Infeasible(
                "projection onto box and equalities did not converge; the feasible set is likely empty".into(),
            ));
        }
    }
    Ok(z)
}

/// Minimize over box + equalities (all hyperplanes) by projected gradient
/// with exact line search along the projected direction.
pub(crate) fn minimize(
    problem: &QpProblem,
    eqs: &[&LinearConstraint],
    z0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> SolveState {
    run(problem, build_sets(eqs, None), z0, tol, max_iter)
}

/// Polish on the full problem: equalities as hyperplanes, the inequality
/// as a halfspace.
pub(crate) fn polish(problem: &QpProblem, z0: Vec<f64>, tol: f64, max_iter: usize) -> SolveState {
    let eqs: Vec<&LinearConstraint> = problem.eq.iter().collect();
    let sets = build_sets(&eqs, problem.ineq.as_ref());
    run(problem, sets, z0, tol, max_iter)
}

fn run(
    problem: &QpProblem,
    sets: Vec<ProjSet>,
    z0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> SolveState {
    let m = problem.dim();
    let mut z = dykstra(problem, &sets, &z0);
    let mut g = vec![0.0; m];
    let mut qd = vec![0.0; m];
    let mut iterations = 0usize;

    let diag_max = (0..m).fold(0.0f64, |a, i| a.max(problem.quad.diag(i).abs()));
    let step0 = 1.0 / diag_max.max(1e-12);

    while iterations < max_iter {
        problem.quad.matvec(&z, &mut g);
        for (gi, ci) in g.iter_mut().zip(&problem.linear) {
            *gi += ci;
        }
        let (mu, eta) = recover_multipliers(problem, &z, &g);
        if kkt_certificate(problem, &z, &g, mu, eta) <= 0.9 * tol {
            break;
        }

        let w: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step0 * gi).collect();
        let zp = dykstra(problem, &sets, &w);
        let d: Vec<f64> = zp.iter().zip(&z).map(|(a, b)| a - b).collect();
        let gd = dot(&g, &d);
        if gd >= -1e-18 {
            break; // no descent available along the projected direction
        }
        problem.quad.matvec(&d, &mut qd);
        let dqd = dot(&d, &qd);
        let t = if dqd > 0.0 {
            (-gd / dqd).clamp(0.0, 1.0)
        } else {
            1.0
        };
        for k in 0..m {
            z[k] += t * d[k];
        }
        iterations += 1;
    }

    SolveState { z, iterations }
}
