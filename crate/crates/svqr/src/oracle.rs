//! Brute-force reference solvers for small QPs. Test support: compiled
//! only with the `oracle` feature and never used by the solver itself.

use nalgebra::{DMatrix, DVector};

use crate::qp::QpProblem;

/// Exhaustive active-set enumeration.
///
/// Every variable is assigned to one of {at lower bound, at upper bound,
/// free} and, when an inequality is present, the inequality to one of
/// {slack, active}. For each assignment the reduced KKT system over the
/// free variables is solved, candidates are kept when the system is
/// consistent and the point is feasible, and the best objective wins. For
/// a convex QP the optimum is among the candidates, so the returned value
/// matches the true optimum regardless of how the solver under test works.
///
/// Cost grows as `3^m`; intended for `m <= 14` or so.
pub fn brute_force_optimum(problem: &QpProblem) -> Option<BruteForceResult> {
    let m = problem.dim();
    assert!(m <= 16, "enumeration oracle is exponential; keep m small");

    let q: Vec<f64> = (0..m * m)
        .map(|k| problem.quad.entry(k / m, k % m))
        .collect();

    let ineq_modes: &[bool] = if problem.ineq.is_some() {
        &[false, true]
    } else {
        &[false]
    };

    let mut best: Option<BruteForceResult> = None;
    let total = 3usize.pow(m as u32);
    let mut assignment = vec![0u8; m];

    for code in 0..total {
        let mut rem = code;
        for slot in assignment.iter_mut() {
            *slot = (rem % 3) as u8;
            rem /= 3;
        }
        for &ineq_active in ineq_modes {
            if let Some(candidate) = solve_assignment(problem, &q, &assignment, ineq_active) {
                let better = match &best {
                    None => true,
                    Some(b) => candidate.objective < b.objective,
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
    }
    best
}

pub struct BruteForceResult {
    pub z: Vec<f64>,
    pub objective: f64,
}

fn solve_assignment(
    problem: &QpProblem,
    q: &[f64],
    assignment: &[u8],
    ineq_active: bool,
) -> Option<BruteForceResult> {
    let m = assignment.len();
    let mut z = vec![0.0; m];
    let mut free: Vec<usize> = Vec::new();
    for i in 0..m {
        match assignment[i] {
            0 => z[i] = problem.lower[i],
            1 => z[i] = problem.upper[i],
            _ => free.push(i),
        }
    }

    let mut rows: Vec<&[f64]> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    if let Some(e) = &problem.eq {
        rows.push(&e.coeffs);
        rhs.push(e.rhs);
    }
    if ineq_active {
        let c = problem.ineq.as_ref().unwrap();
        rows.push(&c.coeffs);
        rhs.push(c.rhs);
    }
    let k = rows.len();
    let f = free.len();

    let feas_tol = 1e-9;

    if f == 0 {
        for (row, r) in rows.iter().zip(&rhs) {
            let v: f64 = (0..m).map(|i| row[i] * z[i]).sum();
            if (v - r).abs() > feas_tol * (1.0 + r.abs()) {
                return None;
            }
        }
    } else {
        // Reduced KKT system over (z_F, multipliers).
        let n = f + k;
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for (fi, &i) in free.iter().enumerate() {
            let mut r = -problem.linear[i];
            for j in 0..m {
                if assignment[j] == 2 {
                    continue;
                }
                r -= q[i * m + j] * z[j];
            }
            b[fi] = r;
            for (fj, &j) in free.iter().enumerate() {
                a[(fi, fj)] = q[i * m + j];
            }
            for (ci, row) in rows.iter().enumerate() {
                a[(fi, f + ci)] = row[i];
                a[(f + ci, fi)] = row[i];
            }
        }
        for (ci, (row, r)) in rows.iter().zip(&rhs).enumerate() {
            let mut v = *r;
            for j in 0..m {
                if assignment[j] == 2 {
                    continue;
                }
                v -= row[j] * z[j];
            }
            b[f + ci] = v;
        }

        let scale = 1.0 + b.amax();
        let solution = a
            .clone()
            .lu()
            .solve(&b)
            .filter(|x| (&a * x - &b).amax() <= 1e-8 * scale)
            .or_else(|| {
                let svd = a.clone().svd(true, true);
                svd.solve(&b, 1e-12)
                    .ok()
                    .filter(|x| (&a * x - &b).amax() <= 1e-8 * scale)
            })?;

        for (fi, &i) in free.iter().enumerate() {
            z[i] = solution[fi];
            if z[i] < problem.lower[i] - feas_tol || z[i] > problem.upper[i] + feas_tol {
                return None;
            }
        }
    }

    // Inequality feasibility in slack mode.
    if !ineq_active {
        if let Some(c) = &problem.ineq {
            let v = c.value(&z);
            if v > c.rhs + feas_tol * (1.0 + c.rhs.abs()) {
                return None;
            }
        }
    }
    // Equality feasibility (recheck; free-variable systems enforce it).
    if let Some(e) = &problem.eq {
        if (e.value(&z) - e.rhs).abs() > 1e-7 * (1.0 + e.rhs.abs()) {
            return None;
        }
    }

    Some(BruteForceResult {
        objective: problem.objective(&z),
        z,
    })
}
