//! One-shot active-set refinement.
//!
//! Iterative phases identify the active set long before they polish the
//! last digits out of the free variables. Once an iterate is close, fixing
//! the apparent active set and solving the reduced KKT system exactly
//! jumps straight to the face-optimal point. The result is only adopted
//! when it is feasible and certifies better than the input.

use super::{bound_status, BoundStatus, LinearConstraint, QpProblem};

const MAX_FREE: usize = 768;

/// Refine `z` by solving the equality-constrained KKT system induced by
/// its active bounds. `ineq_active` pins the inequality to its boundary.
pub(crate) fn refine_active_set(
    problem: &QpProblem,
    z: &[f64],
    ineq_active: bool,
) -> Option<Vec<f64>> {
    let m = problem.dim();
    let mut fixed = z.to_vec();
    let mut free: Vec<usize> = Vec::new();
    for i in 0..m {
        match bound_status(z[i], problem.lower[i], problem.upper[i]) {
            BoundStatus::Interior => free.push(i),
            BoundStatus::Lower => fixed[i] = problem.lower[i],
            BoundStatus::Upper => fixed[i] = problem.upper[i],
            BoundStatus::Fixed => fixed[i] = problem.lower[i],
        }
    }
    let f = free.len();
    if f == 0 || f > MAX_FREE {
        return None;
    }

    let mut rows: Vec<&LinearConstraint> = problem.eq.iter().collect();
    if ineq_active {
        rows.push(problem.ineq.as_ref()?);
    }
    let k = rows.len();
    let n = f + k;

    // KKT matrix [[Q_FF, A_F'], [A_F, 0]] and right-hand side.
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    let mut row = vec![0.0; m];
    for (fi, &i) in free.iter().enumerate() {
        problem.quad.row_into(i, &mut row);
        let mut rhs = -problem.linear[i];
        for j in 0..m {
            if bound_status(z[j], problem.lower[j], problem.upper[j]) != BoundStatus::Interior {
                rhs -= row[j] * fixed[j];
            }
        }
        b[fi] = rhs;
        for (fj, &j) in free.iter().enumerate() {
            a[fi * n + fj] = row[j];
        }
        for (ci, c) in rows.iter().enumerate() {
            a[fi * n + (f + ci)] = c.coeffs[i];
            a[(f + ci) * n + fi] = c.coeffs[i];
        }
    }
    for (ci, c) in rows.iter().enumerate() {
        let mut rhs = c.rhs;
        for j in 0..m {
            if bound_status(z[j], problem.lower[j], problem.upper[j]) != BoundStatus::Interior {
                rhs -= c.coeffs[j] * fixed[j];
            }
        }
        b[f + ci] = rhs;
    }

    let x = solve_dense(&mut a, &mut b, n)?;

    let mut out = fixed;
    for (fi, &i) in free.iter().enumerate() {
        let v = x[fi];
        if v < problem.lower[i] - 1e-12 || v > problem.upper[i] + 1e-12 {
            return None; // wrong active-set guess
        }
        out[i] = v.clamp(problem.lower[i], problem.upper[i]);
    }
    if let Some(c) = &problem.ineq {
        if !ineq_active && c.value(&out) > c.rhs + 1e-10 * (1.0 + c.rhs.abs()) {
            return None;
        }
    }
    Some(out)
}

/// Gaussian elimination with partial pivoting; `None` on singularity.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in (col + 1)..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-13 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in (col + 1)..n {
            let factor = a[r * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= factor * a[col * n + k];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col * n + k] * x[k];
        }
        x[col] = acc / a[col * n + col];
    }
    Some(x)
}
