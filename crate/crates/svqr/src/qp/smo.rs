//! Pairwise-coordinate decomposition for the equality-constrained
//! subproblems.
//!
//! With every constraint treated as an equality, a feasible direction must
//! keep each constraint's weighted sum unchanged. Indices are grouped into
//! classes by the direction of their constraint-coefficient vector; a move
//! transfers weight between two members of one class (or adjusts a single
//! coordinate whose coefficients are all zero). Each step solves the
//! two-variable subproblem exactly, so the objective never increases.
//!
//! Selection is greedy: the most violating class pair (largest gradient
//! gap) anchors the step, and the partner is refined by the second-order
//! gain estimate.

use super::{dot, LinearConstraint, QpProblem, SolveState};

pub(crate) const LONE: usize = usize::MAX;

/// Pairwise-move structure of a constraint set.
pub(crate) struct ClassInfo {
    /// Class id per index; `LONE` for indices with all-zero coefficients.
    pub class_of: Vec<usize>,
    /// Signed magnitude `s_i` such that the coefficient vector of index `i`
    /// equals `s_i * dirs[class_of[i]]`.
    pub scale: Vec<f64>,
    /// Canonical unit direction per class (length = number of constraints).
    pub dirs: Vec<Vec<f64>>,
}

/// Group indices by constraint-coefficient direction. Returns `None` when
/// the geometry does not decompose into pairwise moves (more independent
/// directions than constraints can absorb).
pub(crate) fn classify(m: usize, eqs: &[&LinearConstraint]) -> Option<ClassInfo> {
    let k = eqs.len();
    let mut class_of = vec![LONE; m];
    let mut scale = vec![0.0; m];
    let mut dirs: Vec<Vec<f64>> = Vec::new();

    for i in 0..m {
        let v: Vec<f64> = eqs.iter().map(|e| e.coeffs[i]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut u: Vec<f64> = v.iter().map(|x| x / norm).collect();
        let mut s = norm;
        if let Some(first) = u.iter().find(|x| **x != 0.0) {
            if *first < 0.0 {
                for x in &mut u {
                    *x = -*x;
                }
                s = -s;
            }
        }
        let id = dirs
            .iter()
            .position(|d| d.iter().zip(&u).all(|(a, b)| a.to_bits() == b.to_bits()))
            .unwrap_or_else(|| {
                dirs.push(u.clone());
                dirs.len() - 1
            });
        class_of[i] = id;
        scale[i] = s;
    }

    if dirs.len() > k {
        return None;
    }
    if dirs.len() == 2 {
        let cross = dirs[0][0] * dirs[1][1] - dirs[0][1] * dirs[1][0];
        if cross.abs() < 1e-12 {
            return None;
        }
    }
    Some(ClassInfo {
        class_of,
        scale,
        dirs,
    })
}

impl ClassInfo {
    /// Per-class weighted-sum deficit needed to satisfy the constraints
    /// starting from `z`. Errors when the constraints are inconsistent with
    /// the class geometry.
    pub(crate) fn class_deficits(
        &self,
        eqs: &[&LinearConstraint],
        z: &[f64],
    ) -> crate::error::Result<Vec<f64>> {
        use crate::error::Error;
        let k = eqs.len();
        let r: Vec<f64> = eqs.iter().map(|e| e.rhs - e.value(z)).collect();
        let rscale = 1.0 + eqs.iter().map(|e| e.rhs.abs()).fold(0.0, f64::max);
        match self.dirs.len() {
            0 => {
                if r.iter().any(|v| v.abs() > 1e-9 * rscale) {
                    return Err(Error::Infeasible(
                        "constraints have all-zero coefficients but nonzero residual".into(),
                    ));
                }
                Ok(Vec::new())
            }
            1 => {
                let u = &self.dirs[0];
                let proj = dot(u, &r);
                for j in 0..k {
                    if (r[j] - proj * u[j]).abs() > 1e-9 * rscale {
                        return Err(Error::Infeasible(
                            "constraint right-hand sides are inconsistent".into(),
                        ));
                    }
                }
                Ok(vec![proj])
            }
            2 => {
                let (u1, u2) = (&self.dirs[0], &self.dirs[1]);
                let det = u1[0] * u2[1] - u1[1] * u2[0];
                let s1 = (r[0] * u2[1] - r[1] * u2[0]) / det;
                let s2 = (u1[0] * r[1] - u1[1] * r[0]) / det;
                Ok(vec![s1, s2])
            }
            _ => unreachable!("classify admits at most two classes"),
        }
    }
}

enum Choice {
    Lone(usize),
    Pair { take: usize, give: usize },
}

pub(crate) fn minimize(
    problem: &QpProblem,
    _eqs: &[&LinearConstraint],
    info: &ClassInfo,
    z0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> SolveState {
    let m = problem.dim();
    let mut z = z0;
    let mut g = vec![0.0; m];
    refresh_gradient(problem, &z, &mut g);

    let smax = info.scale.iter().fold(0.0f64, |a, s| a.max(s.abs()));
    let gap_tol = 0.45 * tol / smax.max(1.0);
    let lone_tol = 0.45 * tol;
    let refresh_every = m.max(256);
    let mut row = vec![0.0; m];

    let mut iterations = 0usize;
    let mut tiny_steps = 0usize;

    while iterations < max_iter {
        if iterations > 0 && iterations.is_multiple_of(refresh_every) {
            refresh_gradient(problem, &z, &mut g);
        }
        let choice = match select(problem, info, &z, &g, gap_tol, lone_tol, &mut row) {
            Some(c) => c,
            None => break,
        };
        let step_size = match choice {
            Choice::Lone(i) => apply_lone(problem, &mut z, &mut g, i),
            Choice::Pair { take, give } => apply_pair(problem, info, &mut z, &mut g, take, give),
        };
        iterations += 1;
        if step_size <= 1e-15 {
            tiny_steps += 1;
            if tiny_steps > 64 {
                break;
            }
        } else {
            tiny_steps = 0;
        }
    }

    SolveState { z, iterations }
}

fn refresh_gradient(problem: &QpProblem, z: &[f64], g: &mut [f64]) {
    problem.quad.matvec(z, g);
    for (gi, ci) in g.iter_mut().zip(&problem.linear) {
        *gi += ci;
    }
}

#[allow(clippy::too_many_arguments)]
fn select(
    problem: &QpProblem,
    info: &ClassInfo,
    z: &[f64],
    g: &[f64],
    gap_tol: f64,
    lone_tol: f64,
    row: &mut [f64],
) -> Option<Choice> {
    let m = z.len();
    let nc = info.dirs.len();
    let mut best_lone: Option<(f64, usize)> = None;
    let mut take: Vec<Option<(f64, usize)>> = vec![None; nc];
    let mut give: Vec<Option<(f64, usize)>> = vec![None; nc];

    for i in 0..m {
        let (lo, up) = (problem.lower[i], problem.upper[i]);
        if lo == up {
            continue;
        }
        match info.class_of[i] {
            LONE => {
                let v = if g[i] > 0.0 && z[i] > lo {
                    g[i]
                } else if g[i] < 0.0 && z[i] < up {
                    -g[i]
                } else {
                    0.0
                };
                if v > best_lone.map_or(0.0, |(bv, _)| bv) {
                    best_lone = Some((v, i));
                }
            }
            c => {
                let s = info.scale[i];
                let f = g[i] / s;
                let can_take = if s > 0.0 { z[i] < up } else { z[i] > lo };
                let can_give = if s > 0.0 { z[i] > lo } else { z[i] < up };
                if can_take && take[c].is_none_or(|(fv, _)| f < fv) {
                    take[c] = Some((f, i));
                }
                if can_give && give[c].is_none_or(|(fv, _)| f > fv) {
                    give[c] = Some((f, i));
                }
            }
        }
    }

    let mut best_class: Option<(f64, usize)> = None;
    for c in 0..nc {
        if let (Some((ft, _)), Some((fg, _))) = (take[c], give[c]) {
            let v = fg - ft;
            if v > best_class.map_or(0.0, |(bv, _)| bv) {
                best_class = Some((v, c));
            }
        }
    }

    let lone_hit = best_lone.filter(|(v, _)| *v > lone_tol);
    let class_hit = best_class.filter(|(v, _)| *v > gap_tol);

    match (lone_hit, class_hit) {
        (None, None) => None,
        (Some((_, i)), None) => Some(Choice::Lone(i)),
        (lone, Some((cv, c))) => {
            // Compare in gradient-residual units; class gaps scale with s.
            let class_resid = cv * info.scale.iter().fold(0.0f64, |a, s| a.max(s.abs())).max(1.0);
            if let Some((lv, i)) = lone {
                if lv > class_resid {
                    return Some(Choice::Lone(i));
                }
            }
            let (fg, j) = give[c].unwrap();
            problem.quad.row_into(j, row);
            let sj = info.scale[j];
            let qjj = problem.quad.diag(j);
            let mut best: Option<(f64, usize)> = None;
            for i in 0..m {
                if info.class_of[i] != c || i == j {
                    continue;
                }
                let (lo, up) = (problem.lower[i], problem.upper[i]);
                if lo == up {
                    continue;
                }
                let s = info.scale[i];
                let can_take = if s > 0.0 { z[i] < up } else { z[i] > lo };
                if !can_take {
                    continue;
                }
                let d = fg - g[i] / s;
                if d <= 0.0 {
                    continue;
                }
                let qii = problem.quad.diag(i);
                let kappa = qii / (s * s) - 2.0 * row[i] / (s * sj) + qjj / (sj * sj);
                let kappa = kappa.max(1e-12 * (1.0 + qii.abs() + qjj.abs()));
                let gain = d * d / (2.0 * kappa);
                if gain > best.map_or(0.0, |(bg, _)| bg) {
                    best = Some((gain, i));
                }
            }
            best.map(|(_, i)| Choice::Pair { take: i, give: j })
        }
    }
}

/// Exact single-coordinate minimization. Returns the absolute step taken.
fn apply_lone(problem: &QpProblem, z: &mut [f64], g: &mut [f64], i: usize) -> f64 {
    let qii = problem.quad.diag(i);
    let (lo, up) = (problem.lower[i], problem.upper[i]);
    let t = if qii > 1e-300 {
        (-g[i] / qii).clamp(lo - z[i], up - z[i])
    } else if g[i] > 0.0 {
        lo - z[i]
    } else {
        up - z[i]
    };
    let new = (z[i] + t).clamp(lo, up);
    let dz = new - z[i];
    z[i] = new;
    problem.quad.axpy_col(i, dz, g);
    dz.abs()
}

/// Exact two-variable minimization along the feasible pair direction.
fn apply_pair(
    problem: &QpProblem,
    info: &ClassInfo,
    z: &mut [f64],
    g: &mut [f64],
    i: usize,
    j: usize,
) -> f64 {
    let (si, sj) = (info.scale[i], info.scale[j]);
    let phi = g[i] / si - g[j] / sj; // negative by selection
    let qii = problem.quad.diag(i);
    let qjj = problem.quad.diag(j);
    let qij = problem.quad.entry(i, j);
    let kappa = qii / (si * si) - 2.0 * qij / (si * sj) + qjj / (sj * sj);

    let cap_i = if si > 0.0 {
        (problem.upper[i] - z[i]) * si
    } else {
        (problem.lower[i] - z[i]) * si
    };
    let cap_j = if sj > 0.0 {
        (z[j] - problem.lower[j]) * sj
    } else {
        (z[j] - problem.upper[j]) * sj
    };

    let kappa_min = 1e-14 * (1.0 + qii.abs() + qjj.abs());
    let mut t = if kappa > kappa_min {
        -phi / kappa
    } else {
        f64::INFINITY
    };
    t = t.min(cap_i).min(cap_j);
    // negated form also bails on a NaN step
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(t > 0.0) {
        return 0.0;
    }

    let (old_i, old_j) = (z[i], z[j]);
    if t >= cap_i {
        z[i] = if si > 0.0 { problem.upper[i] } else { problem.lower[i] };
    } else {
        z[i] += t / si;
    }
    if t >= cap_j {
        z[j] = if sj > 0.0 { problem.lower[j] } else { problem.upper[j] };
    } else {
        z[j] -= t / sj;
    }
    let (dzi, dzj) = (z[i] - old_i, z[j] - old_j);
    problem.quad.axpy_col(i, dzi, g);
    problem.quad.axpy_col(j, dzj, g);
    dzi.abs().max(dzj.abs())
}
