//! Exact Euclidean projection onto a polyhedron.
//!
//! Minimizes squared distance to a reference point subject to linear
//! constraints and nonnegativity, by a primal active-set method. Every
//! equality-constrained subproblem reduces to a small symmetric linear
//! system solved in rational arithmetic, so the result is the exact
//! minimizer, not an approximation.

use num_traits::{Signed, Zero};

use crate::lp::{lp_solve, KernelError, LinearConstraint, LpStatus, Relation, Sense};
use crate::model::Rat;

/// The closest point to `reference` satisfying `constraints` and `x >= 0`
/// under the Euclidean norm. Fails when the region is empty.
pub fn min_sq_distance(
    reference: &[Rat],
    constraints: &[LinearConstraint],
) -> Result<Vec<Rat>, KernelError> {
    let n = reference.len();
    // a . x <= b rows; equalities kept separate and always active.
    let mut ineq: Vec<(Vec<Rat>, Rat)> = Vec::new();
    let mut eq: Vec<(Vec<Rat>, Rat)> = Vec::new();
    for (i, c) in constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(KernelError::ShapeMismatch { row: i, expected: n, got: c.coeffs.len() });
        }
        match c.relation {
            Relation::Le => ineq.push((c.coeffs.clone(), c.rhs.clone())),
            Relation::Ge => ineq.push((c.coeffs.iter().map(|a| -a).collect(), -&c.rhs)),
            Relation::Eq => eq.push((c.coeffs.clone(), c.rhs.clone())),
        }
    }
    for i in 0..n {
        let mut a = vec![Rat::zero(); n];
        a[i] = Rat::from_integer((-1).into());
        ineq.push((a, Rat::zero()));
    }

    let mut x = feasible_start(n, reference, constraints, &ineq, &eq)?;
    // Indices into `ineq` currently pinned to equality.
    let mut working: Vec<usize> = ineq
        .iter()
        .enumerate()
        .filter(|(_, (a, b))| dot(a, &x) == *b)
        .map(|(i, _)| i)
        .collect();

    let mut guard = 0usize;
    loop {
        guard += 1;
        assert!(guard < 20_000, "projection failed to terminate");
        let mut rows: Vec<&(Vec<Rat>, Rat)> = eq.iter().collect();
        rows.extend(working.iter().map(|&i| &ineq[i]));
        let (target, mu) = solve_pinned(reference, &rows)?;

        if target == x {
            // Multiplier sign rule: a pinned `<=` row helps only when its
            // multiplier pushes inward, which in this parametrization means
            // mu <= 0. A positive mu row blocks optimality, so release it.
            let release = working
                .iter()
                .enumerate()
                .filter(|(k, _)| mu[eq.len() + k].is_positive())
                .map(|(k, _)| k)
                .next();
            match release {
                Some(k) => {
                    working.remove(k);
                }
                None => return Ok(x),
            }
        } else {
            let step: Vec<Rat> = target.iter().zip(&x).map(|(t, c)| t - c).collect();
            let mut alpha = Rat::from_integer(1.into());
            let mut block: Option<usize> = None;
            for (i, (a, b)) in ineq.iter().enumerate() {
                if working.contains(&i) {
                    continue;
                }
                let along = dot(a, &step);
                if along.is_positive() {
                    let room = (b - dot(a, &x)) / along;
                    if room < alpha {
                        alpha = room;
                        block = Some(i);
                    }
                }
            }
            if !alpha.is_zero() {
                for (xi, s) in x.iter_mut().zip(&step) {
                    *xi += &alpha * s;
                }
            }
            if let Some(i) = block {
                working.push(i);
                working.sort_unstable();
            }
        }
    }
}

fn feasible_start(
    n: usize,
    reference: &[Rat],
    constraints: &[LinearConstraint],
    ineq: &[(Vec<Rat>, Rat)],
    eq: &[(Vec<Rat>, Rat)],
) -> Result<Vec<Rat>, KernelError> {
    let satisfied = reference.iter().all(|r| !r.is_negative())
        && ineq.iter().all(|(a, b)| dot(a, reference) <= *b)
        && eq.iter().all(|(a, b)| dot(a, reference) == *b);
    if satisfied {
        return Ok(reference.to_vec());
    }
    let zero_obj = vec![Rat::zero(); n];
    let sol = lp_solve(&zero_obj, Sense::Min, constraints)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.point),
        _ => Err(KernelError::InfeasibleRegion),
    }
}

/// Minimizer of squared distance to `reference` with every row in `rows`
/// held at equality, plus the multiplier vector.
///
/// Stationarity gives x = r + A^T mu with (A A^T) mu = b - A r; the system
/// is always consistent because the current iterate satisfies the rows.
fn solve_pinned(
    reference: &[Rat],
    rows: &[&(Vec<Rat>, Rat)],
) -> Result<(Vec<Rat>, Vec<Rat>), KernelError> {
    let k = rows.len();
    if k == 0 {
        return Ok((reference.to_vec(), Vec::new()));
    }
    let mut aug: Vec<Vec<Rat>> = Vec::with_capacity(k);
    for (ai, bi) in rows {
        let mut row: Vec<Rat> = rows.iter().map(|(aj, _)| dot(ai, aj)).collect();
        row.push(bi - dot(ai, reference));
        aug.push(row);
    }
    let mu = solve_symmetric(&mut aug, k)?;
    let mut x = reference.to_vec();
    for ((a, _), m) in rows.iter().zip(&mu) {
        if !m.is_zero() {
            for (xi, ai) in x.iter_mut().zip(a) {
                *xi += m * ai;
            }
        }
    }
    Ok((x, mu))
}

/// Gaussian elimination on the augmented system; dependent rows must be
/// consistent (guaranteed by construction) and free variables are set to
/// zero, picking one valid multiplier vector.
fn solve_symmetric(aug: &mut [Vec<Rat>], k: usize) -> Result<Vec<Rat>, KernelError> {
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; k];
    let mut next_row = 0;
    for col in 0..k {
        let Some(r) = (next_row..k).find(|&r| !aug[r][col].is_zero()) else {
            continue;
        };
        aug.swap(next_row, r);
        let inv = aug[next_row][col].recip();
        for v in aug[next_row].iter_mut() {
            *v *= &inv;
        }
        let prow = aug[next_row].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r != next_row && !row[col].is_zero() {
                let f = std::mem::replace(&mut row[col], Rat::zero());
                for (v, p) in row.iter_mut().zip(&prow) {
                    if !p.is_zero() {
                        *v -= &f * p;
                    }
                }
            }
        }
        pivot_of_col[col] = Some(next_row);
        next_row += 1;
    }
    for row in aug.iter().skip(next_row) {
        if !row[k].is_zero() {
            return Err(KernelError::ProjectionStalled);
        }
    }
    let mut mu = vec![Rat::zero(); k];
    for (col, pr) in pivot_of_col.iter().enumerate() {
        if let Some(r) = pr {
            mu[col] = aug[*r][k].clone();
        }
    }
    Ok(mu)
}

fn dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
