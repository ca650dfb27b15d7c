//! Exact linear programming over the nonnegative orthant.
//!
//! A dense two-phase primal simplex on arbitrary-precision rationals. Bland's
//! rule picks pivots, so the method terminates without any tolerance and the
//! returned vertex is exact. Problem sizes here are small (at most a few
//! dozen variables, a few hundred rows), which a dense tableau handles
//! comfortably.

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::model::Rat;

/// Variables are implicitly nonnegative; rows add further structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearConstraint {
    pub coeffs: Vec<Rat>,
    pub relation: Relation,
    pub rhs: Rat,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<Rat>, relation: Relation, rhs: Rat) -> Self {
        LinearConstraint { coeffs, relation, rhs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal vertex when status is `Optimal`, zeros otherwise.
    pub point: Vec<Rat>,
    /// Objective at `point` in the requested sense.
    pub objective: Rat,
}

pub const MAX_DIMENSION: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("problem has {dim} variables, kernel is limited to {limit}")]
    DimensionExceeded { dim: usize, limit: usize },
    #[error("constraint {row} has {got} coefficients, expected {expected}")]
    ShapeMismatch { row: usize, expected: usize, got: usize },
    #[error("constraint system is infeasible")]
    InfeasibleRegion,
    #[error("projection failed to converge (internal invariant broken)")]
    ProjectionStalled,
}

/// Solves max/min of `objective . x` subject to `constraints` and `x >= 0`.
pub fn lp_solve(
    objective: &[Rat],
    sense: Sense,
    constraints: &[LinearConstraint],
) -> Result<LpSolution, KernelError> {
    let n = objective.len();
    if n > MAX_DIMENSION {
        return Err(KernelError::DimensionExceeded { dim: n, limit: MAX_DIMENSION });
    }
    for (i, c) in constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(KernelError::ShapeMismatch { row: i, expected: n, got: c.coeffs.len() });
        }
    }
    let mut t = Tableau::build(n, constraints);
    if t.num_artificial > 0 {
        t.set_phase1_cost();
        t.pivot_to_optimum(true);
        if t.objective_value().is_positive() {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                point: vec![Rat::zero(); n],
                objective: Rat::zero(),
            });
        }
        t.evict_artificials();
    }
    let internal: Vec<Rat> = match sense {
        Sense::Min => objective.to_vec(),
        Sense::Max => objective.iter().map(|c| -c).collect(),
    };
    t.set_cost(&internal);
    if !t.pivot_to_optimum(false) {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            point: vec![Rat::zero(); n],
            objective: Rat::zero(),
        });
    }
    let point = t.extract(n);
    let objective = objective.iter().zip(&point).map(|(c, x)| c * x).sum();
    Ok(LpSolution { status: LpStatus::Optimal, point, objective })
}

/// Lexicographically smallest feasible point: minimizes coordinate 0, fixes
/// it, minimizes coordinate 1, and so on. `None` when the region is empty.
pub fn lex_min_point(
    n: usize,
    constraints: &[LinearConstraint],
) -> Result<Option<Vec<Rat>>, KernelError> {
    let mut cons = constraints.to_vec();
    let mut fixed = vec![Rat::zero(); n];
    for k in 0..n {
        let mut obj = vec![Rat::zero(); n];
        obj[k] = Rat::from_integer(1.into());
        let sol = lp_solve(&obj, Sense::Min, &cons)?;
        match sol.status {
            LpStatus::Infeasible => return Ok(None),
            LpStatus::Unbounded => unreachable!("coordinates are bounded below by zero"),
            LpStatus::Optimal => {}
        }
        fixed[k] = sol.objective.clone();
        let mut pin = vec![Rat::zero(); n];
        pin[k] = Rat::from_integer(1.into());
        cons.push(LinearConstraint::new(pin, Relation::Eq, sol.objective));
    }
    Ok(Some(fixed))
}

struct Tableau {
    /// rows[i] has `cols` entries; the last is the right-hand side.
    rows: Vec<Vec<Rat>>,
    cost: Vec<Rat>,
    basis: Vec<usize>,
    cols: usize,
    artificial_start: usize,
    num_artificial: usize,
}

impl Tableau {
    fn build(n: usize, constraints: &[LinearConstraint]) -> Tableau {
        let m = constraints.len();
        // One slack or surplus column per inequality, one artificial per
        // equality or surplus row (after normalizing rhs >= 0).
        let mut normalized: Vec<(Vec<Rat>, Relation, Rat)> = Vec::with_capacity(m);
        for c in constraints {
            if c.rhs.is_negative() {
                let rel = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                normalized.push((c.coeffs.iter().map(|a| -a).collect(), rel, -&c.rhs));
            } else {
                normalized.push((c.coeffs.clone(), c.relation, c.rhs.clone()));
            }
        }
        let num_slack = m;
        let num_artificial = normalized
            .iter()
            .filter(|(_, rel, _)| !matches!(rel, Relation::Le))
            .count();
        let artificial_start = n + num_slack;
        let cols = n + num_slack + num_artificial + 1;

        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut art = 0;
        for (i, (coeffs, rel, rhs)) in normalized.into_iter().enumerate() {
            let mut row = vec![Rat::zero(); cols];
            row[..n].clone_from_slice(&coeffs);
            match rel {
                Relation::Le => {
                    row[n + i] = Rat::from_integer(1.into());
                    basis.push(n + i);
                }
                Relation::Ge => {
                    row[n + i] = Rat::from_integer((-1).into());
                    row[artificial_start + art] = Rat::from_integer(1.into());
                    basis.push(artificial_start + art);
                    art += 1;
                }
                Relation::Eq => {
                    row[artificial_start + art] = Rat::from_integer(1.into());
                    basis.push(artificial_start + art);
                    art += 1;
                }
            }
            *row.last_mut().unwrap() = rhs;
            rows.push(row);
        }
        Tableau { rows, cost: vec![Rat::zero(); cols], basis, cols, artificial_start, num_artificial }
    }

    /// Reduced-cost row for min sum of artificials.
    fn set_phase1_cost(&mut self) {
        let mut c = vec![Rat::zero(); self.cols];
        for slot in &mut c[self.artificial_start..self.cols - 1] {
            *slot = Rat::from_integer(1.into());
        }
        self.price_out(c);
    }

    /// Reduced-cost row for the given structural objective (minimization).
    fn set_cost(&mut self, objective: &[Rat]) {
        let mut c = vec![Rat::zero(); self.cols];
        c[..objective.len()].clone_from_slice(objective);
        self.price_out(c);
    }

    fn price_out(&mut self, mut c: Vec<Rat>) {
        for (i, &b) in self.basis.iter().enumerate() {
            if !c[b].is_zero() {
                let factor = c[b].clone();
                for (slot, entry) in c.iter_mut().zip(&self.rows[i]) {
                    *slot -= &factor * entry;
                }
            }
        }
        self.cost = c;
    }

    fn objective_value(&self) -> Rat {
        -self.cost[self.cols - 1].clone()
    }

    /// Bland pivoting until no reduced cost is negative. Returns false on an
    /// unbounded direction.
    fn pivot_to_optimum(&mut self, allow_artificial: bool) -> bool {
        let limit = if allow_artificial { self.cols - 1 } else { self.artificial_start };
        let mut guard = 0usize;
        loop {
            guard += 1;
            assert!(guard < 200_000, "simplex failed to terminate");
            let Some(entering) = (0..limit).find(|&j| self.cost[j].is_negative()) else {
                return true;
            };
            let mut leaving: Option<usize> = None;
            let mut best_ratio: Option<Rat> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][entering];
                if a.is_positive() {
                    let ratio = &self.rows[i][self.cols - 1] / a;
                    let replace = match &best_ratio {
                        None => true,
                        Some(b) => {
                            ratio < *b
                                || (ratio == *b
                                    && self.basis[i] < self.basis[leaving.unwrap()])
                        }
                    };
                    if replace {
                        best_ratio = Some(ratio);
                        leaving = Some(i);
                    }
                }
            }
            let Some(r) = leaving else {
                return false;
            };
            self.pivot(r, entering);
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let inv = {
            let p = &self.rows[r][j];
            assert!(!p.is_zero());
            p.recip()
        };
        for v in self.rows[r].iter_mut() {
            *v *= &inv;
        }
        let pivot_row = self.rows[r].clone();
        // Subtracting factor * pivot_row over every column zeroes column j
        // as a side effect, since the pivot entry is 1.
        for i in 0..self.rows.len() {
            if i != r && !self.rows[i][j].is_zero() {
                let factor = self.rows[i][j].clone();
                for (v, p) in self.rows[i].iter_mut().zip(&pivot_row) {
                    if !p.is_zero() {
                        *v -= &factor * p;
                    }
                }
            }
        }
        if !self.cost[j].is_zero() {
            let factor = self.cost[j].clone();
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &factor * p;
                }
            }
        }
        self.basis[r] = j;
    }

    /// After a zero-value phase 1, swap surviving artificials out of the
    /// basis; rows that cannot pivot are redundant and get dropped.
    fn evict_artificials(&mut self) {
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] >= self.artificial_start {
                let col = (0..self.artificial_start).find(|&j| !self.rows[i][j].is_zero());
                match col {
                    Some(j) => self.pivot(i, j),
                    None => {
                        self.rows.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    fn extract(&self, n: usize) -> Vec<Rat> {
        let mut x = vec![Rat::zero(); n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rows[i][self.cols - 1].clone();
            }
        }
        x
    }
}
