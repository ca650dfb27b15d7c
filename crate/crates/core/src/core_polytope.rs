//! The core of the assignment game in utility space.
//!
//! An outcome is in the core when no coalition of bidders could pay the
//! seller more than the current winners do while leaving every member at
//! least as well off. Written over winner utilities u, each coalition S
//! contributes one row: sum of u_i over winners outside S is at most
//! w(N) - w(S). Losers are held at zero utility throughout.
//!
//! Two oracle paths live here. `separate` finds a most violated row with a
//! single clearing query on truncated bids, which is what the iterative
//! pricing rules consume. `enumerate_rows` materializes the tightest row
//! for every winner subset, which is only tractable at desk scale but
//! makes exhaustive reference computations possible.

use std::collections::BTreeSet;

use num_traits::Zero;
use thiserror::Error;

use crate::lp::{
    lex_min_point, lp_solve, KernelError, LinearConstraint, LpStatus, Relation, Sense,
};
use crate::model::{rat, Allocation, Instance, ModelError, Rat};
use crate::wd::{coalition_welfare, OracleHandle, TieBreak};

/// Winner-subset enumeration is exponential; past this many winners the
/// exhaustive helpers refuse to run.
pub const ENUM_WINNER_LIMIT: usize = 12;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("{count} winners exceed the exhaustive enumeration limit of {limit}")]
    TooManyWinners { count: usize, limit: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One core row: the winners in `support` can jointly keep at most `rhs`
/// utility, witnessed by the blocking coalition `coalition`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreConstraintRow {
    pub support: BTreeSet<usize>,
    pub rhs: Rat,
    pub coalition: BTreeSet<usize>,
}

/// Outcome of one separation query at a utility point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparationReport {
    pub satisfied: bool,
    /// How far the point sits outside the core, zero when inside.
    pub violation: Rat,
    /// Blocking coalition: winners of the truncated clearing problem.
    pub coalition: BTreeSet<usize>,
    /// Welfare of `coalition` under the original bids.
    pub coalition_welfare: Rat,
}

impl SeparationReport {
    /// The row this report certifies as violated (or tight), over the
    /// winners of `alloc` left outside the coalition.
    pub fn as_row(&self, alloc: &Allocation, grand_welfare: &Rat) -> CoreConstraintRow {
        let support: BTreeSet<usize> = alloc
            .winners()
            .into_iter()
            .filter(|w| !self.coalition.contains(w))
            .collect();
        CoreConstraintRow {
            support,
            rhs: grand_welfare - &self.coalition_welfare,
            coalition: self.coalition.clone(),
        }
    }
}

/// Single most-violated-row query at `utilities`, valid for any
/// nonnegative utility vector including probes above the bid caps.
///
/// Bids of each bidder are truncated by that bidder's current utility; the
/// welfare of the truncated instance exceeds w(N) minus total utility
/// exactly when some coalition blocks, and the truncated winners are such
/// a coalition.
pub fn separate(
    oracle: &mut OracleHandle<'_>,
    grand_welfare: &Rat,
    utilities: &[Rat],
) -> SeparationReport {
    let truncated = crate::wd::truncate_bids(oracle.inst, utilities);
    let res = oracle.solve(&truncated);
    let residual = grand_welfare - utilities.iter().sum::<Rat>();
    let violation = &res.welfare - &residual;
    debug_assert!(!num_traits::Signed::is_negative(&violation));
    let coalition: BTreeSet<usize> = res.winners.iter().copied().collect();
    let coalition_utilities: Rat = coalition.iter().map(|&i| utilities[i].clone()).sum();
    SeparationReport {
        satisfied: violation.is_zero(),
        violation,
        coalition_welfare: &res.welfare + &coalition_utilities,
        coalition,
    }
}

/// Validated core membership test for a complete utility vector.
pub fn is_in_core(
    inst: &Instance,
    alloc: &Allocation,
    utilities: &[Rat],
    tie: TieBreak,
) -> Result<SeparationReport, CoreError> {
    crate::model::validate_utilities(inst, alloc, utilities)?;
    let mut oracle = OracleHandle::new(inst, tie);
    let welfare = alloc.welfare(inst);
    Ok(separate(&mut oracle, &welfare, utilities))
}

/// Tightest row for every nonempty winner subset T: the most that T can
/// jointly keep is w(N) - w(N minus T).
pub fn enumerate_rows(
    inst: &Instance,
    alloc: &Allocation,
    tie: TieBreak,
) -> Result<Vec<CoreConstraintRow>, CoreError> {
    let winners = alloc.winners();
    if winners.len() > ENUM_WINNER_LIMIT {
        return Err(CoreError::TooManyWinners {
            count: winners.len(),
            limit: ENUM_WINNER_LIMIT,
        });
    }
    let welfare = alloc.welfare(inst);
    let all: BTreeSet<usize> = (0..inst.num_bidders()).collect();
    let mut rows = Vec::with_capacity((1usize << winners.len()) - 1);
    for pattern in 1u32..(1 << winners.len()) {
        let support: BTreeSet<usize> = winners
            .iter()
            .enumerate()
            .filter(|(k, _)| pattern >> k & 1 == 1)
            .map(|(_, &w)| w)
            .collect();
        let coalition: BTreeSet<usize> = all.difference(&support).copied().collect();
        let w_s = coalition_welfare(inst, &coalition, tie);
        rows.push(CoreConstraintRow { support, rhs: &welfare - &w_s, coalition });
    }
    Ok(rows)
}

/// Rewrites rows as constraints over `winners`-indexed variables.
pub fn rows_to_constraints(rows: &[CoreConstraintRow], winners: &[usize]) -> Vec<LinearConstraint> {
    rows.iter()
        .map(|row| {
            let coeffs = winners
                .iter()
                .map(|w| if row.support.contains(w) { rat(1) } else { rat(0) })
                .collect();
            LinearConstraint::new(coeffs, Relation::Le, row.rhs.clone())
        })
        .collect()
}

/// Upper bounds u_i <= v_i(a_i) over `winners`-indexed variables.
pub fn cap_constraints(
    inst: &Instance,
    alloc: &Allocation,
    winners: &[usize],
) -> Vec<LinearConstraint> {
    winners
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let mut coeffs = vec![Rat::zero(); winners.len()];
            coeffs[k] = rat(1);
            LinearConstraint::new(coeffs, Relation::Le, alloc.value_of(inst, w))
        })
        .collect()
}

fn expand(winners: &[usize], point: &[Rat], num_bidders: usize) -> Vec<Rat> {
    let mut full = vec![Rat::zero(); num_bidders];
    for (k, &w) in winners.iter().enumerate() {
        full[w] = point[k].clone();
    }
    full
}

/// Reference minimum-revenue core point: maximizes total utility over the
/// enumerated core, then picks the lexicographically smallest optimizer in
/// winner order. Exhaustive, for verification only.
pub fn brute_force_mrc(
    inst: &Instance,
    alloc: &Allocation,
    tie: TieBreak,
) -> Result<Vec<Rat>, CoreError> {
    let winners = alloc.winners();
    let rows = enumerate_rows(inst, alloc, tie)?;
    let mut cons = rows_to_constraints(&rows, &winners);
    let obj = vec![rat(1); winners.len()];
    let sol = lp_solve(&obj, Sense::Max, &cons)?;
    debug_assert_eq!(sol.status, LpStatus::Optimal);
    cons.push(LinearConstraint::new(obj, Relation::Eq, sol.objective));
    let point = lex_min_point(winners.len(), &cons)?
        .expect("optimal face of a feasible program is nonempty");
    Ok(expand(&winners, &point, inst.num_bidders()))
}

/// Reference leximin-optimal core point by progressive filling: raise the
/// common floor of the unfixed coordinates as far as the core allows, fix
/// every coordinate that cannot move past the floor, repeat. Exhaustive,
/// for verification only.
pub fn brute_force_blo(
    inst: &Instance,
    alloc: &Allocation,
    tie: TieBreak,
) -> Result<Vec<Rat>, CoreError> {
    let winners = alloc.winners();
    let n = winners.len();
    let rows = enumerate_rows(inst, alloc, tie)?;
    // Variables: one per winner plus the floor t appended last.
    let base: Vec<LinearConstraint> = rows_to_constraints(&rows, &winners)
        .into_iter()
        .map(|c| {
            let mut coeffs = c.coeffs;
            coeffs.push(Rat::zero());
            LinearConstraint::new(coeffs, c.relation, c.rhs)
        })
        .collect();
    let mut fixed: Vec<Option<Rat>> = vec![None; n];
    while fixed.iter().any(Option::is_none) {
        let mut cons = base.clone();
        for (k, f) in fixed.iter().enumerate() {
            let mut coeffs = vec![Rat::zero(); n + 1];
            match f {
                Some(v) => {
                    coeffs[k] = rat(1);
                    cons.push(LinearConstraint::new(coeffs, Relation::Eq, v.clone()));
                }
                None => {
                    coeffs[k] = rat(1);
                    coeffs[n] = rat(-1);
                    cons.push(LinearConstraint::new(coeffs, Relation::Ge, Rat::zero()));
                }
            }
        }
        let mut obj = vec![Rat::zero(); n + 1];
        obj[n] = rat(1);
        let sol = lp_solve(&obj, Sense::Max, &cons)?;
        debug_assert_eq!(sol.status, LpStatus::Optimal);
        let floor = sol.objective;
        let mut pin = vec![Rat::zero(); n + 1];
        pin[n] = rat(1);
        cons.push(LinearConstraint::new(pin, Relation::Eq, floor.clone()));
        let mut progressed = false;
        for k in 0..n {
            if fixed[k].is_some() {
                continue;
            }
            let mut probe = vec![Rat::zero(); n + 1];
            probe[k] = rat(1);
            let best = lp_solve(&probe, Sense::Max, &cons)?;
            debug_assert_eq!(best.status, LpStatus::Optimal);
            if best.objective == floor {
                fixed[k] = Some(floor.clone());
                progressed = true;
            }
        }
        assert!(progressed, "progressive filling must fix a coordinate each round");
    }
    let point: Vec<Rat> = fixed.into_iter().map(Option::unwrap).collect();
    Ok(expand(&winners, &point, inst.num_bidders()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cats::generate_chain;
    use crate::model::ratio;
    use crate::wd::solve_instance;

    fn chain(k: u32) -> (Instance, Allocation) {
        let inst = generate_chain(k).unwrap();
        let alloc = solve_instance(&inst, TieBreak::LexSmallest).allocation;
        (inst, alloc)
    }

    #[test]
    fn rows_for_the_three_good_chain() {
        let (inst, alloc) = chain(3);
        let rows = enumerate_rows(&inst, &alloc, TieBreak::LexSmallest).unwrap();
        assert_eq!(rows.len(), 7);
        let rhs_of = |support: &[usize]| {
            let s: BTreeSet<usize> = support.iter().copied().collect();
            rows.iter().find(|r| r.support == s).unwrap().rhs.clone()
        };
        assert_eq!(rhs_of(&[0]), rat(2));
        assert_eq!(rhs_of(&[1]), rat(2));
        assert_eq!(rhs_of(&[0, 1]), rat(2));
        assert_eq!(rhs_of(&[1, 2]), rat(2));
        // Goods 0 and 2 free up but every remaining bid needs good 1.
        assert_eq!(rhs_of(&[0, 2]), rat(4));
        assert_eq!(rhs_of(&[0, 1, 2]), rat(4));
    }

    #[test]
    fn separation_flags_the_vcg_point() {
        let (inst, alloc) = chain(3);
        let all_two = vec![rat(2), rat(2), rat(2), rat(0), rat(0)];
        let report = is_in_core(&inst, &alloc, &all_two, TieBreak::LexSmallest).unwrap();
        assert!(!report.satisfied);
        assert_eq!(report.violation, rat(2));
        assert_eq!(report.coalition, BTreeSet::from([3]));
        assert_eq!(report.coalition_welfare, rat(2));
        let row = report.as_row(&alloc, &rat(6));
        assert_eq!(row.support, BTreeSet::from([0, 1, 2]));
        assert_eq!(row.rhs, rat(4));

        let flat = vec![rat(1), rat(1), rat(1), rat(0), rat(0)];
        let report = is_in_core(&inst, &alloc, &flat, TieBreak::LexSmallest).unwrap();
        assert!(report.satisfied);
        assert_eq!(report.violation, rat(0));
    }

    #[test]
    fn membership_requires_valid_utilities() {
        let (inst, alloc) = chain(3);
        let over_cap = vec![rat(3), rat(0), rat(0), rat(0), rat(0)];
        assert!(matches!(
            is_in_core(&inst, &alloc, &over_cap, TieBreak::LexSmallest),
            Err(CoreError::Model(_))
        ));
        // The raw query itself accepts the same point.
        let mut oracle = OracleHandle::new(&inst, TieBreak::LexSmallest);
        let report = separate(&mut oracle, &rat(6), &over_cap);
        assert!(!report.satisfied);
    }

    #[test]
    fn reference_rules_on_chains() {
        let (inst, alloc) = chain(3);
        let mrc = brute_force_mrc(&inst, &alloc, TieBreak::LexSmallest).unwrap();
        assert_eq!(mrc, vec![rat(2), rat(0), rat(2), rat(0), rat(0)]);
        let blo = brute_force_blo(&inst, &alloc, TieBreak::LexSmallest).unwrap();
        assert_eq!(blo, vec![rat(1), rat(1), rat(1), rat(0), rat(0)]);

        let (inst, alloc) = chain(5);
        let mrc = brute_force_mrc(&inst, &alloc, TieBreak::LexSmallest).unwrap();
        assert_eq!(
            mrc[..5],
            [rat(2), rat(0), rat(2), rat(0), rat(2)],
            "pairwise bridge rows force the alternating pattern"
        );
        let blo = brute_force_blo(&inst, &alloc, TieBreak::LexSmallest).unwrap();
        assert_eq!(blo[..5], [rat(1), rat(1), rat(1), rat(1), rat(1)]);
    }

    #[test]
    fn sole_bidder_keeps_everything() {
        let inst = Instance::new(
            1,
            0,
            vec![vec![crate::model::Bid::new(vec![0], rat(5))]],
        )
        .unwrap();
        let alloc = solve_instance(&inst, TieBreak::LexSmallest).allocation;
        let mrc = brute_force_mrc(&inst, &alloc, TieBreak::LexSmallest).unwrap();
        assert_eq!(mrc, vec![rat(5)]);
        let blo = brute_force_blo(&inst, &alloc, TieBreak::LexSmallest).unwrap();
        assert_eq!(blo, vec![rat(5)]);
    }

    #[test]
    fn fractional_rows_stay_exact() {
        // Two bidders, one good each, a rival wanting both.
        let inst = Instance::new(
            2,
            0,
            vec![
                vec![crate::model::Bid::new(vec![0], ratio(7, 2))],
                vec![crate::model::Bid::new(vec![1], ratio(5, 3))],
                vec![crate::model::Bid::new(vec![0, 1], rat(4))],
            ],
        )
        .unwrap();
        let alloc = solve_instance(&inst, TieBreak::LexSmallest).allocation;
        assert_eq!(alloc.winners(), vec![0, 1]);
        // Joint row: u0 + u1 <= w(N) - w({2}) = 31/6 - 4 = 7/6.
        let rows = enumerate_rows(&inst, &alloc, TieBreak::LexSmallest).unwrap();
        let joint = rows
            .iter()
            .find(|r| r.support.len() == 2)
            .unwrap();
        assert_eq!(joint.rhs, ratio(7, 6));
        let mrc = brute_force_mrc(&inst, &alloc, TieBreak::LexSmallest).unwrap();
        // Lex-min over u0 + u1 = 7/6 pushes everything onto bidder 1,
        // whose own row allows exactly 7/6.
        assert_eq!(mrc, vec![rat(0), ratio(7, 6), rat(0)]);
    }
}
