//! Payment rules over a cleared auction.
//!
//! Every rule prices the same efficient allocation and differs only in the
//! utility vector it selects. Pay-as-bid and VCG are direct. The
//! minimum-revenue family (`mrc_ccg`, `mrc_quadratic`) grows core rows by
//! constraint generation until a revenue-minimal point survives a
//! separation check, then picks a representative of the optimal face.
//! `fast_core` and the water-filling pair approach the leximin-optimal
//! point from below, raising all unfrozen winners by a common increment
//! each round.
//!
//! The increment search `cgs_search` is the part worth reading closely.
//! Each blocking coalition B found by the oracle yields a core row whose
//! uniform-raise bound is computed in closed form, the candidate frozen
//! set shrinks to the active winners outside B, and bounds discovered in
//! earlier rounds are rescaled and reused instead of being rediscovered.

use std::collections::BTreeSet;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::core_polytope::{cap_constraints, rows_to_constraints, separate, SeparationReport};
use crate::lp::{
    lex_min_point, lp_solve, KernelError, LinearConstraint, LpStatus, Relation, Sense,
};
use crate::model::{rat, ratio, Allocation, Instance, ModelError, PaymentOutcome, Rat, RuleId};
use crate::qp::min_sq_distance;
use crate::wd::{OracleHandle, TieBreak};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Winners pay their bids and keep nothing.
pub fn pay_as_bid(inst: &Instance, alloc: &Allocation) -> Result<PaymentOutcome, RuleError> {
    let zeros = vec![Rat::zero(); inst.num_bidders()];
    Ok(PaymentOutcome::from_utilities(RuleId::PayAsBid, inst, alloc, zeros, 1)?)
}

/// Each winner keeps w(N) - w(N without i), the welfare they add.
pub fn vcg(inst: &Instance, alloc: &Allocation, tie: TieBreak) -> Result<PaymentOutcome, RuleError> {
    let mut oracle = OracleHandle::with_initial(inst, tie);
    let welfare = alloc.welfare(inst);
    let utilities = vcg_utilities(&mut oracle, &welfare, alloc);
    let queries = oracle.queries();
    Ok(PaymentOutcome::from_utilities(RuleId::Vcg, inst, alloc, utilities, queries)?)
}

fn vcg_utilities(oracle: &mut OracleHandle<'_>, welfare: &Rat, alloc: &Allocation) -> Vec<Rat> {
    let n = alloc.assigned.len();
    let everyone: BTreeSet<usize> = (0..n).collect();
    let mut utilities = vec![Rat::zero(); n];
    for i in alloc.winners() {
        let mut rest = everyone.clone();
        rest.remove(&i);
        utilities[i] = welfare - oracle.coalition(&rest);
    }
    utilities
}

/// Shared scaffolding for the minimum-revenue rules: a growing row set
/// over winner-indexed variables, refreshed by separation queries.
struct FaceSearch<'a> {
    inst: &'a Instance,
    alloc: &'a Allocation,
    oracle: OracleHandle<'a>,
    welfare: Rat,
    winners: Vec<usize>,
    cons: Vec<LinearConstraint>,
}

impl<'a> FaceSearch<'a> {
    fn new(inst: &'a Instance, alloc: &'a Allocation, tie: TieBreak) -> Self {
        let winners = alloc.winners();
        let cons = cap_constraints(inst, alloc, &winners);
        FaceSearch {
            inst,
            alloc,
            oracle: OracleHandle::with_initial(inst, tie),
            welfare: alloc.welfare(inst),
            winners,
            cons,
        }
    }

    fn expand(&self, point: &[Rat]) -> Vec<Rat> {
        let mut full = vec![Rat::zero(); self.inst.num_bidders()];
        for (k, &w) in self.winners.iter().enumerate() {
            full[w] = point[k].clone();
        }
        full
    }

    fn check(&mut self, full: &[Rat]) -> SeparationReport {
        separate(&mut self.oracle, &self.welfare, full)
    }

    fn add_cut(&mut self, report: &SeparationReport) {
        let row = report.as_row(self.alloc, &self.welfare);
        log::trace!("new core row: support {:?} rhs {}", row.support, row.rhs);
        self.cons
            .extend(rows_to_constraints(std::slice::from_ref(&row), &self.winners));
    }

    /// Constraint generation for the revenue-minimizing total: solve,
    /// separate, cut, until the maximizer is a core point.
    fn settle_total(&mut self) -> Result<Rat, RuleError> {
        let ones = vec![rat(1); self.winners.len()];
        let mut guard = 0usize;
        loop {
            guard += 1;
            assert!(guard < 4096, "constraint generation failed to converge");
            let sol = lp_solve(&ones, Sense::Max, &self.cons)?;
            assert_eq!(sol.status, LpStatus::Optimal, "caps keep the program bounded");
            let full = self.expand(&sol.point);
            let report = self.check(&full);
            if report.satisfied {
                return Ok(sol.objective);
            }
            self.add_cut(&report);
        }
    }

    fn with_total(&self, total: &Rat) -> Vec<LinearConstraint> {
        let mut cons = self.cons.clone();
        cons.push(LinearConstraint::new(
            vec![rat(1); self.winners.len()],
            Relation::Eq,
            total.clone(),
        ));
        cons
    }
}

/// Minimum-revenue core outcome; ties on the optimal face go to the
/// lexicographically smallest vertex in winner order.
pub fn mrc_ccg(inst: &Instance, alloc: &Allocation, tie: TieBreak) -> Result<PaymentOutcome, RuleError> {
    mrc_ccg_impl(inst, alloc, tie, false)
}

/// Same rule, with the per-winner VCG bounds added as seed rows before
/// generation starts. Costs one oracle query per winner up front.
pub fn mrc_ccg_seeded(
    inst: &Instance,
    alloc: &Allocation,
    tie: TieBreak,
) -> Result<PaymentOutcome, RuleError> {
    mrc_ccg_impl(inst, alloc, tie, true)
}

fn mrc_ccg_impl(
    inst: &Instance,
    alloc: &Allocation,
    tie: TieBreak,
    seed_with_vcg: bool,
) -> Result<PaymentOutcome, RuleError> {
    let mut search = FaceSearch::new(inst, alloc, tie);
    if seed_with_vcg {
        let seed = vcg_utilities(&mut search.oracle, &search.welfare, alloc);
        for (k, &w) in search.winners.iter().enumerate() {
            let mut coeffs = vec![Rat::zero(); search.winners.len()];
            coeffs[k] = rat(1);
            search
                .cons
                .push(LinearConstraint::new(coeffs, Relation::Le, seed[w].clone()));
        }
    }
    let total = search.settle_total()?;
    let mut guard = 0usize;
    loop {
        guard += 1;
        assert!(guard < 4096, "tie refinement failed to converge");
        let cons = search.with_total(&total);
        let point = lex_min_point(search.winners.len(), &cons)?
            .expect("the settled face is nonempty");
        let full = search.expand(&point);
        let report = search.check(&full);
        if report.satisfied {
            let queries = search.oracle.queries();
            return Ok(PaymentOutcome::from_utilities(RuleId::Mrc, inst, alloc, full, queries)?);
        }
        search.add_cut(&report);
    }
}

/// Which point the quadratic refinement pulls toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionReference {
    Vcg,
    Zero,
}

/// Revenue-minimal core outcome closest to the reference point in
/// Euclidean distance: the unique such point, found by projecting onto the
/// generated relaxation and re-separating until the projection is in the
/// core.
pub fn mrc_quadratic(
    inst: &Instance,
    alloc: &Allocation,
    tie: TieBreak,
    reference: ProjectionReference,
) -> Result<PaymentOutcome, RuleError> {
    let mut search = FaceSearch::new(inst, alloc, tie);
    let total = search.settle_total()?;
    let (rule, anchor) = match reference {
        ProjectionReference::Vcg => {
            let u = vcg_utilities(&mut search.oracle, &search.welfare, alloc);
            let anchor: Vec<Rat> = search.winners.iter().map(|&w| u[w].clone()).collect();
            (RuleId::MrcVcg, anchor)
        }
        ProjectionReference::Zero => {
            (RuleId::MrcZero, vec![Rat::zero(); search.winners.len()])
        }
    };
    let mut guard = 0usize;
    loop {
        guard += 1;
        assert!(guard < 4096, "projection refinement failed to converge");
        let cons = search.with_total(&total);
        let point = min_sq_distance(&anchor, &cons)?;
        let full = search.expand(&point);
        let report = search.check(&full);
        if report.satisfied {
            let queries = search.oracle.queries();
            return Ok(PaymentOutcome::from_utilities(rule, inst, alloc, full, queries)?);
        }
        search.add_cut(&report);
    }
}

fn raised(utilities: &[Rat], active: &BTreeSet<usize>, delta: &Rat) -> Vec<Rat> {
    let mut probe = utilities.to_vec();
    for &i in active {
        probe[i] += delta;
    }
    probe
}

/// Water-filling with the per-round increment located by bisection to
/// within `epsilon`, instead of solved for exactly. The applied increment
/// is always the feasible bracket end, so the output is in the core; the
/// frozen set comes from the blocking coalition at the infeasible end.
pub fn fast_core(
    inst: &Instance,
    alloc: &Allocation,
    tie: TieBreak,
    epsilon: &Rat,
) -> Result<PaymentOutcome, RuleError> {
    if !epsilon.is_positive() {
        return Err(RuleError::BadTolerance(epsilon.to_string()));
    }
    let mut oracle = OracleHandle::with_initial(inst, tie);
    let welfare = alloc.welfare(inst);
    let mut utilities = vec![Rat::zero(); inst.num_bidders()];
    let mut active: BTreeSet<usize> = alloc.winners().into_iter().collect();
    while !active.is_empty() {
        let residual = &welfare - utilities.iter().sum::<Rat>();
        let ceiling = residual / rat(active.len() as i64);
        if ceiling.is_zero() {
            break;
        }
        let report = separate(&mut oracle, &welfare, &raised(&utilities, &active, &ceiling));
        if report.satisfied {
            for &i in &active {
                utilities[i] += &ceiling;
            }
            break;
        }
        let mut witness = report.coalition;
        let mut lo = Rat::zero();
        let mut hi = ceiling;
        while &hi - &lo > *epsilon {
            let mid = (&hi + &lo) / rat(2);
            let report = separate(&mut oracle, &welfare, &raised(&utilities, &active, &mid));
            if report.satisfied {
                lo = mid;
            } else {
                hi = mid;
                witness = report.coalition;
            }
        }
        if !lo.is_zero() {
            for &i in &active {
                utilities[i] += &lo;
            }
        }
        let frozen: Vec<usize> = active.iter().filter(|i| !witness.contains(i)).copied().collect();
        assert!(!frozen.is_empty(), "a blocking coalition spares at least one active winner");
        for i in frozen {
            active.remove(&i);
        }
    }
    let queries = oracle.queries();
    Ok(PaymentOutcome::from_utilities(RuleId::FastCore, inst, alloc, utilities, queries)?)
}

/// A uniform-raise bound carried over from an earlier increment search.
///
/// `frozen_set` is nonempty and `bound` nonnegative; both are kept in the
/// frame of the most recent search (see `WaterfillState::rebase_store`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredConstraint {
    pub frozen_set: BTreeSet<usize>,
    pub bound: Rat,
}

/// Mutable state threaded through the water-filling rounds.
pub struct WaterfillState<'a> {
    pub step: usize,
    pub utilities: Vec<Rat>,
    pub active: BTreeSet<usize>,
    pub last_increment: Rat,
    pub store: Vec<StoredConstraint>,
    pub oracle: OracleHandle<'a>,
    pub grand_welfare: Rat,
    pub reuse: bool,
}

impl<'a> WaterfillState<'a> {
    pub fn new(inst: &'a Instance, alloc: &Allocation, tie: TieBreak, reuse: bool) -> Self {
        WaterfillState {
            step: 0,
            utilities: vec![Rat::zero(); inst.num_bidders()],
            active: alloc.winners().into_iter().collect(),
            last_increment: Rat::zero(),
            store: Vec::new(),
            oracle: OracleHandle::with_initial(inst, tie),
            grand_welfare: alloc.welfare(inst),
            reuse,
        }
    }

    /// Rewrites stored bounds into the current frame: intersect each
    /// frozen set with the live active set, rescale the bound by the size
    /// ratio after subtracting the increment applied since it was stored.
    /// Tuples that lose every member or go negative are stale and dropped.
    fn rebase_store(&mut self) {
        let applied = std::mem::replace(&mut self.last_increment, Rat::zero());
        let active = &self.active;
        let mut rebased = Vec::with_capacity(self.store.len());
        for tuple in self.store.drain(..) {
            let kept: BTreeSet<usize> =
                tuple.frozen_set.intersection(active).copied().collect();
            if kept.is_empty() {
                continue;
            }
            let scale = rat(tuple.frozen_set.len() as i64) / rat(kept.len() as i64);
            let bound = scale * (&tuple.bound - &applied);
            if bound.is_negative() {
                continue;
            }
            rebased.push(StoredConstraint { frozen_set: kept, bound });
        }
        self.store = rebased;
    }

    /// Raises every active winner by `increment` and retires `frozen`.
    pub fn apply(&mut self, increment: &Rat, frozen: &BTreeSet<usize>) {
        debug_assert!(frozen.iter().all(|i| self.active.contains(i)));
        if !increment.is_zero() {
            for &i in &self.active {
                self.utilities[i] += increment;
            }
        }
        for i in frozen {
            self.active.remove(i);
        }
        self.last_increment = increment.clone();
        self.step += 1;
    }
}

/// Largest common increment the active winners can all receive while the
/// outcome stays in the core, and the winners pinned at that level.
///
/// Starts from the cheapest known upper bound (the everyone-row bound, or
/// a rescaled stored bound if one is smaller), then alternates separation
/// queries with closed-form bound updates. An infeasible probe with
/// blocking coalition B tightens the bound to make B's row exactly tight
/// under a uniform raise of the active winners outside B; those winners
/// become the pinned candidates. When only one candidate remains the
/// bound is exact without a confirming query: the separation oracle
/// maximizes violation, and no row loses violation slower than one with a
/// single active member, so every other row is already satisfied there.
pub fn cgs_search(state: &mut WaterfillState<'_>) -> (Rat, BTreeSet<usize>) {
    assert!(!state.active.is_empty(), "increment search needs an active winner");
    if state.reuse {
        state.rebase_store();
    }
    let residual = &state.grand_welfare - state.utilities.iter().sum::<Rat>();
    debug_assert!(!residual.is_negative());
    let mut bound = residual / rat(state.active.len() as i64);
    let mut pinned = state.active.clone();
    if state.reuse {
        for tuple in &state.store {
            if tuple.bound < bound {
                bound = tuple.bound.clone();
                pinned = tuple.frozen_set.clone();
            }
        }
    }
    if bound.is_zero() {
        // The current point is in the core by the water-filling invariant,
        // so a zero bound needs no confirmation.
        return (bound, pinned);
    }
    loop {
        let probe = raised(&state.utilities, &state.active, &bound);
        let report = separate(&mut state.oracle, &state.grand_welfare, &probe);
        log::trace!(
            "probe at {}: violation {}, coalition {:?}",
            bound,
            report.violation,
            report.coalition
        );
        if report.satisfied {
            return (bound, pinned);
        }
        let survivors: BTreeSet<usize> = state
            .active
            .iter()
            .filter(|i| !report.coalition.contains(i))
            .copied()
            .collect();
        assert!(!survivors.is_empty(), "a blocking coalition spares at least one active winner");
        bound -= report.violation / rat(survivors.len() as i64);
        assert!(!bound.is_negative(), "increment bound fell below zero");
        pinned = survivors;
        if state.reuse {
            state.store.push(StoredConstraint {
                frozen_set: pinned.clone(),
                bound: bound.clone(),
            });
        }
        if pinned.len() == 1 {
            return (bound, pinned);
        }
    }
}

/// One water-filling round as executed.
#[derive(Debug, Clone)]
pub struct WfRound {
    pub active_before: usize,
    pub increment: Rat,
    pub frozen: BTreeSet<usize>,
    pub queries: u64,
}

#[derive(Debug, Clone, Default)]
pub struct WfTrace {
    pub rounds: Vec<WfRound>,
}

/// Leximin-optimal core outcome via water-filling, with stored bounds
/// carried between rounds.
pub fn blo_wf_cgs_cr(
    inst: &Instance,
    alloc: &Allocation,
    tie: TieBreak,
) -> Result<PaymentOutcome, RuleError> {
    blo_with_trace(inst, alloc, tie, true).map(|(outcome, _)| outcome)
}

/// Same outcome with bound reuse disabled; every round searches from
/// scratch. Exists to measure what the reuse pass saves.
pub fn blo_wf_cgs(
    inst: &Instance,
    alloc: &Allocation,
    tie: TieBreak,
) -> Result<PaymentOutcome, RuleError> {
    blo_with_trace(inst, alloc, tie, false).map(|(outcome, _)| outcome)
}

/// Water-filling driver, exposing the per-round increments, frozen sets,
/// and query counts.
pub fn blo_with_trace(
    inst: &Instance,
    alloc: &Allocation,
    tie: TieBreak,
    reuse: bool,
) -> Result<(PaymentOutcome, WfTrace), RuleError> {
    let mut state = WaterfillState::new(inst, alloc, tie, reuse);
    let mut rounds = Vec::new();
    while !state.active.is_empty() {
        let queries_before = state.oracle.queries();
        let active_before = state.active.len();
        let (increment, frozen) = cgs_search(&mut state);
        state.apply(&increment, &frozen);
        debug_assert!(
            crate::core_polytope::is_in_core(inst, alloc, &state.utilities, tie)
                .is_ok_and(|r| r.satisfied),
            "water level left the core"
        );
        let queries = state.oracle.queries() - queries_before;
        log::trace!(
            "round {}: raised {} active by {}, froze {:?} after {} queries",
            state.step,
            active_before,
            increment,
            frozen,
            queries
        );
        rounds.push(WfRound { active_before, increment, frozen, queries });
    }
    let queries = state.oracle.queries();
    let outcome =
        PaymentOutcome::from_utilities(RuleId::Blo, inst, alloc, state.utilities.clone(), queries)?;
    Ok((outcome, WfTrace { rounds }))
}

/// Runs the rule named by `rule`; `epsilon` only affects `FastCore` and
/// defaults to 1/100.
pub fn price(
    inst: &Instance,
    alloc: &Allocation,
    tie: TieBreak,
    rule: RuleId,
    epsilon: Option<&Rat>,
) -> Result<PaymentOutcome, RuleError> {
    match rule {
        RuleId::PayAsBid => pay_as_bid(inst, alloc),
        RuleId::Vcg => vcg(inst, alloc, tie),
        RuleId::Mrc => mrc_ccg(inst, alloc, tie),
        RuleId::MrcVcg => mrc_quadratic(inst, alloc, tie, ProjectionReference::Vcg),
        RuleId::MrcZero => mrc_quadratic(inst, alloc, tie, ProjectionReference::Zero),
        RuleId::FastCore => {
            let default = ratio(1, 100);
            fast_core(inst, alloc, tie, epsilon.unwrap_or(&default))
        }
        RuleId::Blo => blo_wf_cgs_cr(inst, alloc, tie),
    }
}
