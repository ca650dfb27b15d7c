//! Winner determination: choose at most one bid per bidder, bundles pairwise
//! disjoint, total value maximal.
//!
//! The search is exact branch-and-bound over bids in decreasing value density,
//! pruned by a per-good relaxation bound. Welfare ties are broken by the
//! sorted sequence of accepted global bid ids, so results are deterministic
//! and independent of search order. A subset-enumeration solver doubles as an
//! oracle for tests, and [`OracleHandle`] counts solves for the pricing
//! algorithms' query accounting.

use std::collections::BTreeSet;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::model::{Allocation, Bid, Instance, Rat};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WdError {
    #[error("exhaustive solver limited to {limit} bids, instance has {actual}")]
    BudgetExceeded { limit: usize, actual: usize },
}

/// Result of one winner-determination solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WdResult {
    pub allocation: Allocation,
    pub winners: Vec<usize>,
    pub welfare: Rat,
}

/// Welfare-tie order over sorted accepted-bid-id sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Lexicographically smallest sequence wins (default).
    #[default]
    LexSmallest,
    /// Reversed order, used to demonstrate tie-break independence of prices.
    LexLargest,
}

const EXHAUSTIVE_BID_LIMIT: usize = 25;

/// Good-occupancy bitmask over real plus dummy goods.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Mask(Vec<u64>);

impl Mask {
    fn empty(slots: usize) -> Self {
        Mask(vec![0; slots.div_ceil(64)])
    }

    fn from_bundle(slots: usize, bundle: &[u32]) -> Self {
        let mut m = Mask::empty(slots);
        for &g in bundle {
            m.0[g as usize / 64] |= 1 << (g as usize % 64);
        }
        m
    }

    fn disjoint(&self, other: &Mask) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & b == 0)
    }

    fn union_with(&mut self, other: &Mask) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }

    fn remove(&mut self, other: &Mask) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a &= !b;
        }
    }

    fn contains(&self, slot: usize) -> bool {
        self.0[slot / 64] & (1 << (slot % 64)) != 0
    }
}

struct FlatBid {
    id: usize,
    bidder: usize,
    bid_idx: usize,
    mask: Mask,
    value: Rat,
    density: Rat,
}

/// Flattens a bid profile, skipping zero-valued bids (absent by convention;
/// truncation produces them in place).
fn flatten(slots: usize, bids: &[Vec<Bid>]) -> Vec<FlatBid> {
    let mut flat = Vec::new();
    let mut id = 0;
    for (bidder, list) in bids.iter().enumerate() {
        for (bid_idx, bid) in list.iter().enumerate() {
            if !bid.value.is_zero() {
                flat.push(FlatBid {
                    id,
                    bidder,
                    bid_idx,
                    mask: Mask::from_bundle(slots, &bid.bundle),
                    value: bid.value.clone(),
                    density: &bid.value / Rat::from_integer(bid.bundle.len().into()),
                });
            }
            id += 1;
        }
    }
    flat
}

fn better_tie(candidate: &[usize], incumbent: &[usize], tie: TieBreak) -> bool {
    match tie {
        TieBreak::LexSmallest => candidate < incumbent,
        TieBreak::LexLargest => candidate > incumbent,
    }
}

struct Best {
    welfare: Rat,
    ids: Vec<usize>,
    chosen: Vec<(usize, usize)>,
}

/// Exact solve by branch and bound. `bids` must have the same shape as the
/// instance it came from so global bid ids stay stable.
pub fn solve_wd(slots: usize, num_bidders: usize, bids: &[Vec<Bid>], tie: TieBreak) -> WdResult {
    let mut flat = flatten(slots, bids);
    // Density-descending order finds strong incumbents early; id order makes
    // the search deterministic among equal densities.
    flat.sort_by(|a, b| b.density.cmp(&a.density).then(a.id.cmp(&b.id)));

    // suffix_best[k][g]: best density over bids k.. whose bundle covers g.
    let n = flat.len();
    let mut suffix_best = vec![vec![Rat::zero(); slots]; n + 1];
    for k in (0..n).rev() {
        let (head, tail) = suffix_best.split_at_mut(k + 1);
        let row = &mut head[k];
        row.clone_from_slice(&tail[0]);
        for (g, slot) in row.iter_mut().enumerate() {
            if flat[k].mask.contains(g) && flat[k].density > *slot {
                *slot = flat[k].density.clone();
            }
        }
    }

    let mut best = Best { welfare: Rat::zero(), ids: Vec::new(), chosen: Vec::new() };
    let mut state = SearchState {
        used_goods: Mask::empty(slots),
        used_bidder: vec![false; num_bidders],
        value: Rat::zero(),
        picked: Vec::new(),
    };
    branch(&flat, &suffix_best, 0, &mut state, &mut best, tie);

    let mut allocation = Allocation::empty(num_bidders);
    for &(bidder, bid_idx) in &best.chosen {
        allocation.assigned[bidder] = Some(bid_idx);
    }
    WdResult { winners: allocation.winners(), allocation, welfare: best.welfare }
}

struct SearchState {
    used_goods: Mask,
    used_bidder: Vec<bool>,
    value: Rat,
    picked: Vec<(usize, usize, usize)>,
}

fn branch(
    flat: &[FlatBid],
    suffix_best: &[Vec<Rat>],
    k: usize,
    state: &mut SearchState,
    best: &mut Best,
    tie: TieBreak,
) {
    if k == flat.len() {
        let mut ids: Vec<usize> = state.picked.iter().map(|&(id, _, _)| id).collect();
        ids.sort_unstable();
        if state.value > best.welfare || (state.value == best.welfare && better_tie(&ids, &best.ids, tie))
        {
            best.welfare = state.value.clone();
            best.ids = ids;
            best.chosen = state.picked.iter().map(|&(_, b, x)| (b, x)).collect();
        }
        return;
    }
    // Relaxation: spread each remaining bid's value over its goods and give
    // every free good its best density. Pruning must be strict so that all
    // welfare ties are still visited.
    let mut bound = state.value.clone();
    for (g, density) in suffix_best[k].iter().enumerate() {
        if !state.used_goods.contains(g) && !density.is_zero() {
            bound += density;
        }
    }
    if bound < best.welfare {
        return;
    }

    let bid = &flat[k];
    if !state.used_bidder[bid.bidder] && state.used_goods.disjoint(&bid.mask) {
        state.used_goods.union_with(&bid.mask);
        state.used_bidder[bid.bidder] = true;
        state.value += &bid.value;
        state.picked.push((bid.id, bid.bidder, bid.bid_idx));
        branch(flat, suffix_best, k + 1, state, best, tie);
        state.picked.pop();
        state.value -= &bid.value;
        state.used_bidder[bid.bidder] = false;
        state.used_goods.remove(&bid.mask);
    }
    branch(flat, suffix_best, k + 1, state, best, tie);
}

/// Convenience wrapper for a full instance.
pub fn solve_instance(inst: &Instance, tie: TieBreak) -> WdResult {
    solve_wd(inst.num_slots(), inst.num_bidders(), &inst.bids, tie)
}

/// Oracle solver: enumerates every feasible at-most-one-bid-per-bidder
/// selection. Refuses instances beyond a fixed bid budget.
pub fn solve_wd_bruteforce(
    slots: usize,
    num_bidders: usize,
    bids: &[Vec<Bid>],
    tie: TieBreak,
) -> Result<WdResult, WdError> {
    let flat = flatten(slots, bids);
    if flat.len() > EXHAUSTIVE_BID_LIMIT {
        return Err(WdError::BudgetExceeded { limit: EXHAUSTIVE_BID_LIMIT, actual: flat.len() });
    }
    // Group by bidder so mutual exclusivity is enumerated natively.
    let mut per_bidder: Vec<Vec<&FlatBid>> = vec![Vec::new(); num_bidders];
    for fb in &flat {
        per_bidder[fb.bidder].push(fb);
    }
    let mut best = Best { welfare: Rat::zero(), ids: Vec::new(), chosen: Vec::new() };
    let mut current: Vec<&FlatBid> = Vec::new();
    enumerate(&per_bidder, 0, &mut current, &mut best, tie);

    let mut allocation = Allocation::empty(num_bidders);
    for &(bidder, bid_idx) in &best.chosen {
        allocation.assigned[bidder] = Some(bid_idx);
    }
    Ok(WdResult { winners: allocation.winners(), allocation, welfare: best.welfare })
}

fn enumerate<'a>(
    per_bidder: &[Vec<&'a FlatBid>],
    bidder: usize,
    current: &mut Vec<&'a FlatBid>,
    best: &mut Best,
    tie: TieBreak,
) {
    if bidder == per_bidder.len() {
        let value: Rat = current.iter().map(|fb| fb.value.clone()).sum();
        let mut ids: Vec<usize> = current.iter().map(|fb| fb.id).collect();
        ids.sort_unstable();
        if value > best.welfare || (value == best.welfare && better_tie(&ids, &best.ids, tie)) {
            best.welfare = value;
            best.ids = ids;
            best.chosen = current.iter().map(|fb| (fb.bidder, fb.bid_idx)).collect();
        }
        return;
    }
    enumerate(per_bidder, bidder + 1, current, best, tie);
    for fb in &per_bidder[bidder] {
        if current.iter().all(|c| c.mask.disjoint(&fb.mask)) {
            current.push(fb);
            enumerate(per_bidder, bidder + 1, current, best, tie);
            current.pop();
        }
    }
}

/// Reduces every bid value by its bidder's utility, clamped at zero. The
/// returned profile keeps the instance shape; zero-valued bids are treated as
/// absent by the solvers.
pub fn truncate_bids(inst: &Instance, utilities: &[Rat]) -> Vec<Vec<Bid>> {
    inst.bids
        .iter()
        .enumerate()
        .map(|(i, list)| {
            list.iter()
                .map(|bid| {
                    let reduced = &bid.value - &utilities[i];
                    Bid {
                        bundle: bid.bundle.clone(),
                        value: if reduced.is_negative() { Rat::zero() } else { reduced },
                    }
                })
                .collect()
        })
        .collect()
}

/// Restricts the profile to a bidder coalition, keeping shape.
pub fn restrict_to(inst: &Instance, coalition: &BTreeSet<usize>) -> Vec<Vec<Bid>> {
    inst.bids
        .iter()
        .enumerate()
        .map(|(i, list)| {
            if coalition.contains(&i) {
                list.clone()
            } else {
                list.iter()
                    .map(|bid| Bid { bundle: bid.bundle.clone(), value: Rat::zero() })
                    .collect()
            }
        })
        .collect()
}

/// Best welfare achievable using only the given bidders' bids.
pub fn coalition_welfare(inst: &Instance, coalition: &BTreeSet<usize>, tie: TieBreak) -> Rat {
    solve_wd(inst.num_slots(), inst.num_bidders(), &restrict_to(inst, coalition), tie).welfare
}

/// Counting wrapper around the solver. Every solve through the handle
/// increments the counter by exactly one; the counter never resets within a
/// pricing run.
#[derive(Debug)]
pub struct OracleHandle<'a> {
    pub inst: &'a Instance,
    pub tie: TieBreak,
    queries: u64,
}

impl<'a> OracleHandle<'a> {
    pub fn new(inst: &'a Instance, tie: TieBreak) -> Self {
        OracleHandle { inst, tie, queries: 0 }
    }

    /// Starts the counter at one to account for the clearing solve whose
    /// result the pricing rules receive as input.
    pub fn with_initial(inst: &'a Instance, tie: TieBreak) -> Self {
        OracleHandle { inst, tie, queries: 1 }
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn solve(&mut self, bids: &[Vec<Bid>]) -> WdResult {
        self.queries += 1;
        solve_wd(self.inst.num_slots(), self.inst.num_bidders(), bids, self.tie)
    }

    pub fn coalition(&mut self, coalition: &BTreeSet<usize>) -> Rat {
        self.solve(&restrict_to(self.inst, coalition)).welfare
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rat;

    fn chain3() -> Instance {
        let b = |bundle: Vec<u32>| Bid::new(bundle, rat(2));
        Instance::new(
            3,
            0,
            vec![
                vec![b(vec![0])],
                vec![b(vec![1])],
                vec![b(vec![2])],
                vec![b(vec![0, 1])],
                vec![b(vec![1, 2])],
            ],
        )
        .unwrap()
    }

    #[test]
    fn chain3_clears_to_singletons() {
        let inst = chain3();
        let r = solve_instance(&inst, TieBreak::LexSmallest);
        assert_eq!(r.welfare, rat(6));
        assert_eq!(r.winners, vec![0, 1, 2]);
        assert_eq!(
            r.allocation.assigned,
            vec![Some(0), Some(0), Some(0), None, None]
        );
    }

    #[test]
    fn restricted_instance_reclears() {
        let inst = chain3();
        let coalition: BTreeSet<usize> = [2, 3, 4].into_iter().collect();
        assert_eq!(coalition_welfare(&inst, &coalition, TieBreak::LexSmallest), rat(4));
        let empty: BTreeSet<usize> = BTreeSet::new();
        assert_eq!(coalition_welfare(&inst, &empty, TieBreak::LexSmallest), rat(0));
        let minus_b1: BTreeSet<usize> = [0, 2, 3, 4].into_iter().collect();
        assert_eq!(coalition_welfare(&inst, &minus_b1, TieBreak::LexSmallest), rat(4));
    }

    #[test]
    fn empty_input_yields_empty_result() {
        let r = solve_wd(0, 0, &[], TieBreak::LexSmallest);
        assert_eq!(r.welfare, rat(0));
        assert!(r.winners.is_empty());
    }

    #[test]
    fn truncation_reduces_and_clamps() {
        let inst = chain3();
        let pi = vec![rat(2), rat(2), rat(2), rat(0), rat(0)];
        let t = truncate_bids(&inst, &pi);
        for bidder in &t[..3] {
            assert_eq!(bidder[0].value, rat(0));
        }
        assert_eq!(t[3][0].value, rat(2));
        assert_eq!(t[4][0].value, rat(2));

        let pi = vec![rat(1), rat(1), rat(1), rat(0), rat(0)];
        let t = truncate_bids(&inst, &pi);
        assert_eq!(t[0][0].value, rat(1));

        let over = vec![rat(3), rat(0), rat(0), rat(0), rat(0)];
        let t = truncate_bids(&inst, &over);
        assert_eq!(t[0][0].value, rat(0));
    }

    #[test]
    fn tie_break_prefers_smaller_id_sequence() {
        // Two disjoint-pair covers of equal welfare; ids (0,3) vs (1,2).
        let b = |bundle: Vec<u32>, v: i64| Bid::new(bundle, rat(v));
        let inst = Instance::new(
            2,
            0,
            vec![
                vec![b(vec![0], 1)],
                vec![b(vec![0], 1)],
                vec![b(vec![1], 1)],
                vec![b(vec![1], 1)],
            ],
        )
        .unwrap();
        let r = solve_instance(&inst, TieBreak::LexSmallest);
        assert_eq!(r.welfare, rat(2));
        assert_eq!(r.winners, vec![0, 2]);
        let r = solve_instance(&inst, TieBreak::LexLargest);
        assert_eq!(r.winners, vec![1, 3]);
    }

    #[test]
    fn branch_and_bound_matches_enumeration_on_chain() {
        let inst = chain3();
        let a = solve_instance(&inst, TieBreak::LexSmallest);
        let b = solve_wd_bruteforce(
            inst.num_slots(),
            inst.num_bidders(),
            &inst.bids,
            TieBreak::LexSmallest,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exhaustive_solver_refuses_large_input() {
        let bids: Vec<Vec<Bid>> = (0..26).map(|_| vec![Bid::new(vec![0], rat(1))]).collect();
        let err = solve_wd_bruteforce(1, 26, &bids, TieBreak::LexSmallest).unwrap_err();
        assert_eq!(err, WdError::BudgetExceeded { limit: 25, actual: 26 });
    }

    #[test]
    fn oracle_counts_each_solve_once() {
        let inst = chain3();
        let mut h = OracleHandle::with_initial(&inst, TieBreak::LexSmallest);
        assert_eq!(h.queries(), 1);
        h.solve(&inst.bids);
        assert_eq!(h.queries(), 2);
        let s: BTreeSet<usize> = [0, 1].into_iter().collect();
        h.coalition(&s);
        assert_eq!(h.queries(), 3);
    }
}
