//! Exact clearing and core-selecting pricing for combinatorial auctions.
//!
//! Bidders submit exclusive-or collections of package bids; clearing picks
//! the welfare-maximizing compatible set. Pricing then chooses how much of
//! the generated surplus each winner keeps, constrained to the core so
//! that no coalition of bidders would rather renegotiate with the seller.
//! All arithmetic is in arbitrary-precision rationals end to end: results
//! are exact vertices and exact bounds, never floating-point estimates.
//!
//! The interesting exports are in [`rules`]: classic rules (pay-as-bid,
//! VCG), the minimum-revenue family, the bisection-based approximate rule,
//! and the exact leximin-optimal rule driven by [`rules::cgs_search`].
//! [`core_polytope`] holds the separation oracle the rules share plus
//! exhaustive reference solvers that tests verify everything against.

pub mod cats;
pub mod core_polytope;
pub mod lp;
pub mod model;
pub mod qp;
pub mod rules;
pub mod wd;

pub use cats::{generate, generate_chain, parse_cats, write_cats, Distribution, GeneratorConfig};
pub use core_polytope::{brute_force_blo, brute_force_mrc, enumerate_rows, is_in_core};
pub use model::{leximin_compare, Allocation, Bid, Instance, PaymentOutcome, Rat, RuleId};
pub use rules::{
    blo_wf_cgs, blo_wf_cgs_cr, blo_with_trace, cgs_search, fast_core, mrc_ccg, mrc_quadratic,
    pay_as_bid, price, vcg, WaterfillState,
};
pub use wd::{solve_instance, solve_wd, OracleHandle, TieBreak, WdResult};
