//! Re-derives the pricing guarantees on concrete instances and reports
//! pass/fail per check. Exhaustive references cap how large an instance
//! can be checked; anything larger is skipped and flagged.

use anyhow::Result;
use auction_core::core_polytope::{brute_force_blo, brute_force_mrc, ENUM_WINNER_LIMIT};
use auction_core::model::{rat, ratio, Instance, Rat};
use auction_core::rules::{blo_with_trace, mrc_ccg, vcg};
use auction_core::wd::{solve_instance, TieBreak};
use auction_core::generate_chain;
use num_traits::Zero;

use crate::metrics::rational;

pub struct VerifyOutcome {
    pub text: String,
    pub failures: usize,
}

struct Checker {
    out: String,
    checks: usize,
    failures: usize,
}

impl Checker {
    fn record(&mut self, ok: bool, line: &str) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
        }
        let tag = if ok { "pass" } else { "FAIL" };
        self.out.push_str(&format!("  {tag}  {line}\n"));
    }
}

/// The chain length whose generated instance equals `inst`, if any.
fn chain_length(inst: &Instance) -> Option<u32> {
    let n = inst.num_bidders();
    if n < 5 || n.is_multiple_of(2) {
        return None;
    }
    let k = (n as u32).div_ceil(2);
    match generate_chain(k) {
        Ok(chain) if chain == *inst => Some(k),
        _ => None,
    }
}

fn total_utility_floor(winners: usize) -> Rat {
    let w = winners as i64;
    ratio(4 * w, w * w + 2 * w + (w % 2))
}

pub fn verify_files(named: &[(String, Instance)]) -> Result<VerifyOutcome> {
    let tie = TieBreak::LexSmallest;
    let mut c = Checker { out: String::new(), checks: 0, failures: 0 };
    let mut skipped = 0usize;

    for (file, inst) in named {
        let wd = solve_instance(inst, tie);
        let winners = wd.allocation.winners();
        c.out.push_str(&format!(
            "{file}: {} winners, welfare {}\n",
            winners.len(),
            rational(&wd.welfare)
        ));
        if winners.len() > ENUM_WINNER_LIMIT {
            skipped += 1;
            c.out.push_str(&format!(
                "  skip  {} winners exceed the exhaustive reference limit of {ENUM_WINNER_LIMIT}\n",
                winners.len()
            ));
            continue;
        }

        let alloc = &wd.allocation;
        let (blo, trace) = blo_with_trace(inst, alloc, tie, true)?;
        let reference = brute_force_blo(inst, alloc, tie)?;
        c.record(
            blo.utilities == reference,
            "leximin point equals the progressive-filling reference",
        );

        let marginal = vcg(inst, alloc, tie)?;
        let share = rat(winners.len() as i64);
        let floor_ok = winners.iter().all(|&w| {
            blo.utilities[w] >= &marginal.utilities[w] / &share
                && (blo.utilities[w].is_zero() == marginal.utilities[w].is_zero())
        });
        c.record(
            floor_ok,
            &format!("every winner keeps at least 1/{} of its marginal contribution", winners.len()),
        );

        let mrc = mrc_ccg(inst, alloc, tie)?;
        let blo_total: Rat = blo.utilities.iter().sum();
        let mrc_total: Rat = mrc.utilities.iter().sum();
        let floor = total_utility_floor(winners.len());
        c.record(
            blo_total >= &floor * &mrc_total,
            &format!(
                "total utility {} is at least {} of the revenue-minimal total {}",
                rational(&blo_total),
                rational(&floor),
                rational(&mrc_total)
            ),
        );

        let budget = (winners.len() * (winners.len() + 1) / 2 + 1) as u64;
        c.record(
            blo.oracle_queries <= budget,
            &format!("pricing used {} of {} allowed clearing calls", blo.oracle_queries, budget),
        );
        c.record(
            trace.rounds.iter().all(|r| r.queries <= r.active_before as u64),
            "no increment search queried more often than it had active winners",
        );

        if let Some(k) = chain_length(inst) {
            let zeros = |u: &[Rat]| winners.iter().filter(|&&w| u[w].is_zero()).count();
            let mrc_zeros = zeros(&mrc.utilities);
            let ok = mrc_zeros >= (k as usize) / 2
                && zeros(&blo.utilities) == 0
                && mrc_zeros == zeros(&brute_force_mrc(inst, alloc, tie)?)
                && zeros(&reference) == 0;
            c.record(
                ok,
                &format!(
                    "chain of {k}: revenue minimization zeroes {mrc_zeros} of {k} winners, the leximin point none"
                ),
            );
        }
    }

    c.out.push_str(&format!(
        "summary: {} checks, {} failures, {} skipped\n",
        c.checks, c.failures, skipped
    ));
    Ok(VerifyOutcome { text: c.out, failures: c.failures })
}
