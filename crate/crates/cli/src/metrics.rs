//! Winner statistics behind the comparison tables.
//!
//! Revenue, totals and minima stay exact rationals end to end. Spread
//! statistics (standard deviation, zero share, Gini) are exact up to the
//! final rendering, which rounds half-even to four decimals; the standard
//! deviation is the one place a square root enters, and it is extracted
//! with integer arithmetic so the printed digits are exact too.

use std::cmp::Ordering;

use auction_core::model::{Instance, PaymentOutcome, Rat};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

/// Statistics of one priced outcome, over winners only. The winner fields
/// are `None` when nobody won.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metrics {
    pub winners: usize,
    pub revenue: Rat,
    pub total_utility: Rat,
    pub min_utility: Option<Rat>,
    /// Population standard deviation of winner utilities, already rounded
    /// to the four decimals it is rendered with.
    pub std: Option<Rat>,
    pub zero_ratio: Option<Rat>,
    pub gini: Option<Rat>,
}

pub fn compute_metrics(inst: &Instance, outcome: &PaymentOutcome) -> Metrics {
    let winners = outcome.allocation.winners();
    let revenue = outcome.revenue();
    let total_utility: Rat = outcome.utilities.iter().sum();
    debug_assert_eq!(
        &revenue + &total_utility,
        outcome.allocation.welfare(inst),
        "payments and utilities must split the welfare"
    );
    if winners.is_empty() {
        return Metrics {
            winners: 0,
            revenue,
            total_utility,
            min_utility: None,
            std: None,
            zero_ratio: None,
            gini: None,
        };
    }

    let u: Vec<&Rat> = winners.iter().map(|&w| &outcome.utilities[w]).collect();
    let count = Rat::from_integer(BigInt::from(u.len()));
    let min_utility = u.iter().min().map(|&m| m.clone());
    let mean = &total_utility / &count;
    let variance: Rat =
        u.iter().map(|&x| (x - &mean) * (x - &mean)).sum::<Rat>() / &count;
    let zeros = u.iter().filter(|x| x.is_zero()).count();
    let zero_ratio = Rat::from_integer(BigInt::from(zeros)) / &count;
    let gini = if total_utility.is_zero() {
        Rat::zero()
    } else {
        let spread: Rat = u
            .iter()
            .flat_map(|&a| u.iter().map(move |&b| (a - b).abs()))
            .sum();
        spread / (Rat::from_integer(BigInt::from(2 * u.len())) * &total_utility)
    };

    Metrics {
        winners: u.len(),
        revenue,
        total_utility,
        min_utility,
        std: Some(rounded_sqrt(&variance)),
        zero_ratio: Some(zero_ratio),
        gini: Some(gini),
    }
}

const SCALE: u32 = 4;

fn pow10(exp: u32) -> BigInt {
    BigInt::from(10u32).pow(exp)
}

/// `n / 10^SCALE` written as a plain decimal.
fn format_scaled(n: BigInt) -> String {
    let (whole, frac) = n.div_rem(&pow10(SCALE));
    format!("{whole}.{:04}", frac)
}

/// Rounds a nonnegative rational half-even to four decimals.
pub fn decimal4(r: &Rat) -> String {
    assert!(!r.is_negative(), "statistics are nonnegative");
    let scaled = r * Rat::from_integer(pow10(SCALE));
    let (q, rem) = scaled.numer().div_rem(scaled.denom());
    let twice = BigInt::from(2) * rem;
    let q = match twice.cmp(scaled.denom()) {
        Ordering::Less => q,
        Ordering::Greater => q + 1,
        Ordering::Equal => {
            if q.is_even() {
                q
            } else {
                q + 1
            }
        }
    };
    format_scaled(q)
}

/// sqrt(r) rounded half-even to four decimals, returned as the exact
/// rational it prints as.
///
/// With r = p/q, the scaled root is sqrt(p 10^8 / q), whose floor equals
/// isqrt(p 10^8 q) div q; the half-way test squares out to comparing
/// 4 p 10^8 against q (2k+1)^2, all in integers.
fn rounded_sqrt(r: &Rat) -> Rat {
    assert!(!r.is_negative(), "variance is nonnegative");
    let a = r.numer() * pow10(2 * SCALE);
    let k: BigInt = (&a * r.denom()).sqrt() / r.denom();
    let midpoint_sq = r.denom() * (BigInt::from(2) * &k + BigInt::one()).pow(2);
    let rounded = match (BigInt::from(4) * a).cmp(&midpoint_sq) {
        Ordering::Greater => k + 1,
        Ordering::Less => k,
        Ordering::Equal => {
            if k.is_even() {
                k
            } else {
                k + 1
            }
        }
    };
    Rat::new(rounded, pow10(SCALE))
}

/// Exact rendering: integers bare, everything else as n/d.
pub fn rational(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
