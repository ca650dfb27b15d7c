//! Core data model: exact rational amounts, auction instances, allocations
//! and priced outcomes.
//!
//! All monetary quantities are arbitrary-precision rationals. Nothing in this
//! crate rounds; formatting for humans happens at the reporting layer.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use thiserror::Error;

/// Exact rational amount. Canonical form (reduced, positive denominator) is
/// maintained by the underlying representation.
pub type Rat = num_rational::BigRational;

/// Rational from an integer.
pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Rational from a numerator/denominator pair. Panics on zero denominator.
pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Parses "12", "-3", "12.75" or "51/4" into an exact rational.
pub fn parse_rat(s: &str) -> Result<Rat, ModelError> {
    let s = s.trim();
    let bad = || ModelError::BadNumber(s.to_string());
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let (sign, int_digits) = match int.as_bytes().first() {
            Some(b'-') => (-1, &int[1..]),
            Some(b'+') => (1, &int[1..]),
            _ => (1, int),
        };
        if !int_digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let int_part = if int_digits.is_empty() {
            BigInt::zero()
        } else {
            BigInt::from_str(int_digits).map_err(|_| bad())?
        };
        let frac_part = BigInt::from_str(frac).map_err(|_| bad())?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let mag = Rat::new(int_part * &scale + frac_part, scale);
        return Ok(if sign < 0 { -mag } else { mag });
    }
    let n = BigInt::from_str(s).map_err(|_| bad())?;
    Ok(Rat::from_integer(n))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("cannot parse number: {0:?}")]
    BadNumber(String),
    #[error("instance invalid: {0}")]
    InvalidInstance(String),
    #[error("utility vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("utility vector invalid: {0}")]
    InvalidUtilities(String),
}

/// One atomic bid: a bundle of good indices and a nonnegative value.
///
/// Bundles are kept sorted and duplicate-free; indices at or above the real
/// good count refer to dummy goods used to make a bidder's bids mutually
/// exclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bid {
    pub bundle: Vec<u32>,
    pub value: Rat,
}

impl Bid {
    pub fn new(mut bundle: Vec<u32>, value: Rat) -> Self {
        bundle.sort_unstable();
        bundle.dedup();
        Bid { bundle, value }
    }
}

/// A sealed-bid combinatorial auction instance. `bids[i]` lists bidder i's
/// mutually exclusive bids; at most one can be accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub num_goods: u32,
    pub num_dummy: u32,
    pub bids: Vec<Vec<Bid>>,
}

impl Instance {
    pub fn new(num_goods: u32, num_dummy: u32, bids: Vec<Vec<Bid>>) -> Result<Self, ModelError> {
        let inst = Instance { num_goods, num_dummy, bids };
        inst.validate()?;
        Ok(inst)
    }

    pub fn num_bidders(&self) -> usize {
        self.bids.len()
    }

    /// Total index space: real goods first, then dummy goods.
    pub fn num_slots(&self) -> usize {
        self.num_goods as usize + self.num_dummy as usize
    }

    pub fn total_bids(&self) -> usize {
        self.bids.iter().map(|b| b.len()).sum()
    }

    /// Global bid id of bidder `i`'s `k`-th bid: flattened bidder-major
    /// position. Stable under truncation, which preserves shape.
    pub fn bid_id(&self, bidder: usize, k: usize) -> usize {
        self.bids[..bidder].iter().map(|b| b.len()).sum::<usize>() + k
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let slots = self.num_slots();
        // Each dummy good may appear in the bids of a single bidder only.
        let mut dummy_owner: Vec<Option<usize>> = vec![None; self.num_dummy as usize];
        for (i, bids) in self.bids.iter().enumerate() {
            for bid in bids {
                if bid.bundle.is_empty() {
                    return Err(ModelError::InvalidInstance(format!(
                        "bidder {i} has a bid with an empty bundle"
                    )));
                }
                if bid.value.is_negative() {
                    return Err(ModelError::InvalidInstance(format!(
                        "bidder {i} has a bid with negative value"
                    )));
                }
                let mut prev: Option<u32> = None;
                for &g in &bid.bundle {
                    if (g as usize) >= slots {
                        return Err(ModelError::InvalidInstance(format!(
                            "bidder {i} references good {g}, but only {slots} exist"
                        )));
                    }
                    if prev.is_some_and(|p| p >= g) {
                        return Err(ModelError::InvalidInstance(format!(
                            "bidder {i} has an unsorted or duplicated bundle"
                        )));
                    }
                    prev = Some(g);
                    if g >= self.num_goods {
                        let d = (g - self.num_goods) as usize;
                        match dummy_owner[d] {
                            None => dummy_owner[d] = Some(i),
                            Some(owner) if owner != i => {
                                return Err(ModelError::InvalidInstance(format!(
                                    "dummy good {g} is used by bidders {owner} and {i}"
                                )));
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Value of bidder `i`'s bid `k`.
    pub fn bid_value(&self, i: usize, k: usize) -> &Rat {
        &self.bids[i][k].value
    }
}

/// Which bid, if any, each bidder won.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub assigned: Vec<Option<usize>>,
}

impl Allocation {
    pub fn empty(num_bidders: usize) -> Self {
        Allocation { assigned: vec![None; num_bidders] }
    }

    pub fn winners(&self) -> Vec<usize> {
        self.assigned
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|_| i))
            .collect()
    }

    pub fn is_winner(&self, i: usize) -> bool {
        self.assigned[i].is_some()
    }

    /// Accepted-bid value of bidder `i`, zero for losers.
    pub fn value_of(&self, inst: &Instance, i: usize) -> Rat {
        match self.assigned[i] {
            Some(k) => inst.bids[i][k].value.clone(),
            None => Rat::zero(),
        }
    }

    pub fn welfare(&self, inst: &Instance) -> Rat {
        self.assigned
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|k| inst.bids[i][k].value.clone()))
            .sum()
    }
}

/// Compares utility vectors in leximin order over the same bidder set.
///
/// `Greater` means `x` leximin-dominates `y`: at the first index where the
/// ascending rearrangements differ, `x` is larger. `Equal` means the sorted
/// vectors coincide.
pub fn leximin_compare(x: &[Rat], y: &[Rat]) -> Result<Ordering, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch(x.len(), y.len()));
    }
    let mut xs: Vec<&Rat> = x.iter().collect();
    let mut ys: Vec<&Rat> = y.iter().collect();
    xs.sort();
    ys.sort();
    for (a, b) in xs.iter().zip(&ys) {
        match a.cmp(b) {
            Ordering::Equal => continue,
            ord => return Ok(ord),
        }
    }
    Ok(Ordering::Equal)
}

/// Converts winner utilities into payments: a winner pays bid value minus
/// utility, losers pay nothing.
pub fn utilities_to_payments(
    inst: &Instance,
    alloc: &Allocation,
    utilities: &[Rat],
) -> Result<Vec<Rat>, ModelError> {
    validate_utilities(inst, alloc, utilities)?;
    Ok(utilities
        .iter()
        .enumerate()
        .map(|(i, u)| alloc.value_of(inst, i) - u)
        .collect())
}

/// Checks 0 <= u_i <= accepted bid value for winners and u_i = 0 for losers.
pub fn validate_utilities(
    inst: &Instance,
    alloc: &Allocation,
    utilities: &[Rat],
) -> Result<(), ModelError> {
    if utilities.len() != inst.num_bidders() {
        return Err(ModelError::LengthMismatch(utilities.len(), inst.num_bidders()));
    }
    for (i, u) in utilities.iter().enumerate() {
        match alloc.assigned[i] {
            Some(k) => {
                if u.is_negative() || *u > inst.bids[i][k].value {
                    return Err(ModelError::InvalidUtilities(format!(
                        "winner {i} has utility {u} outside [0, {}]",
                        inst.bids[i][k].value
                    )));
                }
            }
            None => {
                if !u.is_zero() {
                    return Err(ModelError::InvalidUtilities(format!(
                        "non-winner {i} has nonzero utility {u}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Pricing rules implemented by this crate. The string forms double as CLI
/// names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RuleId {
    PayAsBid,
    Vcg,
    Mrc,
    MrcVcg,
    MrcZero,
    FastCore,
    Blo,
}

impl RuleId {
    pub const ALL: [RuleId; 7] = [
        RuleId::PayAsBid,
        RuleId::Vcg,
        RuleId::Mrc,
        RuleId::MrcVcg,
        RuleId::MrcZero,
        RuleId::FastCore,
        RuleId::Blo,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RuleId::PayAsBid => "payasbid",
            RuleId::Vcg => "vcg",
            RuleId::Mrc => "mrc",
            RuleId::MrcVcg => "mrc-vcg",
            RuleId::MrcZero => "mrc-zero",
            RuleId::FastCore => "fastcore",
            RuleId::Blo => "blo",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RuleId::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown rule {s:?}"))
    }
}

/// A fully priced clearing outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaymentOutcome {
    pub rule: RuleId,
    pub allocation: Allocation,
    pub utilities: Vec<Rat>,
    pub payments: Vec<Rat>,
    /// Winner-determination solves performed to price this outcome,
    /// including the initial clearing solve.
    pub oracle_queries: u64,
}

impl PaymentOutcome {
    pub fn from_utilities(
        rule: RuleId,
        inst: &Instance,
        alloc: &Allocation,
        utilities: Vec<Rat>,
        oracle_queries: u64,
    ) -> Result<Self, ModelError> {
        let payments = utilities_to_payments(inst, alloc, &utilities)?;
        Ok(PaymentOutcome {
            rule,
            allocation: alloc.clone(),
            utilities,
            payments,
            oracle_queries,
        })
    }

    pub fn revenue(&self) -> Rat {
        self.payments.iter().sum()
    }
}
