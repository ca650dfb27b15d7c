//! CATS-style text format and seeded instance generators.
//!
//! Files consist of `%` comment lines, three headers (`goods N`, `bids N`,
//! `dummy N`, any order, before the first bid line) and one line per bid:
//! `<id> <value> <g_1> ... <g_k> #`. Dummy goods occupy indices
//! `goods..goods+dummy`; bids that share a dummy good belong to one bidder
//! and are mutually exclusive. Values may be integers, decimals, or `p/q`
//! rationals (the last is an extension so that round trips stay exact).
//!
//! Generators are pure functions of their configuration; the stream cipher
//! ChaCha8 keyed by the seed drives all randomness, so equal configs give
//! byte-identical instances on every platform.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{parse_rat, Bid, Instance, Rat};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: malformed header: {detail}")]
    BadHeader { line: usize, detail: String },
    #[error("missing header: {0}")]
    MissingHeader(&'static str),
    #[error("line {line}: malformed bid: {detail}")]
    BadBid { line: usize, detail: String },
    #[error("line {line}: good index {index} out of range (have {slots} incl. dummies)")]
    GoodOutOfRange { line: usize, index: u64, slots: usize },
    #[error("line {line}: duplicate bid id {id}")]
    DuplicateBidId { line: usize, id: u64 },
    #[error("line {line}: dummy good {good} already belongs to another bidder group")]
    DummyInTwoGroups { line: usize, good: u32 },
    #[error("header declares {declared} bids but file contains {actual}")]
    BidCountMismatch { declared: usize, actual: usize },
    #[error("line {line}: {source}")]
    Invalid { line: usize, #[source] source: crate::model::ModelError },
}

/// Parses CATS text into an instance. Bidders are formed by grouping bids on
/// shared dummy goods, in order of first appearance; a bid that names dummy
/// goods from two existing groups is an error.
pub fn parse_cats(text: &str) -> Result<Instance, ParseError> {
    let mut goods: Option<u64> = None;
    let mut bids_declared: Option<u64> = None;
    let mut dummy: u64 = 0;

    let mut bidders: Vec<Vec<Bid>> = Vec::new();
    let mut dummy_owner: BTreeMap<u32, usize> = BTreeMap::new();
    let mut seen_ids: BTreeMap<u64, usize> = BTreeMap::new();
    let mut in_bids = false;
    let mut bid_count = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('%') {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let first = tokens.next().unwrap();

        if !in_bids {
            match first {
                "goods" | "bids" | "dummy" => {
                    let value = tokens.next().ok_or_else(|| ParseError::BadHeader {
                        line,
                        detail: format!("`{first}` needs a count"),
                    })?;
                    if tokens.next().is_some() {
                        return Err(ParseError::BadHeader {
                            line,
                            detail: "trailing tokens after header".into(),
                        });
                    }
                    let n: u64 = value.parse().map_err(|_| ParseError::BadHeader {
                        line,
                        detail: format!("`{value}` is not a count"),
                    })?;
                    match first {
                        "goods" => goods = Some(n),
                        "bids" => bids_declared = Some(n),
                        _ => dummy = n,
                    }
                    continue;
                }
                _ => {
                    // First non-header line: headers must be complete.
                    if goods.is_none() {
                        return Err(ParseError::MissingHeader("goods"));
                    }
                    if bids_declared.is_none() {
                        return Err(ParseError::MissingHeader("bids"));
                    }
                    in_bids = true;
                }
            }
        }

        let num_goods = goods.unwrap();
        let slots = (num_goods + dummy) as usize;

        let id: u64 = first.parse().map_err(|_| ParseError::BadBid {
            line,
            detail: format!("bid id `{first}` is not an integer"),
        })?;
        if let Some(prev) = seen_ids.insert(id, line) {
            let _ = prev;
            return Err(ParseError::DuplicateBidId { line, id });
        }
        let value_tok = tokens
            .next()
            .ok_or_else(|| ParseError::BadBid { line, detail: "missing value".into() })?;
        let value = parse_rat(value_tok)
            .map_err(|e| ParseError::BadBid { line, detail: e.to_string() })?;
        if value.is_negative() {
            return Err(ParseError::BadBid { line, detail: "negative value".into() });
        }

        let mut bundle: Vec<u32> = Vec::new();
        let mut terminated = false;
        for tok in tokens {
            if tok == "#" {
                terminated = true;
                break;
            }
            let g: u64 = tok.parse().map_err(|_| ParseError::BadBid {
                line,
                detail: format!("good index `{tok}` is not an integer"),
            })?;
            if g >= slots as u64 {
                return Err(ParseError::GoodOutOfRange { line, index: g, slots });
            }
            let g = g as u32;
            if bundle.contains(&g) {
                return Err(ParseError::BadBid {
                    line,
                    detail: format!("good {g} listed twice"),
                });
            }
            bundle.push(g);
        }
        if !terminated {
            return Err(ParseError::BadBid { line, detail: "missing `#` terminator".into() });
        }
        if bundle.is_empty() {
            return Err(ParseError::BadBid { line, detail: "empty bundle".into() });
        }

        let dummies: Vec<u32> =
            bundle.iter().copied().filter(|&g| g as u64 >= num_goods).collect();
        let mut owners: Vec<usize> =
            dummies.iter().filter_map(|g| dummy_owner.get(g).copied()).collect();
        owners.sort_unstable();
        owners.dedup();
        let bidder = match owners.len() {
            0 => {
                bidders.push(Vec::new());
                bidders.len() - 1
            }
            1 => owners[0],
            _ => {
                let clash = dummies
                    .iter()
                    .copied()
                    .find(|g| dummy_owner.get(g).is_some_and(|o| *o != owners[0]))
                    .unwrap();
                return Err(ParseError::DummyInTwoGroups { line, good: clash });
            }
        };
        for g in dummies {
            dummy_owner.insert(g, bidder);
        }
        bidders[bidder].push(Bid::new(bundle, value));
        bid_count += 1;
    }

    let num_goods = goods.ok_or(ParseError::MissingHeader("goods"))?;
    let declared = bids_declared.ok_or(ParseError::MissingHeader("bids"))? as usize;
    if declared != bid_count {
        return Err(ParseError::BidCountMismatch { declared, actual: bid_count });
    }
    Instance::new(num_goods as u32, dummy as u32, bidders)
        .map_err(|source| ParseError::Invalid { line: 0, source })
}

/// Value in CATS syntax: integer, exact decimal when the denominator divides
/// a power of ten, `p/q` otherwise.
fn format_value(v: &Rat) -> String {
    if v.denom().is_one() {
        return v.numer().to_string();
    }
    // Exact decimal iff denom = 2^a 5^b; cap the probe to keep it cheap.
    let mut d = v.denom().clone();
    let mut twos = 0u32;
    let mut fives = 0u32;
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&d % &two).is_zero() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if d.is_one() && twos <= 30 && fives <= 30 {
        let places = twos.max(fives);
        let scaled = v.numer() * BigInt::from(10u32).pow(places) / v.denom();
        let neg = scaled.is_negative();
        let digits = scaled.abs().to_string();
        let digits = format!("{:0>width$}", digits, width = places as usize + 1);
        let (int_part, frac_part) = digits.split_at(digits.len() - places as usize);
        format!("{}{}.{}", if neg { "-" } else { "" }, int_part, frac_part)
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Serializes an instance to CATS text. Bidders with several bids that do not
/// already share a dummy good get a fresh one appended, so mutual exclusivity
/// survives the trip through the flat format; instances that already carry
/// dummies (as generated and parsed ones do) round-trip unchanged.
pub fn write_cats(inst: &Instance) -> String {
    let mut extra_dummy = 0u32;
    let mut extra: Vec<Option<u32>> = vec![None; inst.num_bidders()];
    for (i, bids) in inst.bids.iter().enumerate() {
        if bids.len() > 1 {
            let shared = bids
                .iter()
                .map(|b| {
                    b.bundle
                        .iter()
                        .copied()
                        .filter(|&g| g >= inst.num_goods)
                        .collect::<Vec<_>>()
                })
                .reduce(|acc, s| acc.into_iter().filter(|g| s.contains(g)).collect())
                .unwrap_or_default();
            if shared.is_empty() {
                extra[i] = Some(inst.num_goods + inst.num_dummy + extra_dummy);
                extra_dummy += 1;
            }
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "goods {}", inst.num_goods);
    let _ = writeln!(out, "bids {}", inst.total_bids());
    let _ = writeln!(out, "dummy {}", inst.num_dummy + extra_dummy);
    let mut id = 0usize;
    for (i, bids) in inst.bids.iter().enumerate() {
        for bid in bids {
            let _ = write!(out, "{} {}", id, format_value(&bid.value));
            for &g in &bid.bundle {
                let _ = write!(out, " {g}");
            }
            if let Some(d) = extra[i] {
                let _ = write!(out, " {d}");
            }
            let _ = writeln!(out, " #");
            id += 1;
        }
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    /// Independent bundles of up to four goods, integer values in [1, 100].
    UniformBundles,
    /// Bundles grown with continuation probability 0.55, value roughly
    /// proportional to bundle size.
    DecayBundles,
    /// Worst-case chain family; `num_goods` is the chain length and must be
    /// odd and at least three. Bidder and bid counts are implied.
    ChainAdversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub distribution: Distribution,
    pub num_goods: u32,
    pub num_bidders: u32,
    pub bids_per_bidder: u32,
    pub seed: u64,
}

const DECAY_CONTINUE_NUM: u32 = 55;
const DECAY_CONTINUE_DEN: u32 = 100;

/// Draws an instance. Pure in the config: equal configs give identical
/// instances.
pub fn generate(config: &GeneratorConfig) -> Result<Instance, GenError> {
    if config.distribution == Distribution::ChainAdversarial {
        return generate_chain(config.num_goods);
    }
    if config.num_goods == 0 {
        return Err(GenError::InvalidConfig("need at least one good".into()));
    }
    if config.num_bidders == 0 {
        return Err(GenError::InvalidConfig("need at least one bidder".into()));
    }
    if config.bids_per_bidder == 0 {
        return Err(GenError::InvalidConfig("need at least one bid per bidder".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let goods = config.num_goods;
    // One dummy good per bidder keeps multi-bid bidders XOR in the flat
    // format; single-bid bidders need none.
    let multi = config.bids_per_bidder > 1;
    let num_dummy = if multi { config.num_bidders } else { 0 };

    let mut bidders = Vec::with_capacity(config.num_bidders as usize);
    for i in 0..config.num_bidders {
        let mut bids = Vec::with_capacity(config.bids_per_bidder as usize);
        for _ in 0..config.bids_per_bidder {
            let (mut bundle, value) = match config.distribution {
                Distribution::UniformBundles => {
                    let size = rng.gen_range(1..=4.min(goods));
                    (draw_bundle(&mut rng, goods, size), Rat::from_integer(rng.gen_range(1..=100).into()))
                }
                Distribution::DecayBundles => {
                    let mut size = 1;
                    while size < goods
                        && rng.gen_range(0..DECAY_CONTINUE_DEN) < DECAY_CONTINUE_NUM
                    {
                        size += 1;
                    }
                    let per_good = rng.gen_range(8..=12);
                    (
                        draw_bundle(&mut rng, goods, size),
                        Rat::from_integer((u64::from(size) * per_good).into()),
                    )
                }
                Distribution::ChainAdversarial => unreachable!(),
            };
            if multi {
                bundle.push(goods + i);
            }
            bids.push(Bid::new(bundle, value));
        }
        bidders.push(bids);
    }
    let inst = Instance { num_goods: goods, num_dummy, bids: bidders };
    debug_assert!(inst.validate().is_ok());
    Ok(inst)
}

fn draw_bundle(rng: &mut ChaCha8Rng, goods: u32, size: u32) -> Vec<u32> {
    let mut bundle = Vec::with_capacity(size as usize);
    while bundle.len() < size as usize {
        let g = rng.gen_range(0..goods);
        if !bundle.contains(&g) {
            bundle.push(g);
        }
    }
    bundle
}

/// Chain family of odd length k: goods g_0..g_{k-1}, one bidder of value 2
/// per single good, and k-1 bridge bidders of value 2 on each adjacent pair.
/// Singletons clear; every efficient-revenue rule must zero out alternating
/// winners while the even split keeps all of them strictly positive.
pub fn generate_chain(k: u32) -> Result<Instance, GenError> {
    if k < 3 || k.is_multiple_of(2) {
        return Err(GenError::InvalidConfig(format!(
            "chain length must be odd and >= 3, got {k}"
        )));
    }
    let two = Rat::from_integer(2.into());
    let mut bidders: Vec<Vec<Bid>> = Vec::with_capacity(2 * k as usize - 1);
    for j in 0..k {
        bidders.push(vec![Bid::new(vec![j], two.clone())]);
    }
    for j in 0..k - 1 {
        bidders.push(vec![Bid::new(vec![j, j + 1], two.clone())]);
    }
    Ok(Instance { num_goods: k, num_dummy: 0, bids: bidders })
}
