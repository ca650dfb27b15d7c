//! Command-line front end: generate and parse CATS instances, clear them,
//! price them under the implemented rules, compare rules side by side,
//! re-check the pricing guarantees, and evaluate bid deviations.
//!
//! Exit codes are a stable contract: 0 on success, 1 when a verification
//! run finds a violation (or an internal error aborts the run), 2 for
//! usage, file, or parse problems. Set `AUCTION_LOG=trace` to watch the
//! increment searches probe and cut.

mod compare;
mod metrics;
mod verify;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use num_traits::{Signed, Zero};
use serde_json::json;

use auction_core::model::{parse_rat, ratio, Bid, Instance, Rat, RuleId};
use auction_core::rules::price;
use auction_core::wd::{solve_instance, TieBreak};
use auction_core::{generate, parse_cats, write_cats, Distribution, GeneratorConfig};

use compare::{metrics_json, render_json, render_text, run_compare};
use metrics::{compute_metrics, rational};
use verify::verify_files;

/// Problems caused by what the user passed in; reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(
    name = "auction",
    version,
    about = "Clear combinatorial auctions and price them under core-selecting rules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistArg {
    /// Independent random bundles of up to four goods
    UniformBundles,
    /// Bundles grown good by good with decaying continuation
    DecayBundles,
    /// Odd chain of singleton bidders bridged by pair bidders
    ChainAdversarial,
}

impl From<DistArg> for Distribution {
    fn from(d: DistArg) -> Distribution {
        match d {
            DistArg::UniformBundles => Distribution::UniformBundles,
            DistArg::DecayBundles => Distribution::DecayBundles,
            DistArg::ChainAdversarial => Distribution::ChainAdversarial,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance and write it as CATS text
    Generate {
        #[arg(long, value_enum)]
        dist: DistArg,
        #[arg(long)]
        goods: u32,
        /// Required unless --dist chain-adversarial (which implies it)
        #[arg(long)]
        bidders: Option<u32>,
        /// Required unless --dist chain-adversarial (which implies it)
        #[arg(long = "bids-per-bidder")]
        bids_per_bidder: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when omitted
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Clear an instance and print the welfare-optimal allocation
    Solve { file: PathBuf },
    /// Clear an instance and price it under one rule
    Price {
        file: PathBuf,
        /// payasbid, vcg, mrc, mrc-vcg, mrc-zero, fastcore or blo
        #[arg(long)]
        rule: String,
        /// Increment tolerance for fastcore, e.g. 0.01 or 1/100
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Price several instances under several rules and tabulate
    Compare {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Comma-separated rule names; all rules when omitted
        #[arg(long)]
        rules: Option<String>,
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Re-check the pricing guarantees against exhaustive references
    Verify {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Replace one bidder's bids, reprice, and report the utility change
    Deviate {
        file: PathBuf,
        #[arg(long)]
        bidder: usize,
        /// One bid as "<value> <good> <good>..."; repeat for XOR bids
        #[arg(long = "bid", required = true)]
        bids: Vec<String>,
        #[arg(long)]
        rule: String,
        #[arg(long)]
        epsilon: Option<String>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("AUCTION_LOG"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(if err.is::<UsageError>() { 2 } else { 1 });
        }
    }
}

fn load(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    parse_cats(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<(String, Instance)>> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), load(p)?)))
        .collect()
}

fn parse_rule(name: &str) -> Result<RuleId> {
    RuleId::from_str(name).map_err(usage)
}

/// Defaults to 1/100; an explicit nonpositive tolerance is rejected here
/// so it surfaces as a usage error.
fn parse_epsilon(arg: &Option<String>) -> Result<Rat> {
    let Some(text) = arg else {
        return Ok(ratio(1, 100));
    };
    let eps = parse_rat(text).map_err(|e| usage(e.to_string()))?;
    if !eps.is_positive() {
        return Err(usage(format!("epsilon must be positive, got {text}")));
    }
    Ok(eps)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Generate { dist, goods, bidders, bids_per_bidder, seed, output } => {
            let chain = dist == DistArg::ChainAdversarial;
            let need = |name: &str, v: Option<u32>| match v {
                Some(v) => Ok(v),
                None if chain => Ok(1), // implied by the chain length
                None => Err(usage(format!("--{name} is required for --dist {}", name_of(dist)))),
            };
            let config = GeneratorConfig {
                distribution: dist.into(),
                num_goods: goods,
                num_bidders: need("bidders", bidders)?,
                bids_per_bidder: need("bids-per-bidder", bids_per_bidder)?,
                seed,
            };
            let inst = generate(&config).map_err(|e| usage(e.to_string()))?;
            let text = write_cats(&inst);
            match output {
                Some(path) => fs::write(&path, text)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?,
                None => print!("{text}"),
            }
            Ok(0)
        }
        Command::Solve { file } => {
            let inst = load(&file)?;
            let wd = solve_instance(&inst, TieBreak::LexSmallest);
            println!("file: {}", file.display());
            println!("welfare: {}", rational(&wd.welfare));
            let winners = wd.allocation.winners();
            println!(
                "winners: {}",
                winners.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(" ")
            );
            for &w in &winners {
                let k = wd.allocation.assigned[w].expect("winners have an assigned bid");
                let bid = &inst.bids[w][k];
                println!(
                    "  bidder {w}: value {} for goods {}",
                    rational(&bid.value),
                    bid.bundle.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(" ")
                );
            }
            Ok(0)
        }
        Command::Price { file, rule, epsilon, json } => {
            let inst = load(&file)?;
            let rule = parse_rule(&rule)?;
            let eps = parse_epsilon(&epsilon)?;
            let wd = solve_instance(&inst, TieBreak::LexSmallest);
            let outcome = price(&inst, &wd.allocation, TieBreak::LexSmallest, rule, Some(&eps))?;
            let m = compute_metrics(&inst, &outcome);
            if json {
                let doc = json!({
                    "schema_version": 1,
                    "file": file.display().to_string(),
                    "rule": rule.to_string(),
                    "epsilon": if rule == RuleId::FastCore { Some(rational(&eps)) } else { None },
                    "welfare": rational(&wd.welfare),
                    "winners": wd.allocation.winners(),
                    "utilities": outcome.utilities.iter().map(rational).collect::<Vec<_>>(),
                    "payments": outcome.payments.iter().map(rational).collect::<Vec<_>>(),
                    "oracle_queries": outcome.oracle_queries,
                    "metrics": metrics_json(&m),
                });
                println!("{}", serde_json::to_string_pretty(&doc)?);
            } else {
                println!("file: {}", file.display());
                println!("rule: {rule}");
                println!("welfare: {}", rational(&wd.welfare));
                println!("bidder  utility  payment");
                for i in 0..inst.num_bidders() {
                    println!(
                        "{:<6}  {:<7}  {}",
                        i,
                        rational(&outcome.utilities[i]),
                        rational(&outcome.payments[i])
                    );
                }
                println!("revenue: {}", rational(&outcome.revenue()));
                println!("oracle queries: {}", outcome.oracle_queries);
                if let (Some(min), Some(std), Some(zero), Some(gini)) =
                    (&m.min_utility, &m.std, &m.zero_ratio, &m.gini)
                {
                    println!(
                        "winner stats: min {}, std {}, zero {}, gini {}",
                        rational(min),
                        metrics::decimal4(std),
                        metrics::decimal4(zero),
                        metrics::decimal4(gini)
                    );
                }
            }
            Ok(0)
        }
        Command::Compare { files, rules, epsilon, json } => {
            let named = load_all(&files)?;
            let rules = match rules {
                None => RuleId::ALL.to_vec(),
                Some(spec) => spec
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(parse_rule)
                    .collect::<Result<Vec<_>>>()?,
            };
            let eps = parse_epsilon(&epsilon)?;
            let report = run_compare(&named, &rules, &eps)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&render_json(&report))?);
            } else {
                print!("{}", render_text(&report));
            }
            Ok(0)
        }
        Command::Verify { files } => {
            let named = load_all(&files)?;
            let outcome = verify_files(&named)?;
            print!("{}", outcome.text);
            Ok(if outcome.failures == 0 { 0 } else { 1 })
        }
        Command::Deviate { file, bidder, bids, rule, epsilon } => {
            let inst = load(&file)?;
            let rule = parse_rule(&rule)?;
            let eps = parse_epsilon(&epsilon)?;
            if bidder >= inst.num_bidders() {
                return Err(usage(format!(
                    "bidder {bidder} out of range, instance has {}",
                    inst.num_bidders()
                )));
            }
            let altered_bids: Vec<Bid> =
                bids.iter().map(|spec| parse_bid(spec)).collect::<Result<_>>()?;
            let mut all = inst.bids.clone();
            all[bidder] = altered_bids;
            let altered = Instance::new(inst.num_goods, inst.num_dummy, all)
                .map_err(|e| usage(e.to_string()))?;

            let tie = TieBreak::LexSmallest;
            let before_wd = solve_instance(&inst, tie);
            let before = price(&inst, &before_wd.allocation, tie, rule, Some(&eps))?;
            let after_wd = solve_instance(&altered, tie);
            let after = price(&altered, &after_wd.allocation, tie, rule, Some(&eps))?;

            // Utility against the original values: the reported alternate
            // bids set the payment, the original bid on the same bundle
            // (worth 0 when there is none) sets the value received.
            let true_after = match after_wd.allocation.assigned[bidder] {
                None => Rat::zero(),
                Some(k) => {
                    let bundle: BTreeSet<u32> =
                        altered.bids[bidder][k].bundle.iter().copied().collect();
                    let true_value = inst.bids[bidder]
                        .iter()
                        .find(|b| b.bundle.iter().copied().collect::<BTreeSet<u32>>() == bundle)
                        .map(|b| b.value.clone())
                        .unwrap_or_else(Rat::zero);
                    true_value - &after.payments[bidder]
                }
            };
            let true_before = before.utilities[bidder].clone();
            let delta = &true_after - &true_before;
            println!("file: {}", file.display());
            println!("rule: {rule}");
            println!(
                "bidder {bidder}: utility {} -> {} (delta {})",
                rational(&true_before),
                rational(&true_after),
                rational(&delta)
            );
            Ok(0)
        }
    }
}

fn name_of(d: DistArg) -> &'static str {
    match d {
        DistArg::UniformBundles => "uniform-bundles",
        DistArg::DecayBundles => "decay-bundles",
        DistArg::ChainAdversarial => "chain-adversarial",
    }
}

/// "<value> <good> <good>...", e.g. "1 1" or "5/2 0 3".
fn parse_bid(spec: &str) -> Result<Bid> {
    let mut tokens = spec.split_whitespace();
    let value = tokens
        .next()
        .ok_or_else(|| usage(format!("empty bid spec {spec:?}")))
        .and_then(|v| parse_rat(v).map_err(|e| usage(e.to_string())))?;
    if value.is_negative() {
        return Err(usage(format!("bid value must be nonnegative in {spec:?}")));
    }
    let bundle: Vec<u32> = tokens
        .map(|t| t.parse().map_err(|_| usage(format!("bad good index {t:?} in {spec:?}"))))
        .collect::<Result<_>>()?;
    if bundle.is_empty() {
        return Err(usage(format!("bid {spec:?} names no goods")));
    }
    Ok(Bid::new(bundle, value))
}
