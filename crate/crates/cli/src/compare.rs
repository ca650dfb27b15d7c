//! Side-by-side rule comparison over a batch of instances.

use anyhow::Result;
use auction_core::model::{Instance, Rat, RuleId};
use auction_core::rules::price;
use auction_core::wd::{solve_instance, TieBreak};
use num_bigint::BigInt;
use serde_json::json;

use crate::metrics::{compute_metrics, decimal4, rational, Metrics};

pub struct ComparisonRow {
    pub rule: RuleId,
    pub metrics: Metrics,
    pub oracle_queries: u64,
}

pub struct InstanceReport {
    pub file: String,
    pub welfare: Rat,
    pub winners: usize,
    pub rows: Vec<ComparisonRow>,
}

pub struct CompareReport {
    pub rules: Vec<RuleId>,
    pub epsilon: Rat,
    pub instances: Vec<InstanceReport>,
}

pub fn run_compare(
    named: &[(String, Instance)],
    rules: &[RuleId],
    epsilon: &Rat,
) -> Result<CompareReport> {
    let mut instances = Vec::with_capacity(named.len());
    for (file, inst) in named {
        let wd = solve_instance(inst, TieBreak::LexSmallest);
        let mut rows = Vec::with_capacity(rules.len());
        for &rule in rules {
            let outcome = price(inst, &wd.allocation, TieBreak::LexSmallest, rule, Some(epsilon))?;
            rows.push(ComparisonRow {
                rule,
                metrics: compute_metrics(inst, &outcome),
                oracle_queries: outcome.oracle_queries,
            });
        }
        instances.push(InstanceReport {
            file: file.clone(),
            welfare: wd.welfare,
            winners: wd.winners.len(),
            rows,
        });
    }
    Ok(CompareReport {
        rules: rules.to_vec(),
        epsilon: epsilon.clone(),
        instances,
    })
}

/// Per-rule means. Exact fields are averaged over every instance; the
/// winner statistics are averaged over the instances that had winners.
struct RuleAverage {
    rule: RuleId,
    instances: usize,
    revenue: Rat,
    total_utility: Rat,
    min_utility: Option<Rat>,
    std: Option<Rat>,
    zero_ratio: Option<Rat>,
    gini: Option<Rat>,
}

fn averages(report: &CompareReport) -> Vec<RuleAverage> {
    report
        .rules
        .iter()
        .map(|&rule| {
            let rows: Vec<&ComparisonRow> = report
                .instances
                .iter()
                .flat_map(|i| i.rows.iter().filter(|r| r.rule == rule))
                .collect();
            let count = Rat::from_integer(BigInt::from(rows.len().max(1)));
            let mean_opt = |pick: fn(&Metrics) -> Option<&Rat>| -> Option<Rat> {
                let present: Vec<&Rat> = rows.iter().filter_map(|r| pick(&r.metrics)).collect();
                if present.is_empty() {
                    return None;
                }
                let n = Rat::from_integer(BigInt::from(present.len()));
                Some(present.into_iter().sum::<Rat>() / n)
            };
            RuleAverage {
                rule,
                instances: rows.len(),
                revenue: rows.iter().map(|r| &r.metrics.revenue).sum::<Rat>() / &count,
                total_utility: rows.iter().map(|r| &r.metrics.total_utility).sum::<Rat>()
                    / &count,
                min_utility: mean_opt(|m| m.min_utility.as_ref()),
                std: mean_opt(|m| m.std.as_ref()),
                zero_ratio: mean_opt(|m| m.zero_ratio.as_ref()),
                gini: mean_opt(|m| m.gini.as_ref()),
            }
        })
        .collect()
}

const ROW_HEADERS: [&str; 8] =
    ["rule", "revenue", "total", "min", "std", "zero", "gini", "queries"];
const AVG_HEADERS: [&str; 8] =
    ["rule", "revenue", "total", "min", "std", "zero", "gini", "instances"];

fn metric_cells(m: &Metrics) -> [String; 6] {
    let opt_rat = |v: &Option<Rat>| v.as_ref().map_or("-".into(), rational);
    let opt_dec = |v: &Option<Rat>| v.as_ref().map_or("-".into(), decimal4);
    [
        rational(&m.revenue),
        rational(&m.total_utility),
        opt_rat(&m.min_utility),
        opt_dec(&m.std),
        opt_dec(&m.zero_ratio),
        opt_dec(&m.gini),
    ]
}

fn render_table(out: &mut String, header_indent: &str, headers: &[&str; 8], rows: &[[String; 8]]) {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    out.push_str(header_indent);
    for (i, h) in headers.iter().enumerate() {
        out.push_str(&format!("{:<width$}  ", h, width = widths[i]));
    }
    out.truncate(out.trim_end().len());
    out.push('\n');
    for row in rows {
        out.push_str(header_indent);
        for (i, cell) in row.iter().enumerate() {
            out.push_str(&format!("{:<width$}  ", cell, width = widths[i]));
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
    }
}

pub fn render_text(report: &CompareReport) -> String {
    let mut out = String::new();
    if report.rules.is_empty() || report.instances.is_empty() {
        out.push_str("nothing to compare\n");
        return out;
    }
    for inst in &report.instances {
        out.push_str(&format!(
            "{} (welfare {}, {} winners)\n",
            inst.file,
            rational(&inst.welfare),
            inst.winners
        ));
        let rows: Vec<[String; 8]> = inst
            .rows
            .iter()
            .map(|r| {
                let m = metric_cells(&r.metrics);
                [
                    r.rule.to_string(),
                    m[0].clone(),
                    m[1].clone(),
                    m[2].clone(),
                    m[3].clone(),
                    m[4].clone(),
                    m[5].clone(),
                    r.oracle_queries.to_string(),
                ]
            })
            .collect();
        render_table(&mut out, "  ", &ROW_HEADERS, &rows);
        out.push('\n');
    }

    let n = report.instances.len();
    out.push_str(&format!(
        "averages over {n} instance{}\n",
        if n == 1 { "" } else { "s" }
    ));
    let avg_rows: Vec<[String; 8]> = averages(report)
        .iter()
        .map(|a| {
            let opt_rat = |v: &Option<Rat>| v.as_ref().map_or("-".into(), rational);
            let opt_dec = |v: &Option<Rat>| v.as_ref().map_or("-".into(), decimal4);
            [
                a.rule.to_string(),
                rational(&a.revenue),
                rational(&a.total_utility),
                opt_rat(&a.min_utility),
                opt_dec(&a.std),
                opt_dec(&a.zero_ratio),
                opt_dec(&a.gini),
                a.instances.to_string(),
            ]
        })
        .collect();
    render_table(&mut out, "  ", &AVG_HEADERS, &avg_rows);
    out
}

pub fn metrics_json(m: &Metrics) -> serde_json::Value {
    json!({
        "winners": m.winners,
        "revenue": rational(&m.revenue),
        "total_utility": rational(&m.total_utility),
        "min_utility": m.min_utility.as_ref().map(rational),
        "std": m.std.as_ref().map(decimal4),
        "zero_ratio": m.zero_ratio.as_ref().map(decimal4),
        "gini": m.gini.as_ref().map(decimal4),
    })
}

pub fn render_json(report: &CompareReport) -> serde_json::Value {
    json!({
        "schema_version": 1,
        "epsilon": rational(&report.epsilon),
        "rules": report.rules.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
        "instances": report.instances.iter().map(|inst| json!({
            "file": inst.file,
            "welfare": rational(&inst.welfare),
            "winners": inst.winners,
            "rows": inst.rows.iter().map(|r| {
                let mut row = metrics_json(&r.metrics);
                let map = row.as_object_mut().unwrap();
                map.insert("rule".into(), json!(r.rule.to_string()));
                map.insert("oracle_queries".into(), json!(r.oracle_queries));
                row
            }).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "averages": averages(report).iter().map(|a| json!({
            "rule": a.rule.to_string(),
            "instances": a.instances,
            "revenue": rational(&a.revenue),
            "total_utility": rational(&a.total_utility),
            "min_utility": a.min_utility.as_ref().map(rational),
            "std": a.std.as_ref().map(decimal4),
            "zero_ratio": a.zero_ratio.as_ref().map(decimal4),
            "gini": a.gini.as_ref().map(decimal4),
        })).collect::<Vec<_>>(),
    })
}
