//! Markdown renderings of the experiment reports.

use std::fmt::Write;

use aesp_core::policy::CheckId;

use crate::ablation::AblationReport;
use crate::bench::LatencyReport;
use crate::gate::SecurityReport;
use crate::linkability::{Countermeasures, LinkabilityReport};

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

fn check_label(n: u8) -> String {
    CheckId::from_number(n).map_or_else(|| n.to_string(), |c| format!("{} {}", n, c.name()))
}

pub fn security_table(reports: &[SecurityReport]) -> String {
    let mut s = String::new();
    s.push_str("| config | attacks | auto-blocked | escalated | passed | executed | legit | FPR |\n");
    s.push_str("|---|---:|---:|---:|---:|---:|---:|---:|\n");
    for r in reports {
        let _ = writeln!(
            s,
            "| {} | {} | {} ({}) | {} ({}) | {} | {} | {} | {} |",
            r.config,
            r.attacks.total,
            r.attacks.auto_blocked,
            pct(r.auto_blocked_rate),
            r.attacks.escalated,
            pct(r.escalation_load_rate),
            r.attacks.passed,
            r.attacks.executed,
            r.legitimate.total,
            pct(r.false_positive_rate),
        );
    }
    s
}

pub fn attribution_table(r: &SecurityReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "First failing check per blocked request ({}):\n", r.config);
    s.push_str("| check | attacks | legitimate |\n|---|---:|---:|\n");
    for c in CheckId::ALL {
        let n = c.number();
        let a = r.per_check_attribution.get(&n).copied().unwrap_or(0);
        let l = r.legitimate_attribution.get(&n).copied().unwrap_or(0);
        let _ = writeln!(s, "| {} | {a} | {l} |", check_label(n));
    }
    s.push_str("\n| stratum | total | auto-blocked | executed |\n|---|---:|---:|---:|\n");
    for (k, c) in &r.per_stratum {
        let _ = writeln!(s, "| {k} | {} | {} | {} |", c.total, c.auto_blocked, c.executed);
    }
    s
}

pub fn ablation_table(r: &AblationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "B3 auto-block rate: {}\n", pct(r.full_rate));
    s.push_str("| removed check | auto-blocked | delta | per-stratum delta |\n|---|---:|---:|---|\n");
    for row in &r.rows {
        let strata: Vec<String> = row
            .per_stratum_delta
            .iter()
            .filter(|(_, d)| **d != 0)
            .map(|(k, d)| format!("{k}:{d}"))
            .collect();
        let _ = writeln!(
            s,
            "| {} | {} | {:+.1} pp | {} |",
            check_label(row.removed_check),
            pct(row.auto_blocked_rate),
            row.delta * 100.0,
            if strata.is_empty() { "-".into() } else { strata.join(", ") },
        );
    }
    let _ = writeln!(s, "\nSum of deltas: {:.1} pp", r.sum_of_deltas * 100.0);
    s
}

pub fn latency_table(r: &LatencyReport) -> String {
    let mut s = String::new();
    s.push_str("| op | median (ms) | IQR (ms) | p25 | p75 | trials x iterations |\n");
    s.push_str("|---|---:|---:|---:|---:|---:|\n");
    for o in &r.ops {
        let _ = writeln!(
            s,
            "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {} x {} |",
            o.op, o.median_ms, o.iqr_ms, o.p25_ms, o.p75_ms, o.trials, o.iterations
        );
    }
    s
}

pub fn linkability_table(reports: &[LinkabilityReport]) -> String {
    let mut s = String::new();
    s.push_str("| seed | config | linkage rate | precision | linked pairs | false pairs | consolidations |\n");
    s.push_str("|---:|---|---:|---:|---:|---:|---:|\n");
    for r in reports {
        for c in Countermeasures::ALL {
            if let Some(l) = r.configs.get(c.name()) {
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.4} | {:.3} | {} | {} | {} |",
                    r.seed, c, l.linkage_rate, l.precision, l.linked_pairs, l.false_pairs, l.consolidation_txs
                );
            }
        }
    }
    s.push_str("\nLinkage rate by adversary window:\n\n| seed | epsilon (min) | none | jitter_only | full |\n|---:|---:|---:|---:|---:|\n");
    for r in reports {
        for row in &r.epsilon_sweep {
            let get = |c: Countermeasures| row.rates.get(c.name()).map_or("-".into(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                r.seed,
                row.epsilon_min,
                get(Countermeasures::None),
                get(Countermeasures::JitterOnly),
                get(Countermeasures::Full)
            );
        }
    }
    s
}
