//! One-check-at-a-time ablation of the B3 gate.

use std::collections::BTreeMap;

use aesp_core::policy::CheckId;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::gate::{run_checks, GateId, HumanPolicy, SecurityReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub removed_check: u8,
    pub check_name: String,
    pub auto_blocked_rate: f64,
    /// Full B3 rate minus the ablated rate.
    pub delta: f64,
    /// Blocked attacks lost per stratum ("1".."8", "aggregate").
    pub per_stratum_delta: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub full_rate: f64,
    pub rows: Vec<AblationRow>,
    pub sum_of_deltas: f64,
}

pub fn run_ablation(corpus: &Corpus) -> AblationReport {
    // No escalation, so the human policy is irrelevant.
    let base = run_checks(GateId::B3, &CheckId::all(), false, corpus, HumanPolicy::RejectAll).report;
    let rows: Vec<AblationRow> = CheckId::ALL
        .iter()
        .map(|&c| {
            let mut checks = CheckId::all();
            checks.remove(&c);
            let r = run_checks(GateId::B3, &checks, false, corpus, HumanPolicy::RejectAll).report;
            AblationRow {
                removed_check: c.number(),
                check_name: c.name().to_string(),
                auto_blocked_rate: r.auto_blocked_rate,
                delta: base.auto_blocked_rate - r.auto_blocked_rate,
                per_stratum_delta: stratum_delta(&base, &r),
            }
        })
        .collect();
    AblationReport {
        full_rate: base.auto_blocked_rate,
        sum_of_deltas: rows.iter().map(|r| r.delta).sum(),
        rows,
    }
}

fn stratum_delta(base: &SecurityReport, ablated: &SecurityReport) -> BTreeMap<String, i64> {
    base.per_stratum
        .iter()
        .map(|(k, b)| {
            let a = ablated.per_stratum.get(k).map_or(0, |c| c.auto_blocked);
            (k.clone(), b.auto_blocked as i64 - a as i64)
        })
        .collect()
}
