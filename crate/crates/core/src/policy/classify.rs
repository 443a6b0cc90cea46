//! Critical policy change classification.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use super::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequiredApproval {
    None,
    Review,
    Biometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeType {
    BudgetIncrease,
    ScopeEscalation,
    AddrRemoveAll,
    AddrAdd,
    TimeWindowRemove,
    MinBalanceLower,
    FirstPayDisable,
    ExpirationExtend,
}

impl ChangeType {
    pub const ALL: [ChangeType; 8] = [
        ChangeType::BudgetIncrease,
        ChangeType::ScopeEscalation,
        ChangeType::AddrRemoveAll,
        ChangeType::AddrAdd,
        ChangeType::TimeWindowRemove,
        ChangeType::MinBalanceLower,
        ChangeType::FirstPayDisable,
        ChangeType::ExpirationExtend,
    ];

    pub fn approval(self) -> RequiredApproval {
        match self {
            ChangeType::BudgetIncrease | ChangeType::ScopeEscalation | ChangeType::AddrRemoveAll => {
                RequiredApproval::Biometric
            }
            _ => RequiredApproval::Review,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyChange {
    #[serde(rename = "type")]
    pub change_type: ChangeType,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyChangeReport {
    pub changes: Vec<PolicyChange>,
    pub required_approval: RequiredApproval,
}

impl PolicyChangeReport {
    pub fn types(&self) -> Vec<ChangeType> {
        self.changes.iter().map(|c| c.change_type).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("policy ids differ: {old} vs {new}")]
pub struct ClassifyError {
    pub old: Uuid,
    pub new: Uuid,
}

fn fmt_cap(v: Option<u64>) -> String {
    v.map_or_else(|| "unlimited".to_string(), |x| x.to_string())
}

pub fn classify_change(old: &Policy, new: &Policy) -> Result<PolicyChangeReport, ClassifyError> {
    if old.id != new.id {
        return Err(ClassifyError {
            old: old.id,
            new: new.id,
        });
    }
    let (o, n) = (&old.conditions, &new.conditions);
    let mut changes = Vec::new();
    let mut push = |change_type, detail: String| changes.push(PolicyChange { change_type, detail });

    let caps = [
        ("max_amount_per_tx", o.max_amount_per_tx, n.max_amount_per_tx),
        ("max_amount_per_day", o.max_amount_per_day, n.max_amount_per_day),
        ("max_amount_per_week", o.max_amount_per_week, n.max_amount_per_week),
        ("max_amount_per_month", o.max_amount_per_month, n.max_amount_per_month),
    ];
    for (field, before, after) in caps {
        // A removed cap is an increase to infinity; a newly defined one tightens.
        let raised = match (before, after) {
            (Some(b), Some(a)) => a > b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if raised {
            push(
                ChangeType::BudgetIncrease,
                format!("{field}: {} -> {}", fmt_cap(before), fmt_cap(after)),
            );
        }
    }
    if new.scope.rank() > old.scope.rank() {
        push(
            ChangeType::ScopeEscalation,
            format!("scope: {:?} -> {:?}", old.scope, new.scope),
        );
    }
    if !o.allow_list_addresses.is_empty() && n.allow_list_addresses.is_empty() {
        push(
            ChangeType::AddrRemoveAll,
            format!("allow_list_addresses cleared ({} removed)", o.allow_list_addresses.len()),
        );
    }
    if !n.allow_list_addresses.is_empty() {
        let added: Vec<&str> = n
            .allow_list_addresses
            .iter()
            .filter(|a| !o.allow_list_addresses.contains(a))
            .map(String::as_str)
            .collect();
        if !added.is_empty() {
            push(ChangeType::AddrAdd, format!("added: {}", added.join(",")));
        }
    }
    if o.time_window.is_some() && n.time_window.is_none() {
        push(ChangeType::TimeWindowRemove, "time_window removed".to_string());
    }
    if n.min_balance_after < o.min_balance_after {
        push(
            ChangeType::MinBalanceLower,
            format!("min_balance_after: {} -> {}", o.min_balance_after, n.min_balance_after),
        );
    }
    if o.require_review_first_pay && !n.require_review_first_pay {
        push(ChangeType::FirstPayDisable, "require_review_first_pay disabled".to_string());
    }
    if new.expires_at > old.expires_at {
        push(
            ChangeType::ExpirationExtend,
            format!("expires_at: {} -> {}", old.expires_at, new.expires_at),
        );
    }
    let required_approval = changes
        .iter()
        .map(|c| c.change_type.approval())
        .max()
        .unwrap_or(RequiredApproval::None);
    Ok(PolicyChangeReport {
        changes,
        required_approval,
    })
}
