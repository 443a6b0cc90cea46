//! Straight-line policy evaluator over JSON.
//!
//! Inputs use the wire shapes: a request object, policy objects, spend
//! records `{agent_id, amount, timestamp}` and paid pairs
//! `(agent_id, policy_id)`.

use serde_json::Value;

const MINUTE: i64 = 60_000;
const DAY: i64 = 1_440 * MINUTE;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleDecision {
    pub approved: bool,
    pub matched_policy_id: Option<String>,
    /// `(policy_id, failing check numbers ascending)` per evaluated policy.
    pub failed: Vec<(String, Vec<u8>)>,
}

pub struct OracleInput<'a> {
    pub request: &'a Value,
    pub policies: &'a [Value],
    pub spends: &'a [Value],
    pub paid: &'a [(String, String)],
    pub now: i64,
    /// Check numbers 1..=8 that are enabled.
    pub enabled: &'a [u8],
    pub tz_offset_minutes: i64,
}

fn int(v: &Value, k: &str) -> i64 {
    v[k].as_i64()
        .or_else(|| v[k].as_u64().map(|u| u as i64))
        .unwrap_or_else(|| panic!("missing integer {k}"))
}

fn opt_int(v: &Value, k: &str) -> Option<i128> {
    match &v[k] {
        Value::Null => None,
        x => Some(x.as_u64().map(i128::from).expect("integer")),
    }
}

fn hhmm(s: &str) -> i64 {
    let h: i64 = s[0..2].parse().unwrap();
    let m: i64 = s[3..5].parse().unwrap();
    (h * 60 + m) * MINUTE
}

/// Civil (year, month) from days since 1970-01-01.
fn year_month(ms: i64) -> (i64, i64) {
    let z = ms.div_euclid(DAY) + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1_460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m)
}

fn in_list(list: &Value, item: &Value) -> bool {
    match list.as_array() {
        None => true,
        Some(a) if a.is_empty() => true,
        Some(a) => a.contains(item),
    }
}

pub fn evaluate(input: &OracleInput<'_>) -> OracleDecision {
    let req = input.request;
    let agent = req["agent_id"].as_str().unwrap();
    let amount = i128::from(req["amount"].as_u64().unwrap());
    let mut failed = Vec::new();

    let mut day = 0i128;
    let mut week = 0i128;
    let mut month = 0i128;
    let this_month = year_month(input.now);
    for s in input.spends {
        if s["agent_id"].as_str() != Some(agent) {
            continue;
        }
        let ts = int(s, "timestamp");
        let a = i128::from(s["amount"].as_u64().unwrap());
        let age = input.now - ts;
        if (0..DAY).contains(&age) {
            day += a;
        }
        if (0..7 * DAY).contains(&age) {
            week += a;
        }
        if year_month(ts) == this_month {
            month += a;
        }
    }

    for p in input.policies {
        let created = int(p, "created_at");
        let expires = int(p, "expires_at");
        if !(created <= input.now && input.now < expires) {
            continue;
        }
        let pid = p["id"].as_str().unwrap().to_string();
        let c = &p["conditions"];
        let mut bad = Vec::new();
        for &check in input.enabled {
            let ok = match check {
                1 => opt_int(c, "max_amount_per_tx").is_none_or(|m| amount <= m),
                2 => match &c["time_window"] {
                    Value::Null => true,
                    w => {
                        let local = (int(req, "timestamp") + input.tz_offset_minutes * MINUTE)
                            .rem_euclid(DAY);
                        let s = hhmm(w["start"].as_str().unwrap());
                        let e = hhmm(w["end"].as_str().unwrap());
                        if s > e {
                            local >= s || local <= e
                        } else {
                            local >= s && local <= e
                        }
                    }
                },
                3 => in_list(&c["allow_list_addresses"], &req["to"]),
                4 => in_list(&c["allow_list_chains"], &req["chain"]),
                5 => in_list(&c["allow_list_methods"], &req["method"]),
                6 => {
                    c["require_review_first_pay"] != Value::Bool(true)
                        || input
                            .paid
                            .iter()
                            .any(|(a, q)| a == agent && *q == pid)
                }
                7 => {
                    let min = opt_int(c, "min_balance_after").unwrap_or(0);
                    let bal = i128::from(req["current_balance"].as_u64().unwrap());
                    min == 0 || bal - amount >= min
                }
                8 => {
                    let under = |spent: i128, key: &str| {
                        opt_int(c, key).is_none_or(|lim| spent + amount <= lim)
                    };
                    under(day, "max_amount_per_day")
                        && under(week, "max_amount_per_week")
                        && under(month, "max_amount_per_month")
                }
                other => panic!("unknown check {other}"),
            };
            if !ok {
                bad.push(check);
            }
        }
        bad.sort_unstable();
        if bad.is_empty() {
            return OracleDecision {
                approved: true,
                matched_policy_id: Some(pid),
                failed,
            };
        }
        failed.push((pid, bad));
    }
    OracleDecision {
        approved: false,
        matched_policy_id: None,
        failed,
    }
}
