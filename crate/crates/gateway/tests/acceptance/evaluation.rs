use std::time::Instant;

use aesp_core::policy::CheckId;
use aesp_eval::bench::BenchOp;
use aesp_eval::{
    generate_corpus, run_ablation, run_gate, run_latency_bench, run_linkability, BenchProtocol, Countermeasures,
    GateId, HumanPolicy, DEFAULT_SEED,
};

use crate::{ensure, Outcome};

pub fn h1_security() -> Outcome {
    let start = Instant::now();
    let corpus = generate_corpus(DEFAULT_SEED);
    let r = run_gate(&GateId::Full.config(), &corpus, HumanPolicy::Optimal).report;
    let secs = start.elapsed().as_secs_f64();
    ensure(r.attacks.total == 1000 && r.legitimate.total == 500, || {
        format!("corpus has {} attacks and {} legitimate", r.attacks.total, r.legitimate.total)
    })?;
    ensure(r.auto_blocked_rate >= 0.90, || format!("auto-blocked {:.4} < 0.90", r.auto_blocked_rate))?;
    ensure(r.false_positive_rate <= 0.05, || format!("FPR {:.4} > 0.05", r.false_positive_rate))?;
    for (k, s) in r.per_stratum.iter().filter(|(k, _)| k.as_str() != "aggregate") {
        ensure(s.auto_blocked == s.total, || format!("stratum {k}: {}/{}", s.auto_blocked, s.total))?;
    }
    ensure(secs < 10.0, || format!("runtime {secs:.2}s"))?;
    Ok(format!(
        "auto-blocked {:.4}, FPR {:.4}, escalation load {:.4}, single strata 100%, aggregate {}/{}, {secs:.2}s",
        r.auto_blocked_rate,
        r.false_positive_rate,
        r.escalation_load_rate,
        r.per_stratum["aggregate"].auto_blocked,
        r.per_stratum["aggregate"].total,
    ))
}

pub fn baseline_monotonicity() -> Outcome {
    let corpus = generate_corpus(DEFAULT_SEED);
    let runs: Vec<_> = [GateId::B0, GateId::B1, GateId::B2, GateId::B3]
        .iter()
        .map(|id| run_gate(&id.config(), &corpus, HumanPolicy::Optimal))
        .collect();
    let blocked: Vec<usize> = runs.iter().map(|r| r.report.attacks.auto_blocked).collect();
    ensure(blocked[0] == 0, || format!("B0 blocked {}", blocked[0]))?;
    ensure(blocked.windows(2).all(|w| w[0] <= w[1]), || format!("not monotone: {blocked:?}"))?;
    let b1 = &runs[1];
    let s1 = &b1.report.per_stratum["1"];
    ensure(s1.auto_blocked == s1.total, || format!("B1 stratum 1: {}/{}", s1.auto_blocked, s1.total))?;
    let overlap = b1
        .outcomes
        .iter()
        .filter(|o| o.label.is_attack() && o.disposition.gate_rejected() && o.stratum != Some(CheckId::AmountPerTx))
        .count();
    ensure(blocked[1] == s1.total + overlap, || {
        format!("B1 blocked {} != stratum 1 {} + overlap {overlap}", blocked[1], s1.total)
    })?;
    Ok(format!(
        "B0..B3 blocked {blocked:?}; B1 = stratum 1 ({}) + overlap ({overlap})",
        s1.total
    ))
}

pub fn ablation() -> Outcome {
    let start = Instant::now();
    let corpus = generate_corpus(DEFAULT_SEED);
    let a = run_ablation(&corpus);
    let secs = start.elapsed().as_secs_f64();
    ensure(a.rows.len() == 8, || format!("{} rows", a.rows.len()))?;
    for row in &a.rows {
        ensure(row.delta > 0.0, || format!("removing check {} changes nothing", row.removed_check))?;
        ensure(row.per_stratum_delta.values().all(|&d| d >= 0), || {
            format!("check {}: negative stratum delta {:?}", row.removed_check, row.per_stratum_delta)
        })?;
    }
    ensure(secs < 30.0, || format!("runtime {secs:.2}s"))?;
    let deltas: Vec<String> = a.rows.iter().map(|r| format!("{}:{:.3}", r.removed_check, r.delta)).collect();
    Ok(format!("deltas {}, {secs:.2}s", deltas.join(" ")))
}

pub fn h2_latency() -> Outcome {
    let protocol = BenchProtocol::default();
    ensure(
        protocol.warmups >= 100 && protocol.iterations >= 1000 && protocol.trials >= 5,
        || format!("protocol {protocol:?} below 100/1000/5"),
    )?;
    let r = run_latency_bench(&[BenchOp::EndToEndAuthorize], protocol);
    let e = r.get(BenchOp::EndToEndAuthorize).ok_or("no end_to_end_authorize row")?;
    ensure(e.median_ms < 200.0, || format!("median {:.3} ms", e.median_ms))?;
    Ok(format!(
        "end_to_end_authorize median {:.3} ms, IQR {:.3} ms over {}x{}",
        e.median_ms, e.iqr_ms, e.trials, e.iterations
    ))
}

pub fn unlinkability() -> Outcome {
    let mut rates = Vec::new();
    for seed in 1..=3 {
        let r = run_linkability(seed, 1000, &Countermeasures::ALL);
        let (none, jitter, full) = (
            r.rate(Countermeasures::None),
            r.rate(Countermeasures::JitterOnly),
            r.rate(Countermeasures::Full),
        );
        ensure(r.epsilon_ms == 5 * 60_000, || format!("epsilon {} ms", r.epsilon_ms))?;
        ensure(none > jitter && jitter > full, || {
            format!("seed {seed}: none {none:.4}, jitter_only {jitter:.4}, full {full:.4}")
        })?;
        ensure((none - 1.0).abs() < 0.01, || format!("seed {seed}: none {none:.4} not ~1"))?;
        rates.push(format!("seed {seed} {none:.3}>{jitter:.3}>{full:.3}"));
    }
    Ok(rates.join("; "))
}

