//! Acceptance run: one `[PASS]` or `[FAIL]` line per criterion, with
//! indented sub-lines for the protocol suites. Exits nonzero on any failure.

mod constants;
mod evaluation;
mod protocol;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

pub type Outcome = Result<String, String>;
pub type Criterion = (&'static str, fn() -> Outcome);

/// Fails with `msg` unless `cond` holds.
pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Runs `f`, turning a panic into a failure.
pub fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

pub fn line(indent: &str, name: &str, r: &Outcome) {
    match r {
        Ok(detail) => println!("{indent}[PASS] {name}: {detail}"),
        Err(why) => println!("{indent}[FAIL] {name}: {why}"),
    }
}

fn main() -> ExitCode {
    // Assertion messages are reported on the criterion line.
    std::panic::set_hook(Box::new(|_| {}));
    let criteria: Vec<Criterion> = vec![
        ("H1 security coverage", evaluation::h1_security),
        ("Baseline monotonicity", evaluation::baseline_monotonicity),
        ("Ablation attribution", evaluation::ablation),
        ("H2 latency", evaluation::h2_latency),
        ("Unlinkability ordering", evaluation::unlinkability),
        ("Protocol property suites", protocol::suites),
        ("Constants", constants::table),
    ];
    let total = criteria.len();
    let mut failed = 0;
    for (name, f) in criteria {
        let r = guarded(f);
        line("", name, &r);
        if r.is_err() {
            failed += 1;
        }
    }
    println!("{total} criteria, {failed} failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
