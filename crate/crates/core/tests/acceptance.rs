//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Criteria run in-process; criterion 11 also requires `lepage selftest` to
//! agree with them and to exit 0 exactly when everything passes.

use std::process::{Command, ExitCode};

use lepage::acceptance::run_all;
use lepage::expr::EqualConfig;
use serde_json::Value;

fn selftest_agrees(local: &[bool]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lepage"))
        .arg("selftest")
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    let report: Value = serde_json::from_slice(&out.stdout).map_err(|e| format!("selftest output: {e}"))?;
    let remote: Vec<bool> = report["payload"]["criteria"]
        .as_array()
        .ok_or("no criteria in report")?
        .iter()
        .map(|c| c["passed"].as_bool().unwrap_or(false))
        .collect();
    if remote != local {
        return Err(format!("selftest verdicts {remote:?} differ from {local:?}"));
    }
    let code = out.status.code();
    let all = local.iter().all(|&p| p);
    if (code == Some(0)) != all {
        return Err(format!("selftest exit code {code:?} with all-pass = {all}"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cfg = EqualConfig::default();
    let mut results = run_all(&cfg);
    let local: Vec<bool> = results.iter().map(|r| r.passed).collect();
    if let Err(e) = selftest_agrees(&local) {
        let r = results.last_mut().expect("eleven criteria");
        r.passed = false;
        r.detail = serde_json::json!({ "selftest": e, "result": r.detail });
    }
    let mut failed = 0;
    for r in &results {
        println!("{}", r.line());
        if !r.passed {
            failed += 1;
            println!("     {}", r.detail);
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
