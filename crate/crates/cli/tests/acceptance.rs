//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Each criterion runs its suite at the default scenario (n = 10, seed 1)
//! and must pass every asserted check inside its time limit. Criterion 5
//! is a known failure; see the README. It is reported but does not fail
//! the run unless `SQFN_ACCEPTANCE_STRICT=1`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use sqfn_lab::{run_suite, Scenario, Status, Suite};

struct Criterion {
    id: u8,
    title: &'static str,
    suite: Suite,
    limit: Duration,
    known_failure: bool,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

const CRITERIA: [Criterion; 9] = [
    Criterion { id: 1, title: "exact identities", suite: Suite::Identities, limit: secs(10), known_failure: false },
    Criterion { id: 2, title: "per-interval Bessel", suite: Suite::Bessel, limit: secs(30), known_failure: false },
    Criterion { id: 3, title: "layer-cake bound", suite: Suite::LayerCake, limit: secs(60), known_failure: false },
    Criterion { id: 4, title: "stopping certificate", suite: Suite::Stopping, limit: secs(60), known_failure: false },
    Criterion { id: 5, title: "good-lambda decay", suite: Suite::GoodLambda, limit: secs(120), known_failure: true },
    Criterion { id: 6, title: "operator norm scaling", suite: Suite::OperatorNorm, limit: secs(180), known_failure: false },
    Criterion { id: 7, title: "radial sufficient condition", suite: Suite::Radial, limit: secs(30), known_failure: false },
    Criterion { id: 8, title: "domination stability", suite: Suite::Domination, limit: secs(120), known_failure: false },
    Criterion { id: 9, title: "structural checks", suite: Suite::Structural, limit: secs(10), known_failure: false },
];

fn main() -> ExitCode {
    let strict = std::env::var("SQFN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut unexpected = 0;
    let mut known = 0;
    for c in &CRITERIA {
        let scenario = Scenario {
            suites: vec![c.suite],
            ..Scenario::default()
        };
        let start = Instant::now();
        let report = match run_suite(&scenario) {
            Ok(r) => r,
            Err(e) => {
                println!("FAIL {} {}: error: {e}", c.id, c.title);
                unexpected += 1;
                continue;
            }
        };
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.limit;
        let ok = report.passed() && in_time;
        let note = match (ok, c.known_failure) {
            (false, true) => " (known failure)",
            _ => "",
        };
        println!(
            "{} {} {}: {:.2}s of {}s{note}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
        );
        for r in report.results.iter().filter(|r| r.status != Status::Info) {
            let bound = r.bound.map(|b| format!(" bound {b:e}")).unwrap_or_default();
            println!("    {:?} {} = {:e}{bound}", r.status, r.check, r.value);
        }
        if !ok {
            if c.known_failure && !strict {
                known += 1;
            } else {
                unexpected += 1;
            }
        }
    }
    println!("{} criteria, {unexpected} unexpected failures, {known} known failures", CRITERIA.len());
    if unexpected > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
