//! Acceptance suite: one trial per numbered criterion, then the empirical
//! invariants and the file-format and command-line contracts.
//!
//! Every trial runs even when an earlier one fails. A summary with one
//! PASS/FAIL line per check is printed at the end and the process exits
//! nonzero if any check failed.

mod contracts;
mod criteria;
mod invariants;
mod shared;

use std::sync::Mutex;
use std::time::Instant;

use libtest_mimic::{Arguments, Failed, Trial};

/// Outcome of one check: a short measurement summary either way.
pub type Outcome = Result<String, String>;

/// A named check.
pub type Check = (&'static str, fn() -> Outcome);

struct Record {
    name: String,
    passed: bool,
    detail: String,
    seconds: f64,
}

static RECORDS: Mutex<Vec<Record>> = Mutex::new(Vec::new());

fn trial(name: &str, check: fn() -> Outcome) -> Trial {
    let owned = name.to_string();
    Trial::test(name, move || {
        let start = Instant::now();
        let outcome =
            std::panic::catch_unwind(check).unwrap_or_else(|_| Err("check panicked".to_string()));
        let seconds = start.elapsed().as_secs_f64();
        let (passed, detail) = match &outcome {
            Ok(d) => (true, d.clone()),
            Err(d) => (false, d.clone()),
        };
        RECORDS.lock().unwrap().push(Record {
            name: owned.clone(),
            passed,
            detail: detail.clone(),
            seconds,
        });
        if passed {
            Ok(())
        } else {
            Err(Failed::from(detail))
        }
    })
}

fn print_summary() {
    let mut records = RECORDS.lock().unwrap();
    if records.is_empty() {
        return;
    }
    records.sort_by(|a, b| a.name.cmp(&b.name));
    println!("\nacceptance summary");
    for r in records.iter() {
        println!(
            "{} {:<48} {:>8.2}s  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
    }
    let failed = records.iter().filter(|r| !r.passed).count();
    println!("{} checks, {} failed\n", records.len(), failed);
}

fn main() {
    let args = Arguments::from_args();
    let mut trials = Vec::new();
    for (name, f) in criteria::ALL {
        trials.push(trial(name, *f));
    }
    for (name, f) in invariants::ALL {
        trials.push(trial(name, *f));
    }
    for (name, f) in contracts::ALL {
        trials.push(trial(name, *f));
    }
    let conclusion = libtest_mimic::run(&args, trials);
    print_summary();
    conclusion.exit();
}
