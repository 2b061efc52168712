//! Run every invariant suite from the library and print the checks.
//!
//! cargo run --release --example invariant_suites

use fleximo::verify::{run_suite, Suite};

fn main() -> fleximo::Result<()> {
    let mut all = true;
    for suite in Suite::ALL {
        let report = run_suite(suite)?;
        for c in &report.checks {
            let status = if c.passed { "ok" } else { "FAILED" };
            println!(
                "{:<13} {:<28} {:>10.3e} {:<2} {:<8.1e} {status}",
                suite.as_str(),
                c.name,
                c.value,
                c.relation,
                c.tolerance
            );
        }
        all &= report.passed;
    }
    println!(
        "{}",
        if all {
            "all suites pass"
        } else {
            "some checks failed"
        }
    );
    Ok(())
}
