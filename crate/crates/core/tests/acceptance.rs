//! End-to-end acceptance suite. Runs every criterion against the shipped
//! assets and prints one pass/fail line per criterion; the throughput
//! criterion is informational and cannot fail the suite.

use morphsim_core::acceptance;

#[test]
fn acceptance_suite() {
    let results = acceptance::run_all();
    for r in &results {
        println!("{}", r.line());
    }
    let hard_failures: Vec<_> = results.iter().filter(|r| !r.passed && !r.soft).collect();
    assert!(
        hard_failures.is_empty(),
        "{} acceptance criterion(s) failed:\n{}",
        hard_failures.len(),
        hard_failures
            .iter()
            .map(|r| r.line())
            .collect::<Vec<_>>()
            .join("\n")
    );
}
