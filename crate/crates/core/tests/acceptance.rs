//! Runs the twelve acceptance criteria and prints one PASS/FAIL line each.
//!
//! Criterion 2 compares the exhaustive verdict against a closed-form region
//! that is off by one grid point; that failure is expected and must stay
//! exactly that point. Any other failure fails this target.

use exclusion_core::golden::{run_criterion, CRITERIA};

const EXPECTED_FAILURE: (u8, &str) = (2, "1 of 625 points disagree with the closed-form region: (3/2, 1/2, 3/2, 1); with γ∨δ ≤ 2β in place of δ ≤ 2β, 0 disagree");

fn main() {
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for criterion in CRITERIA {
        let result = run_criterion(criterion);
        println!("{}", result.line());
        if result.passed {
            passed += 1;
        } else if (result.number, result.detail.as_str()) != EXPECTED_FAILURE {
            unexpected.push(result.id);
        }
    }
    println!("{passed}/{} criteria pass", CRITERIA.len());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
