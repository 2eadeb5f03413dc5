//! Acceptance gate: every criterion at its stated tolerance, one line each.

use w2lab::harness::acceptance::{verify_all, Status};

#[test]
fn acceptance_criteria() {
    let results = verify_all(false, |r| println!("{r}"));
    let failed: Vec<String> = results
        .iter()
        .filter(|r| r.status == Status::Fail)
        .map(|r| format!("AC{:02}", r.id))
        .collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
