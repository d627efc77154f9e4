//! Runs the fourteen acceptance criteria in sequence and prints one line each.

use sublinear::verify::{run_suite, VerifyContext};

#[test]
fn acceptance_criteria() {
    let reports = run_suite(&VerifyContext::default(), &[]);
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!("{} of {} criteria passed", reports.len() - failed.len(), reports.len());
    assert_eq!(reports.len(), 14);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
