//! One line per acceptance criterion. Tolerances live in `refugia::verify`.

use std::io::Write;

use refugia::verify;

#[test]
fn acceptance_criteria() {
    let reports = verify::run_all();
    assert_eq!(reports.len(), 12);
    let failed: Vec<usize> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    // Written to the raw handle so the lines show up without --nocapture.
    let mut out = std::io::stderr().lock();
    for r in &reports {
        writeln!(out, "{r}").unwrap();
    }
    writeln!(
        out,
        "acceptance: {}/{} passed",
        reports.len() - failed.len(),
        reports.len()
    )
    .unwrap();
    drop(out);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
