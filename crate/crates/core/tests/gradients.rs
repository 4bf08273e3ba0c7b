use std::time::Instant;

use coldgnn::diagnostics::gradient_suite;

#[test]
fn every_block_passes_at_ten_points() {
    let t = Instant::now();
    let reports = gradient_suite(10, 7).unwrap();
    for r in &reports {
        println!("{:<40} {:>3} {:.3e}", r.name, r.points, r.max_rel_error);
    }
    let worst = reports.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    assert!(worst.max_rel_error < 1e-5, "{} at {:.3e}", worst.name, worst.max_rel_error);
    assert!(reports.iter().all(|r| r.points == 10));
    assert!(t.elapsed().as_secs() < 60);
}
