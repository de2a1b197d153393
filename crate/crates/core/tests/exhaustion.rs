use kfp_core::exhaustion::HalfSpaceBenchmark;

#[test]
fn differences_shrink_by_half_per_doubling() {
    let bench = HalfSpaceBenchmark::new(0.25).unwrap();
    let report = bench.run(&[1.0, 2.0, 4.0, 8.0]).unwrap();
    assert!(report.nested && report.monotone && report.bounded_by_data);
    let d = report.differences();
    assert_eq!(d.len(), 3);
    for w in d.windows(2) {
        assert!(w[1] <= 0.5 * w[0], "{d:?}");
    }
    let scale = report.levels.iter().map(|l| l.data_sup).fold(0.0, f64::max);
    assert!(d[2] <= 1e-3 * scale);
    for l in &report.levels {
        assert!(l.weak_residual <= 1e-8, "{}", l.weak_residual);
    }
}

#[test]
fn probe_values_are_shared_nodes() {
    let bench = HalfSpaceBenchmark::new(0.25).unwrap();
    let report = bench.run(&[2.0, 4.0]).unwrap();
    let (a, b) = (&report.levels[0].probe_field, &report.levels[1].probe_field);
    assert!(a.grid.same_layout(&b.grid));
    assert!(a.len() > 0);
}
