mod common;

use kfp_core::analytic_kernel::kernel_value;
use kfp_core::coefficients::EllipticMatrixField;
use kfp_core::geometry::{AxisBox, FaceLocation, Point, ProductDomain};
use kfp_core::stochastic::{box_faces, estimate_parabolic_measure, estimate_solution, simulate_exits, KineticDomain, McOptions};

fn domain() -> KineticDomain {
    KineticDomain::Box(ProductDomain::new(AxisBox::cube(1, -1.0, 1.0).unwrap(), AxisBox::new(vec![[-1.0, 1.0], [0.0, 1.0]]).unwrap()).unwrap())
}

fn kernel(p: &Point) -> f64 {
    kernel_value(&p.x, &p.y, p.t, &[0.0], &[0.0], -0.5)
}

#[test]
fn kernel_data_mean_matches_exact_kernel() {
    let opts = McOptions {
        paths: 40_000,
        seed: 3,
        ..Default::default()
    };
    let a = EllipticMatrixField::identity(1);
    for p in [Point::new(vec![0.5], vec![0.3], 0.8).unwrap(), Point::new(vec![-0.6], vec![0.6], 0.6).unwrap()] {
        let est = estimate_solution(&p, &domain(), &a, &kernel, &opts).unwrap();
        let z = (est.mean - kernel(&p)) / est.std_error;
        assert!(z.abs() <= 3.0, "z = {z}");
        assert_eq!(est.lost, 0);
    }
}

#[test]
fn same_seed_same_exits() {
    let opts = McOptions {
        paths: 500,
        seed: 9,
        ..Default::default()
    };
    let p = Point::new(vec![0.1], vec![0.2], 0.7).unwrap();
    let a = EllipticMatrixField::identity(1);
    let first = simulate_exits(&p, &domain(), &a, &opts).unwrap();
    let second = simulate_exits(&p, &domain(), &a, &opts).unwrap();
    assert_eq!(first, second);
    let other = simulate_exits(&p, &domain(), &a, &McOptions { seed: 10, ..opts }).unwrap();
    assert_ne!(first, other);
}

#[test]
fn measure_masses_and_free_faces() {
    let opts = McOptions {
        paths: 20_000,
        seed: 4,
        ..Default::default()
    };
    let p = Point::new(vec![0.0], vec![0.0], 0.5).unwrap();
    let a = EllipticMatrixField::identity(1);
    let m = estimate_parabolic_measure(&p, &domain(), &a, &box_faces(1), &opts).unwrap();
    assert_eq!(m.counts.iter().sum::<usize>() + m.unassigned + m.lost, m.paths);
    assert!((m.masses.iter().sum::<f64>() - 1.0).abs() <= 3.0 / (opts.paths as f64).sqrt());
    // Exits land only on Kolmogorov parts: y-faces are hit with the inflow sign.
    for o in simulate_exits(&p, &domain(), &a, &opts).unwrap() {
        let e = o.exit.unwrap();
        match e.face {
            FaceLocation::YUpper(0) => assert!(e.point.x[0] >= 0.0),
            FaceLocation::YLower(0) => assert!(e.point.x[0] <= 0.0),
            FaceLocation::Initial => assert!(e.point.t.abs() < 1e-12),
            _ => {}
        }
    }
}

#[test]
fn halving_dt_keeps_the_mean() {
    let a = EllipticMatrixField::identity(1);
    let p = Point::new(vec![0.2], vec![-0.1], 0.6).unwrap();
    let run = |dt| {
        let opts = McOptions {
            paths: 20_000,
            dt: Some(dt),
            seed: 5,
            ..Default::default()
        };
        estimate_solution(&p, &domain(), &a, &kernel, &opts).unwrap()
    };
    let (c, f) = (run(1e-3), run(5e-4));
    let combined = (c.std_error.powi(2) + f.std_error.powi(2)).sqrt();
    assert!((c.mean - f.mean).abs() <= 3.0 * combined);
}
