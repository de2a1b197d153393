mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kfp_core::coefficients::EllipticMatrixField;
use kfp_core::discretization::{DiscreteField, NodeClass};
use kfp_core::exhaustion::{cutoff_profile, graded_axis};
use kfp_core::function_spaces::DualNorm;
use kfp_core::geometry::{kolmogorov_sign, BoundaryClass, FaceLocation, Point};
use kfp_core::variational::{evaluate_j, transport_identity};

use common::box_grid;

fn point(m: usize) -> impl Strategy<Value = Point> {
    (prop::collection::vec(-5.0..5.0f64, 2 * m + 1)).prop_map(move |v| Point::from_flat(&v).unwrap())
}

fn close(p: &Point, q: &Point) -> bool {
    let scale = p.to_flat().iter().chain(&q.to_flat()).fold(1.0f64, |a, v| a.max(v.abs()));
    p.max_abs_diff(q) <= 1e-12 * scale
}

proptest! {
    #[test]
    fn compose_is_associative(p in point(2), q in point(2), w in point(2)) {
        prop_assert!(close(&p.compose(&q).compose(&w), &p.compose(&q.compose(&w))));
    }

    #[test]
    fn identity_and_inverse(p in point(1)) {
        let e = Point::origin(1);
        prop_assert!(close(&p.compose(&e), &p) && close(&e.compose(&p), &p));
        prop_assert!(close(&p.compose(&p.inverse()), &e) && close(&p.inverse().compose(&p), &e));
    }

    #[test]
    fn norm_is_homogeneous(p in point(2), log_r in -3.0..3.0f64) {
        let r = 10f64.powf(log_r);
        let lhs = p.dilate(r).unwrap().homogeneous_norm();
        prop_assert!((lhs - r * p.homogeneous_norm()).abs() <= 1e-12 * lhs.max(1e-300));
    }

    #[test]
    fn quasi_distance_is_symmetric_and_definite(p in point(1), q in point(1)) {
        prop_assert_eq!(p.quasi_distance(&q), q.quasi_distance(&p));
        prop_assert!(p.quasi_distance(&q) >= 0.0);
        prop_assert_eq!(p.quasi_distance(&p), 0.0);
    }

    #[test]
    fn time_faces_and_y_faces_classify(x in prop::collection::vec(-2.0..2.0f64, 2), i in 0usize..2) {
        let class = |f: FaceLocation| kolmogorov_sign(&x, &f.yt_normal(2).unwrap());
        prop_assert_eq!(class(FaceLocation::Initial), BoundaryClass::Kolmogorov);
        prop_assert_eq!(class(FaceLocation::Final), BoundaryClass::Free);
        let upper = class(FaceLocation::YUpper(i)) == BoundaryClass::Kolmogorov;
        let lower = class(FaceLocation::YLower(i)) == BoundaryClass::Kolmogorov;
        prop_assert_eq!(upper, x[i] > 0.0);
        prop_assert_eq!(lower, x[i] < 0.0);
        prop_assert!(!(upper && lower));
    }

    #[test]
    fn cutoff_is_monotone_in_unit_range(r1 in 0.0..10.0f64, r2 in 0.0..10.0f64, radius in 0.5..8.0f64) {
        let (a, b) = (cutoff_profile(r1.min(r2), radius), cutoff_profile(r1.max(r2), radius));
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(b <= a);
    }

    #[test]
    fn graded_axis_keeps_core_lattice(lo in -20.0..-2.0f64, hi in 3.0..20.0f64, h in 0.1..0.5f64) {
        let axis = graded_axis(lo, hi, [-1.0, 2.0], h, 1.25).unwrap();
        prop_assert_eq!(axis.lo(), lo);
        prop_assert_eq!(axis.hi(), hi);
        let steps = (3.0 / h).round() as usize;
        for k in 0..=steps {
            let v = -1.0 + 3.0 * k as f64 / steps as f64;
            prop_assert!(axis.find(v, 1e-12).is_some());
        }
        prop_assert!(axis.nodes.windows(2).all(|w| w[1] > w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn j_is_nonnegative(seed in any::<u64>(), n in 5usize..9) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = box_grid(1, n);
        let f = DiscreteField::new(g.clone(), (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let fs = DiscreteField::new(g.clone(), (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let j = evaluate_j(&f, &fs, &EllipticMatrixField::identity(1)).unwrap();
        prop_assert!(j.value >= -1e-12 * j.scale.max(1.0));
        prop_assert!(j.constraint_residual <= 1e-10);
    }

    #[test]
    fn dual_norm_bounds_pairings(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = box_grid(2, 7);
        let dual = DualNorm::new(g.clone()).unwrap();
        let nx = g.n_x();
        let f: Vec<f64> = (0..nx).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pairing = |phi: &[f64]| (0..nx).filter(|&ix| g.x_interior(ix)).map(|ix| g.weight_x(ix) * f[ix] * phi[ix]).sum::<f64>();
        let norm = dual.slice_norm(&f).unwrap();
        let phi: Vec<f64> = (0..nx).map(|ix| if g.x_interior(ix) { rng.random_range(-1.0..1.0) } else { 0.0 }).collect();
        prop_assert!(pairing(&phi).abs() <= norm * dual.h1_hilbert(&phi) * (1.0 + 1e-12));
        let w = dual.riesz(&f).unwrap();
        let eq = pairing(&w) - norm * dual.h1_hilbert(&w);
        prop_assert!(eq.abs() <= 1e-10 * norm * norm.max(1.0));
    }

    #[test]
    fn transport_identity_sign(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = box_grid(1, 7);
        let vals = (0..g.len())
            .map(|n| if g.class(n) == NodeClass::Kolmogorov { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let id = transport_identity(&DiscreteField::new(g, vals).unwrap()).unwrap();
        prop_assert!(id.volume <= 1e-14 && id.boundary <= 1e-14 && id.dissipation >= 0.0);
        prop_assert!((id.volume - (id.boundary - id.dissipation)).abs() <= 1e-12 * id.dissipation.abs().max(1.0));
    }
}
