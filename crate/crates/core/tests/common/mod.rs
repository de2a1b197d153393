//! Test-side oracles shared by the integration suites.
#![allow(dead_code)]

use kfp_core::analytic_kernel::kernel_value;

fn trapezoid_2d(lo: [f64; 2], hi: [f64; 2], n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let hx = (hi[0] - lo[0]) / n as f64;
    let hy = (hi[1] - lo[1]) / n as f64;
    let mut sum = 0.0;
    for i in 0..=n {
        let wx = if i == 0 || i == n { 0.5 } else { 1.0 };
        let x = lo[0] + i as f64 * hx;
        for j in 0..=n {
            let wy = if j == 0 || j == n { 0.5 } else { 1.0 };
            sum += wx * wy * f(x, lo[1] + j as f64 * hy);
        }
    }
    sum * hx * hy
}

/// `|∫∫ Γ dX dY − 1|` for `m = 1`, pole `(x0, y0, 0)` and time `s`.
pub fn normalization_error(s: f64, x0: f64, y0: f64) -> f64 {
    // Centre on the mean and cover ±12 standard deviations.
    let sx = (2.0 * s).sqrt();
    let sy = (2.0 * s * s * s / 3.0).sqrt();
    let cx = x0;
    let cy = y0 - s * x0;
    let total = trapezoid_2d(
        [cx - 12.0 * sx, cy - 12.0 * sy - 12.0 * s * sx],
        [cx + 12.0 * sx, cy + 12.0 * sy + 12.0 * s * sx],
        600,
        |x, y| kernel_value(&[x], &[y], s, &[x0], &[y0], 0.0),
    );
    (total - 1.0).abs()
}

/// Relative Chapman–Kolmogorov defect through the intermediate time `t1`.
pub fn chapman_kolmogorov_error(p: [f64; 3], p0: [f64; 3], t1: f64, n: usize) -> f64 {
    let direct = kernel_value(&[p[0]], &[p[1]], p[2], &[p0[0]], &[p0[1]], p0[2]);
    let composed = trapezoid_2d([-8.0, -8.0], [8.0, 8.0], n, |z, w| {
        kernel_value(&[p[0]], &[p[1]], p[2], &[z], &[w], t1) * kernel_value(&[z], &[w], t1, &[p0[0]], &[p0[1]], p0[2])
    });
    (composed - direct).abs() / direct
}

/// Central-difference `Γ_xx + x Γ_y − Γ_t` with step `h`, pole at the origin.
pub fn fd_residual(p: [f64; 3], h: f64) -> f64 {
    let k = |x: f64, y: f64, t: f64| kernel_value(&[x], &[y], t, &[0.0], &[0.0], 0.0);
    let [x, y, t] = p;
    let c = k(x, y, t);
    let uxx = (k(x + h, y, t) - 2.0 * c + k(x - h, y, t)) / (h * h);
    let uy = (k(x, y + h, t) - k(x, y - h, t)) / (2.0 * h);
    let ut = (k(x, y, t + h) - k(x, y, t - h)) / (2.0 * h);
    uxx + x * uy - ut
}

/// Test points at homogeneous distance at least one from the origin pole.
pub const RESIDUAL_POINTS: [[f64; 3]; 4] = [[0.5, 0.3, 1.0], [-0.8, 0.5, 1.5], [1.0, -1.0, 2.0], [0.2, 0.9, 1.2]];

/// Observed orders of the worst-point residual over halvings of `h`.
pub fn residual_orders(steps: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let res: Vec<f64> = steps
        .iter()
        .map(|&h| RESIDUAL_POINTS.iter().map(|&p| fd_residual(p, h).abs()).fold(0.0, f64::max))
        .collect();
    let orders = res
        .windows(2)
        .zip(steps.windows(2))
        .map(|(r, h)| (r[0] / r[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    (res, orders)
}

use std::sync::Arc;

use kfp_core::coefficients::{CoefficientFamily, EllipticMatrixField};
use kfp_core::discretization::{build_grid, DiscreteField, Grid, Resolution};
use kfp_core::geometry::{AxisBox, ProductDomain};

/// `U_X = (−1, 1)^m`, `V = (−1, 1)^m × (0, 1)`, `n` nodes per axis.
pub fn box_grid(m: usize, n: usize) -> Arc<Grid> {
    let mut vyt = vec![[-1.0, 1.0]; m];
    vyt.push([0.0, 1.0]);
    let d = ProductDomain::new(AxisBox::cube(m, -1.0, 1.0).unwrap(), AxisBox::new(vyt).unwrap()).unwrap();
    Arc::new(build_grid(&d, &Resolution::uniform(m, n)).unwrap())
}

/// Every built-in coefficient family at `m = 1` and `m = 2`.
pub fn builtin_coefficients() -> Vec<(&'static str, EllipticMatrixField)> {
    let f = |m, kappa, fam| EllipticMatrixField::new(m, kappa, fam).unwrap();
    vec![
        ("identity-1", EllipticMatrixField::identity(1)),
        ("constant-1", EllipticMatrixField::constant_diag(&[3.0], 3.0).unwrap()),
        ("checkerboard-1", f(1, 4.0, CoefficientFamily::Checkerboard { a: 0.25, b: 4.0, period: Some(0.5) })),
        ("periodic-1", f(1, 2.0, CoefficientFamily::Periodic { amplitude: 0.5, wavenumber: 7.0 })),
        ("identity-2", EllipticMatrixField::identity(2)),
        ("constant-2", f(2, 2.0, CoefficientFamily::Constant { matrix: vec![1.5, 0.3, 0.3, 1.0] })),
        ("rotated-2", f(2, 4.0, CoefficientFamily::Rotated { eigenvalues: vec![0.5, 2.0], angle: 0.6 })),
        ("checkerboard-2", f(2, 4.0, CoefficientFamily::Checkerboard { a: 0.25, b: 4.0, period: None })),
        ("periodic-2", f(2, 2.0, CoefficientFamily::Periodic { amplitude: 0.3, wavenumber: 5.0 })),
        (
            "local-2",
            f(2, 4.0, CoefficientFamily::Checkerboard { a: 0.25, b: 4.0, period: Some(0.4) })
                .with_identity_outside(AxisBox::cube(2, -0.5, 0.5).unwrap())
                .unwrap(),
        ),
    ]
}

/// A named problem: coefficients, Kolmogorov data and source.
pub struct Problem {
    pub name: String,
    pub a: EllipticMatrixField,
    pub g: DiscreteField,
    pub gstar: DiscreteField,
}

/// Direct/variational comparison battery.
pub fn battery() -> Vec<Problem> {
    let smooth = |g: &Arc<Grid>| DiscreteField::from_fn(g.clone(), |p| (p.x[0] + 2.0 * p.y[0]).sin() + p.t * p.x.iter().sum::<f64>());
    let source = |g: &Arc<Grid>| DiscreteField::from_fn(g.clone(), |p| p.x[0] * p.y[0] - 0.5 * p.t);
    let mut out = Vec::new();
    for (name, a) in builtin_coefficients() {
        let g = box_grid(a.m(), if a.m() == 1 { 12 } else { 6 });
        out.push(Problem {
            name: name.to_string(),
            g: smooth(&g),
            gstar: source(&g),
            a,
        });
    }
    out
}

/// `‖a − b‖ / max(‖b‖, tiny)` in the grid L² norm.
pub fn relative_l2(a: &DiscreteField, b: &DiscreteField) -> f64 {
    a.sub(b).unwrap().l2_norm() / b.l2_norm().max(f64::MIN_POSITIVE)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
