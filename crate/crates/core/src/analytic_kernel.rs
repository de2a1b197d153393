//! Fundamental solution of the constant-coefficient operator
//! `Δ_X + X·∇_Y − ∂_t`.
//!
//! With `s = t − t₀`, `ξ = X − X₀` and `η = Y − Y₀ + s X₀`, the kernel is a
//! product over coordinates of
//! `√3 / (2π s²) · exp(−(ξ²/s + 3ξη/s² + 3η²/s³))`,
//! the Gaussian with covariance `[[2s, −s²], [−s², 2s³/3]]`. Read as a
//! density in the pole `(X₀, Y₀)` for fixed `(X, Y)`, it is the law at time
//! `s` of `dX = √2 dW`, `dY = X ds` started from `(X, Y)`: mean
//! `(X, Y + sX)`, `Var X = 2s`, `Cov(X, Y) = s²`, `Var Y = 2s³/3`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::discretization::{DiscreteField, Grid, NodeClass};
use crate::error::{invalid, KfpError, Result};
use crate::geometry::Point;

/// Kernel value in flat coordinates; zero for `t ≤ t₀`.
pub fn kernel_value(x: &[f64], y: &[f64], t: f64, x0: &[f64], y0: &[f64], t0: f64) -> f64 {
    let s = t - t0;
    if s <= 0.0 {
        return 0.0;
    }
    let norm = 3f64.sqrt() / (2.0 * PI * s * s);
    let mut expo = 0.0;
    let mut pre = 1.0;
    for i in 0..x.len() {
        let xi = x[i] - x0[i];
        let eta = y[i] - y0[i] + s * x0[i];
        expo += xi * xi / s + 3.0 * xi * eta / (s * s) + 3.0 * eta * eta / (s * s * s);
        pre *= norm;
    }
    pre * (-expo).exp()
}

/// `Γ(p, p₀)` for `t > t₀`.
pub fn prototype_kernel(p: &Point, p0: &Point) -> Result<f64> {
    if p.dim() != p0.dim() {
        return Err(KfpError::DimensionMismatch {
            expected: p.dim(),
            got: p0.dim(),
        });
    }
    if !(p.t > p0.t) {
        return invalid(format!("kernel needs t > t0 (t = {}, t0 = {})", p.t, p0.t));
    }
    Ok(kernel_value(&p.x, &p.y, p.t, &p0.x, &p0.y, p0.t))
}

fn check_pole(grid: &Grid, p0: &Point) -> Result<()> {
    if p0.dim() != grid.m {
        return Err(KfpError::DimensionMismatch {
            expected: grid.m,
            got: p0.dim(),
        });
    }
    if !(p0.t < grid.t_axis.lo()) {
        return invalid(format!(
            "pole time {} must lie strictly before the initial time {}",
            p0.t,
            grid.t_axis.lo()
        ));
    }
    Ok(())
}

/// The kernel sampled at every active node.
pub fn kernel_field(grid: Arc<Grid>, p0: &Point) -> Result<DiscreteField> {
    check_pole(&grid, p0)?;
    Ok(DiscreteField::from_fn(grid, |p| kernel_value(&p.x, &p.y, p.t, &p0.x, &p0.y, p0.t)))
}

/// The kernel on Kolmogorov nodes, zero elsewhere.
pub fn kernel_boundary_data(grid: Arc<Grid>, p0: &Point) -> Result<DiscreteField> {
    let mut f = kernel_field(grid, p0)?;
    for (n, v) in f.values.iter_mut().enumerate() {
        if f.grid.class(n) != NodeClass::Kolmogorov {
            *v = 0.0;
        }
    }
    Ok(f)
}
