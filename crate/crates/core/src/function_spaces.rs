//! Discrete `L²(V; H¹_X)`, `L²(V; H⁻¹_X)` and `W` norms, and Poincaré
//! constants.
//!
//! Slice quantities use the trapezoid weights `W_X` and the `A = I` slice
//! stiffness `K`, so `‖∇_X u‖² = uᵀ K u`. The dual norm of a slice function
//! `f` is `⟨f, w⟩^{1/2}` with `(K + W_X) w = W_X f` on interior `X`-nodes,
//! that is the dual of `‖φ‖² = ‖φ‖²_{L²} + ‖∇_X φ‖²_{L²}` over `φ`
//! vanishing on `∂U_X`.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::stencil::GradientSampler;
use crate::discretization::{slice_stiffness, transport_field, DiscreteField, Grid, NodeClass};
use crate::error::{invalid, KfpError, Result};
use crate::sparse::{CsrMatrix, SparseLu};

/// Shared factorization for slice dual norms on one grid.
pub struct DualNorm {
    grid: Arc<Grid>,
    interior: Vec<usize>,
    weights: Vec<f64>,
    k_ii: CsrMatrix,
    lu: SparseLu,
}

fn interior_nodes(grid: &Grid) -> Vec<usize> {
    (0..grid.n_x()).filter(|&ix| grid.x_interior(ix)).collect()
}

/// `K` restricted to `X`-interior nodes.
fn interior_stiffness(grid: &Grid, interior: &[usize]) -> CsrMatrix {
    let k = slice_stiffness(grid, None, 0, 0);
    let mut pos = vec![usize::MAX; grid.n_x()];
    for (i, &ix) in interior.iter().enumerate() {
        pos[ix] = i;
    }
    let mut t = Vec::new();
    for (i, &ix) in interior.iter().enumerate() {
        for (c, v) in k.row(ix) {
            if pos[c] != usize::MAX {
                t.push((i, pos[c], v));
            }
        }
    }
    CsrMatrix::from_triplets(interior.len(), interior.len(), &t)
}

impl DualNorm {
    pub fn new(grid: Arc<Grid>) -> Result<Self> {
        let interior = interior_nodes(&grid);
        if interior.is_empty() {
            return invalid("no interior X-nodes");
        }
        let weights: Vec<f64> = interior.iter().map(|&ix| grid.weight_x(ix)).collect();
        let k_ii = interior_stiffness(&grid, &interior);
        let mut t = k_ii.triplets();
        t.extend(weights.iter().enumerate().map(|(i, w)| (i, i, *w)));
        let lu = SparseLu::factor(&CsrMatrix::from_triplets(interior.len(), interior.len(), &t))?;
        Ok(DualNorm {
            grid,
            interior,
            weights,
            k_ii,
            lu,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Riesz representer `w` of slice `f` (length `N_X`, zero off the
    /// interior).
    pub fn riesz(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.grid.n_x() {
            return Err(KfpError::DimensionMismatch {
                expected: self.grid.n_x(),
                got: f.len(),
            });
        }
        let b: Vec<f64> = self.interior.iter().zip(&self.weights).map(|(&ix, w)| w * f[ix]).collect();
        let wi = self.lu.solve(&b)?;
        let mut out = vec![0.0; f.len()];
        for (&ix, v) in self.interior.iter().zip(wi) {
            out[ix] = v;
        }
        Ok(out)
    }

    /// `‖f‖_{H⁻¹_X}` of one slice.
    pub fn slice_norm(&self, f: &[f64]) -> Result<f64> {
        let w = self.riesz(f)?;
        let s: f64 = self
            .interior
            .iter()
            .zip(&self.weights)
            .map(|(&ix, wt)| wt * f[ix] * w[ix])
            .sum();
        Ok(s.max(0.0).sqrt())
    }

    /// `‖φ‖ = (‖φ‖²_{L²} + ‖∇_X φ‖²)^{1/2}` of a slice function vanishing on
    /// `∂U_X`; only interior values are read.
    pub fn h1_hilbert(&self, phi: &[f64]) -> f64 {
        let v: Vec<f64> = self.interior.iter().map(|&ix| phi[ix]).collect();
        let l2: f64 = v.iter().zip(&self.weights).map(|(a, w)| w * a * a).sum();
        (l2 + self.k_ii.bilinear(&v, &v)).sqrt()
    }

    /// `(Σ_slices w_s ‖f_s‖²_{H⁻¹})^{1/2}`.
    pub fn field_norm(&self, f: &DiscreteField) -> Result<f64> {
        let g = &self.grid;
        if !f.grid.same_layout(g) {
            return Err(KfpError::GridMismatch("field and norm grids differ".into()));
        }
        let nx = g.n_x();
        let parts: Result<Vec<f64>> = (0..g.n_slices())
            .into_par_iter()
            .map(|s| {
                let d = self.slice_norm(&f.values[s * nx..(s + 1) * nx])?;
                Ok(g.weight_slice(s % g.n_y(), s / g.n_y()) * d * d)
            })
            .collect();
        Ok(parts?.iter().sum::<f64>().sqrt())
    }
}

/// Slice dual norm of `f` (values on all `X`-nodes of `grid`).
pub fn h1x_dual_norm(grid: Arc<Grid>, f: &[f64]) -> Result<f64> {
    DualNorm::new(grid)?.slice_norm(f)
}

/// `(‖u_s‖_{L²}, ‖∇_X u_s‖_{L²})` for every slice.
fn slice_parts(u: &DiscreteField) -> Vec<(f64, f64)> {
    let g = &u.grid;
    let sampler = GradientSampler::new(g);
    let nx = g.n_x();
    let wx: Vec<f64> = (0..nx).map(|ix| if g.x_active(ix) { g.weight_x(ix) } else { 0.0 }).collect();
    (0..g.n_slices())
        .into_par_iter()
        .map(|s| {
            let v = &u.values[s * nx..(s + 1) * nx];
            let l2: f64 = v.iter().zip(&wx).map(|(a, w)| w * a * a).sum();
            (l2.sqrt(), sampler.energy(v, g.m).sqrt())
        })
        .collect()
}

fn aggregate(g: &Grid, per_slice: impl Iterator<Item = f64>) -> f64 {
    per_slice
        .enumerate()
        .map(|(s, v)| g.weight_slice(s % g.n_y(), s / g.n_y()) * v * v)
        .sum::<f64>()
        .sqrt()
}

/// `‖u‖_{L²(V; H¹_X)}` with `‖·‖_{H¹} = ‖·‖_{L²} + ‖∇_X ·‖_{L²}` per slice.
pub fn h1x_norm(u: &DiscreteField) -> f64 {
    aggregate(&u.grid, slice_parts(u).into_iter().map(|(a, b)| a + b))
}

/// `‖∇_X u‖_{L²}` over the whole space-time grid.
pub fn grad_x_norm(u: &DiscreteField) -> f64 {
    aggregate(&u.grid, slice_parts(u).into_iter().map(|(_, b)| b))
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct NormReport {
    pub l2: f64,
    pub h1x: f64,
    /// `‖u‖_{L²(V; H⁻¹_X)}`.
    pub h1x_dual: f64,
    /// `‖(−X·∇_Y + ∂_t) u‖_{L²(V; H⁻¹_X)}`.
    pub transport_dual: f64,
    pub w_norm: f64,
}

/// Full norm report; `w_norm = h1x + transport_dual`.
pub fn w_norm_with(u: &DiscreteField, dual: &DualNorm) -> Result<NormReport> {
    let h1x = h1x_norm(u);
    let transport_dual = dual.field_norm(&transport_field(u))?;
    Ok(NormReport {
        l2: u.l2_norm(),
        h1x,
        h1x_dual: dual.field_norm(u)?,
        transport_dual,
        w_norm: h1x + transport_dual,
    })
}

pub fn w_norm(u: &DiscreteField) -> Result<NormReport> {
    w_norm_with(u, &DualNorm::new(u.grid.clone())?)
}

/// Best constant in `‖f‖ ≤ c ‖∇_X f‖` over slice functions vanishing on
/// `∂U_X`: `λ_min^{−1/2}` of `K v = λ W v`, by inverse iteration.
pub fn poincare_constant_x(grid: &Grid) -> Result<f64> {
    let interior = interior_nodes(grid);
    if interior.is_empty() {
        return invalid("no interior X-nodes");
    }
    let w: Vec<f64> = interior.iter().map(|&ix| grid.weight_x(ix)).collect();
    let k = interior_stiffness(grid, &interior);
    let lu = SparseLu::factor(&k)?;
    let mut v = vec![1.0; interior.len()];
    let mut lambda = f64::INFINITY;
    let mut history = Vec::new();
    for _ in 0..1000 {
        let b: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a * b).collect();
        let next = lu.solve(&b)?;
        let norm = next.iter().zip(&w).map(|(a, b)| b * a * a).sum::<f64>().sqrt();
        v = next.iter().map(|a| a / norm).collect();
        let rq = k.bilinear(&v, &v);
        history.push(rq);
        if (lambda - rq).abs() <= 1e-15 * rq {
            return Ok(rq.powf(-0.5));
        }
        lambda = rq;
    }
    Err(KfpError::NonConvergence {
        message: "inverse iteration for the Dirichlet eigenvalue".into(),
        history,
    })
}

/// `‖f‖ / (‖∇_X f‖ + ‖(−X·∇_Y + ∂_t) f‖_{L²(H⁻¹)})`.
pub fn kinetic_ratio(f: &DiscreteField, dual: &DualNorm) -> Result<f64> {
    let den = grad_x_norm(f) + dual.field_norm(&transport_field(f))?;
    if den == 0.0 {
        return invalid("kinetic ratio undefined for a field with vanishing denominator");
    }
    Ok(f.l2_norm() / den)
}

#[derive(Clone, Debug, Serialize)]
pub struct KineticPoincareReport {
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub ratios: Vec<f64>,
}

/// Random smooth field from a few low cosine modes in normalized
/// coordinates, set to zero on Free nodes.
pub fn random_free_vanishing_field<R: Rng>(grid: Arc<Grid>, rng: &mut R) -> DiscreteField {
    let d = 2 * grid.m + 1;
    let modes: Vec<(f64, Vec<(f64, f64)>)> = (0..4)
        .map(|_| {
            let c = rng.random_range(-1.0..1.0);
            let axes = (0..d)
                .map(|_| (rng.random_range(0..3) as f64, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect();
            (c, axes)
        })
        .collect();
    let g = grid.clone();
    let bounds: Vec<(f64, f64)> = g
        .x_axes
        .iter()
        .chain(&g.y_axes)
        .chain([&g.t_axis])
        .map(|a| (a.lo(), a.hi()))
        .collect();
    let mut f = DiscreteField::from_fn(grid, |p| {
        let flat = p.to_flat();
        modes
            .iter()
            .map(|(c, axes)| {
                c * axes
                    .iter()
                    .zip(&flat)
                    .zip(&bounds)
                    .map(|(((k, ph), v), (lo, hi))| {
                        (std::f64::consts::PI * k * (v - lo) / (hi - lo) + ph).cos()
                    })
                    .product::<f64>()
            })
            .sum()
    });
    for n in 0..f.len() {
        if f.grid.class(n) == NodeClass::Free {
            f.values[n] = 0.0;
        }
    }
    f
}

/// Sampled falsification test of the kinetic Poincaré inequality.
pub fn kinetic_poincare_check<R: Rng>(grid: Arc<Grid>, trials: usize, rng: &mut R) -> Result<KineticPoincareReport> {
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let dual = DualNorm::new(grid.clone())?;
    let mut ratios = Vec::with_capacity(trials);
    while ratios.len() < trials {
        let f = random_free_vanishing_field(grid.clone(), rng);
        if f.sup_norm() == 0.0 {
            continue;
        }
        ratios.push(kinetic_ratio(&f, &dual)?);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if trials % 2 == 1 {
        sorted[trials / 2]
    } else {
        0.5 * (sorted[trials / 2 - 1] + sorted[trials / 2])
    };
    Ok(KineticPoincareReport {
        max_ratio: *sorted.last().unwrap(),
        median_ratio: median,
        ratios,
    })
}
