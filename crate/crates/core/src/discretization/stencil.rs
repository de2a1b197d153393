//! Slice diffusion matrices `K = Gᵀ M G` built from corner gradients.
//!
//! On every `X`-cell the gradient is sampled at cell corners, each component
//! being the edge difference leaving that corner. One corner for `m = 1`;
//! for `m = 2` the two corners whose edges cover the cell once, picked by the
//! sign of `a_12` so that mildly anisotropic tensors keep an M-matrix; all
//! `2^m` corners otherwise. Each sample carries weight `|cell| / samples`
//! times `A` at the cell center.

use std::collections::HashMap;
use std::sync::Arc;

use super::grid::Grid;
use crate::coefficients::EllipticMatrixField;
use crate::sparse::CsrMatrix;

/// One gradient sample: the participating cell corners (local bit patterns)
/// and their coefficient vectors, so `∇u ≈ Σ_c u_c · coef_c`.
pub(crate) struct GradientSample {
    pub corners: Vec<usize>,
    pub coefs: Vec<Vec<f64>>,
}

/// Corner bit patterns sampled in a cell, given `a_12` at its center.
pub(crate) fn sample_corners(m: usize, a12: f64) -> Vec<usize> {
    match m {
        1 => vec![0],
        2 if a12 >= 0.0 => vec![0b01, 0b10],
        2 => vec![0b00, 0b11],
        _ => (0..1usize << m).collect(),
    }
}

pub(crate) fn gradient_sample(m: usize, bits: usize, widths: &[f64]) -> GradientSample {
    let mut map: Vec<(usize, Vec<f64>)> = Vec::with_capacity(m + 1);
    let add = |corner: usize, i: usize, v: f64, map: &mut Vec<(usize, Vec<f64>)>| {
        match map.iter_mut().find(|(c, _)| *c == corner) {
            Some((_, coef)) => coef[i] += v,
            None => {
                let mut coef = vec![0.0; m];
                coef[i] = v;
                map.push((corner, coef));
            }
        }
    };
    for (i, h) in widths.iter().enumerate() {
        add(bits | (1 << i), i, 1.0 / h, &mut map);
        add(bits & !(1 << i), i, -1.0 / h, &mut map);
    }
    let (corners, coefs) = map.into_iter().unzip();
    GradientSample { corners, coefs }
}

/// Gradient samples of one cell with their quadrature weights, in the order
/// used by both the stiffness matrix and the flux variables.
pub(crate) fn cell_samples(grid: &Grid, cell: usize, a_center: &[f64]) -> Vec<(GradientSample, f64)> {
    let m = grid.m;
    let (_, widths) = grid.cell_geometry(cell);
    let a12 = if m == 2 { a_center[1] } else { 0.0 };
    let corners = sample_corners(m, a12);
    let vol: f64 = widths.iter().product();
    let w = vol / corners.len() as f64;
    corners
        .into_iter()
        .map(|bits| (gradient_sample(m, bits, &widths), w))
        .collect()
}

/// Whether every corner of `cell` is an active node.
pub(crate) fn cell_active(grid: &Grid, cell: usize) -> bool {
    grid.cell_corners(cell).iter().all(|&k| grid.x_active(k))
}

/// `A` (or `I` when `a` is `None`) at the center of `cell` on slice
/// `(iy, k)`, symmetrized.
pub(crate) fn cell_coefficient(grid: &Grid, a: Option<&EllipticMatrixField>, cell: usize, iy: usize, k: usize) -> Vec<f64> {
    let m = grid.m;
    let mut out = vec![0.0; m * m];
    match a {
        None => {
            for i in 0..m {
                out[i * m + i] = 1.0;
            }
        }
        Some(a) => {
            let (center, _) = grid.cell_geometry(cell);
            a.eval_into(&center, &grid.y_coords(iy), grid.t_axis.nodes[k], &mut out);
            for i in 0..m {
                for j in (i + 1)..m {
                    let v = 0.5 * (out[i * m + j] + out[j * m + i]);
                    out[i * m + j] = v;
                    out[j * m + i] = v;
                }
            }
        }
    }
    out
}

fn quad(coef_a: &[f64], mat: &[f64], coef_b: &[f64]) -> f64 {
    let m = coef_a.len();
    let mut s = 0.0;
    for i in 0..m {
        if coef_a[i] == 0.0 {
            continue;
        }
        for j in 0..m {
            s += coef_a[i] * mat[i * m + j] * coef_b[j];
        }
    }
    s
}

/// Symmetric positive semidefinite `N_X × N_X` slice stiffness matrix, in
/// flat `X` indices. Cells with an inactive corner contribute nothing.
pub fn slice_stiffness(grid: &Grid, a: Option<&EllipticMatrixField>, iy: usize, k: usize) -> CsrMatrix {
    let mut upper: HashMap<(usize, usize), f64> = HashMap::new();
    let mut order: Vec<(usize, usize)> = Vec::new();
    for cell in 0..grid.n_x_cells() {
        if !cell_active(grid, cell) {
            continue;
        }
        let corners = grid.cell_corners(cell);
        let mat = cell_coefficient(grid, a, cell, iy, k);
        for (s, w) in cell_samples(grid, cell, &mat) {
            for (p, cp) in s.corners.iter().zip(&s.coefs) {
                for (q, cq) in s.corners.iter().zip(&s.coefs) {
                    let (ga, gb) = (corners[*p], corners[*q]);
                    if ga > gb {
                        continue;
                    }
                    let v = w * quad(cp, &mat, cq);
                    let e = upper.entry((ga, gb)).or_insert_with(|| {
                        order.push((ga, gb));
                        0.0
                    });
                    *e += v;
                }
            }
        }
    }
    let mut trips = Vec::with_capacity(2 * order.len());
    for key in order {
        let v = upper[&key];
        trips.push((key.0, key.1, v));
        if key.0 != key.1 {
            trips.push((key.1, key.0, v));
        }
    }
    CsrMatrix::from_triplets(grid.n_x(), grid.n_x(), &trips)
}

/// Precomputed `A = I` gradient samples of every active cell, for
/// evaluating `‖∇_X v‖² = Σ w |g|²` as a sum of squares.
pub(crate) struct GradientSampler {
    samples: Vec<(Vec<(usize, Vec<f64>)>, f64)>,
}

impl GradientSampler {
    pub fn new(grid: &Grid) -> Self {
        let m = grid.m;
        let mut eye = vec![0.0; m * m];
        for i in 0..m {
            eye[i * m + i] = 1.0;
        }
        let mut samples = Vec::new();
        for cell in 0..grid.n_x_cells() {
            if !cell_active(grid, cell) {
                continue;
            }
            let corners = grid.cell_corners(cell);
            for (s, w) in cell_samples(grid, cell, &eye) {
                let nodes = s.corners.iter().map(|&c| corners[c]).zip(s.coefs).collect();
                samples.push((nodes, w));
            }
        }
        GradientSampler { samples }
    }

    pub fn energy(&self, v: &[f64], m: usize) -> f64 {
        let mut total = 0.0;
        let mut g = vec![0.0; m];
        for (nodes, w) in &self.samples {
            g.fill(0.0);
            for (n, coef) in nodes {
                for i in 0..m {
                    g[i] += coef[i] * v[*n];
                }
            }
            total += w * g.iter().map(|a| a * a).sum::<f64>();
        }
        total
    }
}

/// Slice stiffness matrices for every `(Y,t)` slice, shared when `A` does
/// not vary.
#[derive(Clone, Debug)]
pub enum Stiffness {
    Shared(Arc<CsrMatrix>),
    PerSlice(Arc<Vec<CsrMatrix>>),
}

impl Stiffness {
    pub fn build(grid: &Grid, a: Option<&EllipticMatrixField>) -> Stiffness {
        use rayon::prelude::*;
        match a {
            Some(a) if !a.is_constant() => {
                let mats: Vec<CsrMatrix> = (0..grid.n_slices())
                    .into_par_iter()
                    .map(|s| slice_stiffness(grid, Some(a), s % grid.n_y(), s / grid.n_y()))
                    .collect();
                Stiffness::PerSlice(Arc::new(mats))
            }
            _ => Stiffness::Shared(Arc::new(slice_stiffness(grid, a, 0, 0))),
        }
    }

    /// Matrix of slice `s = k·N_Y + iy`.
    pub fn slice(&self, s: usize) -> &CsrMatrix {
        match self {
            Stiffness::Shared(m) => m,
            Stiffness::PerSlice(v) => &v[s],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientFamily;
    use crate::discretization::grid::{build_grid, Resolution};
    use crate::geometry::{AxisBox, ProductDomain};

    fn grid(m: usize, n: usize) -> Grid {
        let d = ProductDomain::new(AxisBox::cube(m, -1.0, 1.0).unwrap(), AxisBox::cube(m + 1, 0.0, 1.0).unwrap()).unwrap();
        build_grid(&d, &Resolution::uniform(m, n)).unwrap()
    }

    #[test]
    fn one_dimensional_is_three_point() {
        let g = grid(1, 6);
        let k = slice_stiffness(&g, None, 0, 0);
        let h = 2.0 / 5.0;
        for i in 1..5 {
            assert!((k.get(i, i) - 2.0 / h).abs() < 1e-13);
            assert!((k.get(i, i - 1) + 1.0 / h).abs() < 1e-13);
        }
        assert!((k.get(0, 0) - 1.0 / h).abs() < 1e-13);
    }

    #[test]
    fn two_dimensional_diagonal_is_five_point() {
        let g = grid(2, 5);
        let a = EllipticMatrixField::constant_diag(&[2.0, 0.5], 2.0).unwrap();
        let k = slice_stiffness(&g, Some(&a), 0, 0);
        let c = 2 + 5 * 2;
        assert!((k.get(c, c) - 2.0 * (2.0 + 0.5)).abs() < 1e-13);
        assert!((k.get(c, c + 1) + 2.0).abs() < 1e-13);
        assert!((k.get(c, c + 5) + 0.5).abs() < 1e-13);
        assert_eq!(k.get(c, c + 6), 0.0);
    }

    #[test]
    fn quadratic_form_matches_energy_of_linear_function() {
        // For u linear, uᵀKu = ∫ ∇u·A∇u exactly.
        let g = grid(2, 7);
        let a = EllipticMatrixField::new(
            2,
            3.0,
            CoefficientFamily::Rotated {
                eigenvalues: vec![3.0, 0.5],
                angle: 0.4,
            },
        )
        .unwrap();
        let k = slice_stiffness(&g, Some(&a), 0, 0);
        let u: Vec<f64> = (0..g.n_x()).map(|ix| {
            let x = g.x_coords(ix);
            1.5 * x[0] - 0.7 * x[1]
        }).collect();
        let mat = a.eval(&g.point(0));
        let grad = nalgebra::DVector::from_vec(vec![1.5, -0.7]);
        let exact = 4.0 * (grad.transpose() * mat * &grad)[(0, 0)];
        assert!((k.bilinear(&u, &u) - exact).abs() < 1e-11);
    }

    #[test]
    fn symmetric_and_constants_in_kernel() {
        let g = grid(2, 6);
        let a = EllipticMatrixField::new(
            2,
            4.0,
            CoefficientFamily::Checkerboard {
                a: 4.0,
                b: 0.25,
                period: Some(0.3),
            },
        )
        .unwrap();
        let k = slice_stiffness(&g, Some(&a), 1, 2);
        assert_eq!(k.max_asymmetry(), 0.0);
        let ones = vec![1.0; g.n_x()];
        assert!(k.matvec(&ones).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn mild_anisotropy_keeps_m_matrix() {
        let g = grid(2, 6);
        for angle in [0.3, -0.3] {
            let a = EllipticMatrixField::new(
                2,
                2.0,
                CoefficientFamily::Rotated {
                    eigenvalues: vec![1.5, 1.0],
                    angle,
                },
            )
            .unwrap();
            let k = slice_stiffness(&g, Some(&a), 0, 0);
            for r in 0..g.n_x() {
                for (c, v) in k.row(r) {
                    if c != r {
                        assert!(v <= 1e-14, "positive off-diagonal {v}");
                    }
                }
            }
        }
    }
}
