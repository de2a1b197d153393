//! Space-time system assembly and the transport stencils.

use std::sync::Arc;

use super::field::DiscreteField;
use super::grid::{Grid, NodeClass};
use super::stencil::Stiffness;
use crate::coefficients::EllipticMatrixField;
use crate::error::{KfpError, Result};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssembleOptions {
    /// Drop the `X`-diffusion term, leaving pure transport.
    pub diffusion: bool,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions { diffusion: true }
    }
}

/// Assembled system over all grid nodes.
///
/// Unknown rows read `(K u)_n / W_X − (X·∇_Y u − ∂_t u)_n = −g*_n` with
/// upwind `Y`-differences and backward time differences; Kolmogorov and
/// inactive rows are identities carrying `g` (or zero). Row `n` only couples
/// to time levels `k(n)` and `k(n) − 1`.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    pub grid: Arc<Grid>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub stiffness: Option<Stiffness>,
}

impl SparseOperator {
    pub fn unknowns(&self) -> usize {
        self.grid.classes().iter().filter(|c| c.is_unknown()).count()
    }

    /// First node index of every time level, plus the total.
    pub fn level_offsets(&self) -> Vec<usize> {
        let l = self.grid.level_size();
        (0..=self.grid.n_t()).map(|k| k * l).collect()
    }

    /// Diffusion block `−K` of slice `s` before boundary elimination.
    pub fn diffusion_block(&self, s: usize) -> Option<CsrMatrix> {
        self.stiffness.as_ref().map(|k| {
            let k = k.slice(s);
            CsrMatrix {
                values: k.values.iter().map(|v| -v).collect(),
                ..k.clone()
            }
        })
    }
}

/// Transport stencil of an unknown node: `(X·∇_Y − ∂_t)u ≈ Σ c_j u_j`.
/// Upwind in `y_i` keyed to `sign(x_i)`, backward in `t`.
pub(crate) fn transport_stencil(grid: &Grid, n: usize) -> Vec<(usize, f64)> {
    let (ix, iy, k) = grid.split(n);
    let x = grid.x_coords(ix);
    let yidx = grid.y_multi(iy);
    let mut out = Vec::with_capacity(2 * grid.m + 2);
    let mut diag = 0.0;
    for i in 0..grid.m {
        let axis = &grid.y_axes[i];
        let stride = grid.y_stride(i) * grid.n_x();
        if x[i] > 0.0 && yidx[i] + 1 < axis.len() {
            let c = x[i] / axis.h(yidx[i]);
            diag -= c;
            out.push((n + stride, c));
        } else if x[i] < 0.0 && yidx[i] > 0 {
            let c = x[i] / axis.h(yidx[i] - 1);
            diag += c;
            out.push((n - stride, -c));
        }
    }
    if k > 0 {
        let dt = grid.t_axis.h(k - 1);
        diag -= 1.0 / dt;
        out.push((n - grid.level_size(), 1.0 / dt));
    }
    out.push((n, diag));
    out
}

fn check_field(grid: &Grid, f: &DiscreteField, name: &str) -> Result<()> {
    if !f.grid.same_layout(grid) {
        return Err(KfpError::GridMismatch(format!("{name} lives on a different grid")));
    }
    Ok(())
}

pub fn assemble(
    a: &EllipticMatrixField,
    grid: Arc<Grid>,
    gstar: &DiscreteField,
    g: &DiscreteField,
) -> Result<SparseOperator> {
    assemble_with(a, grid, gstar, g, AssembleOptions::default())
}

pub fn assemble_with(
    a: &EllipticMatrixField,
    grid: Arc<Grid>,
    gstar: &DiscreteField,
    g: &DiscreteField,
    opts: AssembleOptions,
) -> Result<SparseOperator> {
    if a.m() != grid.m {
        return Err(KfpError::DimensionMismatch {
            expected: grid.m,
            got: a.m(),
        });
    }
    check_field(&grid, gstar, "g*")?;
    check_field(&grid, g, "g")?;
    let stiffness = opts.diffusion.then(|| Stiffness::build(&grid, Some(a)));
    let n_x = grid.n_x();
    let w_x: Vec<f64> = (0..n_x).map(|ix| grid.weight_x(ix)).collect();
    let mut trips = Vec::with_capacity(grid.len() * (2 * grid.m + 3 + 3usize.pow(grid.m as u32)));
    let mut rhs = vec![0.0; grid.len()];
    for n in 0..grid.len() {
        match grid.class(n) {
            NodeClass::Inactive => trips.push((n, n, 1.0)),
            NodeClass::Kolmogorov => {
                trips.push((n, n, 1.0));
                rhs[n] = g.values[n];
            }
            NodeClass::Interior | NodeClass::Free => {
                let (ix, _, _) = grid.split(n);
                let base = n - ix;
                if let Some(st) = &stiffness {
                    let s = n / n_x;
                    for (c, v) in st.slice(s).row(ix) {
                        trips.push((n, base + c, v / w_x[ix]));
                    }
                }
                for (j, c) in transport_stencil(&grid, n) {
                    trips.push((n, j, -c));
                }
                rhs[n] = -gstar.values[n];
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(grid.len(), grid.len(), &trips);
    Ok(SparseOperator {
        grid,
        matrix,
        rhs,
        stiffness,
    })
}

/// `(−X·∇_Y + ∂_t)u` at every active node. Upwind differences where the
/// upwind neighbor exists, the opposite one-sided difference otherwise;
/// backward in time except on the first level, which uses a forward one.
pub fn transport_field(u: &DiscreteField) -> DiscreteField {
    let grid = &u.grid;
    let v = &u.values;
    let mut out = vec![0.0; grid.len()];
    for (n, o) in out.iter_mut().enumerate() {
        if grid.class(n) == NodeClass::Inactive {
            continue;
        }
        let (ix, iy, k) = grid.split(n);
        let x = grid.x_coords(ix);
        let yidx = grid.y_multi(iy);
        let mut s = 0.0;
        for i in 0..grid.m {
            let axis = &grid.y_axes[i];
            let stride = grid.y_stride(i) * grid.n_x();
            let fwd = yidx[i] + 1 < axis.len();
            let bwd = yidx[i] > 0;
            let d = if (x[i] > 0.0 && fwd) || (x[i] < 0.0 && !bwd) {
                (v[n + stride] - v[n]) / axis.h(yidx[i])
            } else if x[i] != 0.0 {
                (v[n] - v[n - stride]) / axis.h(yidx[i] - 1)
            } else {
                0.0
            };
            s -= x[i] * d;
        }
        let l = grid.level_size();
        s += if k > 0 {
            (v[n] - v[n - l]) / grid.t_axis.h(k - 1)
        } else {
            (v[n + l] - v[n]) / grid.t_axis.h(0)
        };
        *o = s;
    }
    DiscreteField {
        grid: grid.clone(),
        values: out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::grid::{build_grid, Resolution};
    use crate::geometry::{AxisBox, ProductDomain};

    fn grid(m: usize, n: usize) -> Arc<Grid> {
        let d = ProductDomain::new(AxisBox::cube(m, -1.0, 1.0).unwrap(), AxisBox::cube(m + 1, 0.0, 1.0).unwrap()).unwrap();
        Arc::new(build_grid(&d, &Resolution::uniform(m, n)).unwrap())
    }

    #[test]
    fn unknown_rows_annihilate_constants() {
        let g = grid(2, 5);
        let a = EllipticMatrixField::constant_diag(&[2.0, 0.5], 2.0).unwrap();
        let zero = DiscreteField::zeros(g.clone());
        let op = assemble(&a, g.clone(), &zero, &zero).unwrap();
        let ones = vec![1.0; g.len()];
        let r = op.matrix.matvec(&ones);
        for n in 0..g.len() {
            if g.class(n).is_unknown() {
                assert!(r[n].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diffusion_block_is_symmetric_nsd() {
        let g = grid(1, 7);
        let a = EllipticMatrixField::new(
            1,
            3.0,
            crate::coefficients::CoefficientFamily::Periodic {
                amplitude: 0.5,
                wavenumber: 2.0,
            },
        )
        .unwrap();
        let zero = DiscreteField::zeros(g.clone());
        let op = assemble(&a, g.clone(), &zero, &zero).unwrap();
        for s in [0, 5, g.n_slices() - 1] {
            let d = op.diffusion_block(s).unwrap();
            assert_eq!(d.max_asymmetry(), 0.0);
            let eig = nalgebra::SymmetricEigen::new(d.to_dense()).eigenvalues;
            assert!(eig.iter().all(|l| *l <= 1e-12));
        }
    }

    #[test]
    fn rows_couple_only_adjacent_levels() {
        let g = grid(1, 5);
        let a = EllipticMatrixField::identity(1);
        let zero = DiscreteField::zeros(g.clone());
        let op = assemble(&a, g.clone(), &zero, &zero).unwrap();
        let l = g.level_size();
        for r in 0..g.len() {
            for (c, _) in op.matrix.row(r) {
                assert!(c <= r / l * l + l - 1 && c + l >= r / l * l);
            }
        }
    }

    #[test]
    fn transport_field_of_time_is_one() {
        let g = grid(1, 5);
        let u = DiscreteField::from_fn(g.clone(), |p| p.t);
        assert!(transport_field(&u).values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let u = DiscreteField::from_fn(g.clone(), |p| p.y[0]);
        let tf = transport_field(&u);
        for n in 0..g.len() {
            assert!((tf.values[n] + g.point(n).x[0]).abs() < 1e-12);
        }
    }
}
