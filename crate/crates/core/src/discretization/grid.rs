//! Tensor grids over `U_X × V_{Y,t}` with per-node boundary classes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, KfpError, Result};
use crate::geometry::{LipschitzGraphDomain, Point, ProductDomain};

/// Strictly increasing node coordinates along one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub nodes: Vec<f64>,
}

impl Axis {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return invalid("an axis needs at least two nodes");
        }
        if nodes.iter().any(|v| !v.is_finite()) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("axis nodes must be finite and strictly increasing");
        }
        Ok(Axis { nodes })
    }

    /// `n` equispaced nodes including both end points.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return invalid(format!("degenerate axis [{lo}, {hi}] with {n} nodes"));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
        nodes[n - 1] = hi;
        Ok(Axis { nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.nodes[0]
    }

    pub fn hi(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Width of cell `i`, between nodes `i` and `i + 1`.
    pub fn h(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn max_h(&self) -> f64 {
        (0..self.len() - 1).map(|i| self.h(i)).fold(0.0, f64::max)
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let n = self.len();
        let left = if i > 0 { self.h(i - 1) } else { 0.0 };
        let right = if i + 1 < n { self.h(i) } else { 0.0 };
        0.5 * (left + right)
    }

    /// Index of the node equal to `v` up to `tol`, if any.
    pub fn find(&self, v: f64, tol: f64) -> Option<usize> {
        let k = self.nodes.partition_point(|x| *x < v - tol);
        (k < self.len() && (self.nodes[k] - v).abs() <= tol).then_some(k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeClass {
    Interior,
    Kolmogorov,
    Free,
    /// Outside a graph-cut domain; carries no equation.
    Inactive,
}

impl NodeClass {
    /// Nodes whose value is solved for.
    pub fn is_unknown(self) -> bool {
        matches!(self, NodeClass::Interior | NodeClass::Free)
    }
}

/// Per-axis node counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub nx: Vec<usize>,
    pub ny: Vec<usize>,
    pub nt: usize,
}

impl Resolution {
    pub fn uniform(m: usize, n: usize) -> Self {
        Resolution {
            nx: vec![n; m],
            ny: vec![n; m],
            nt: n,
        }
    }
}

/// Tensor grid with nodes ordered time-major:
/// `n = (k·N_Y + iy)·N_X + ix`, with `x_1` fastest inside `ix` and `y_1`
/// fastest inside `iy`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub m: usize,
    pub x_axes: Vec<Axis>,
    pub y_axes: Vec<Axis>,
    pub t_axis: Axis,
    n_x: usize,
    n_y: usize,
    x_active: Vec<bool>,
    x_boundary: Vec<bool>,
    class: Vec<NodeClass>,
}

fn flat_size(axes: &[Axis]) -> usize {
    axes.iter().map(Axis::len).product()
}

fn unflatten(mut k: usize, axes: &[Axis]) -> Vec<usize> {
    axes.iter()
        .map(|a| {
            let i = k % a.len();
            k /= a.len();
            i
        })
        .collect()
}

impl Grid {
    /// Grid from explicit axes. With `graph`, `X`-nodes with
    /// `x_m < ψ(x_1..x_{m−1})` are inactive and the active corners of every
    /// `X`-cell that touches an inactive node form a Dirichlet layer.
    pub fn from_axes(
        x_axes: Vec<Axis>,
        y_axes: Vec<Axis>,
        t_axis: Axis,
        graph: Option<&LipschitzGraphDomain>,
    ) -> Result<Grid> {
        let m = x_axes.len();
        if m == 0 || y_axes.len() != m {
            return Err(KfpError::DimensionMismatch {
                expected: m.max(1),
                got: y_axes.len(),
            });
        }
        if let Some(g) = graph {
            if g.m != m {
                return Err(KfpError::DimensionMismatch {
                    expected: m,
                    got: g.m,
                });
            }
        }
        let n_x = flat_size(&x_axes);
        let n_y = flat_size(&y_axes);
        let mut grid = Grid {
            m,
            x_axes,
            y_axes,
            t_axis,
            n_x,
            n_y,
            x_active: vec![true; n_x],
            x_boundary: vec![false; n_x],
            class: Vec::new(),
        };
        for ix in 0..n_x {
            let idx = unflatten(ix, &grid.x_axes);
            grid.x_boundary[ix] = idx
                .iter()
                .zip(&grid.x_axes)
                .any(|(&i, a)| i == 0 || i + 1 == a.len());
            if let Some(g) = graph {
                let x = grid.x_coords(ix);
                let psi = g.psi(&x[..m - 1]);
                let tol = 1e-12 * (1.0 + psi.abs());
                grid.x_active[ix] = x[m - 1] >= psi - tol;
            }
        }
        if graph.is_some() {
            grid.mark_cut_layer();
        }
        if !grid.x_active.iter().zip(&grid.x_boundary).any(|(a, b)| *a && !*b) {
            return invalid("grid has no interior X-nodes");
        }
        grid.classify();
        Ok(grid)
    }

    fn mark_cut_layer(&mut self) {
        let cells: Vec<usize> = self.x_axes.iter().map(|a| a.len() - 1).collect();
        let n_cells: usize = cells.iter().product();
        let mut layer = vec![false; self.n_x];
        for c in 0..n_cells {
            let corners = self.cell_corners(c);
            if corners.iter().any(|&k| !self.x_active[k]) {
                for &k in &corners {
                    if self.x_active[k] {
                        layer[k] = true;
                    }
                }
            }
        }
        for (b, l) in self.x_boundary.iter_mut().zip(layer) {
            *b |= l;
        }
    }

    fn classify(&mut self) {
        let m = self.m;
        let nt = self.t_axis.len();
        let mut class = Vec::with_capacity(self.len());
        for k in 0..nt {
            for iy in 0..self.n_y {
                let yidx = unflatten(iy, &self.y_axes);
                for ix in 0..self.n_x {
                    if !self.x_active[ix] {
                        class.push(NodeClass::Inactive);
                        continue;
                    }
                    if self.x_boundary[ix] || k == 0 {
                        class.push(NodeClass::Kolmogorov);
                        continue;
                    }
                    let x = self.x_coords(ix);
                    let mut kolmogorov = false;
                    let mut on_face = k + 1 == nt;
                    for i in 0..m {
                        let last = self.y_axes[i].len() - 1;
                        if yidx[i] == 0 {
                            on_face = true;
                            kolmogorov |= x[i] < 0.0;
                        }
                        if yidx[i] == last {
                            on_face = true;
                            kolmogorov |= x[i] > 0.0;
                        }
                    }
                    class.push(if kolmogorov {
                        NodeClass::Kolmogorov
                    } else if on_face {
                        NodeClass::Free
                    } else {
                        NodeClass::Interior
                    });
                }
            }
        }
        self.class = class;
    }

    /// Flat `X`-indices of the `2^m` corners of `X`-cell `c`, corner bit `i`
    /// set meaning the upper node along axis `i`.
    pub fn cell_corners(&self, c: usize) -> Vec<usize> {
        let m = self.m;
        let mut rem = c;
        let mut base = vec![0usize; m];
        for (i, a) in self.x_axes.iter().enumerate() {
            base[i] = rem % (a.len() - 1);
            rem /= a.len() - 1;
        }
        (0..1usize << m)
            .map(|bits| {
                let mut k = 0;
                let mut stride = 1;
                for i in 0..m {
                    k += (base[i] + ((bits >> i) & 1)) * stride;
                    stride *= self.x_axes[i].len();
                }
                k
            })
            .collect()
    }

    /// Lower-corner multi-index and widths of `X`-cell `c`.
    pub fn cell_geometry(&self, c: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rem = c;
        let mut center = Vec::with_capacity(self.m);
        let mut widths = Vec::with_capacity(self.m);
        for a in &self.x_axes {
            let i = rem % (a.len() - 1);
            rem /= a.len() - 1;
            center.push(0.5 * (a.nodes[i] + a.nodes[i + 1]));
            widths.push(a.h(i));
        }
        (center, widths)
    }

    pub fn n_x_cells(&self) -> usize {
        self.x_axes.iter().map(|a| a.len() - 1).product()
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y * self.t_axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n_t(&self) -> usize {
        self.t_axis.len()
    }

    /// Nodes per time level.
    pub fn level_size(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn n_slices(&self) -> usize {
        self.n_y * self.n_t()
    }

    pub fn index(&self, ix: usize, iy: usize, k: usize) -> usize {
        (k * self.n_y + iy) * self.n_x + ix
    }

    /// `(ix, iy, k)` of node `n`.
    pub fn split(&self, n: usize) -> (usize, usize, usize) {
        let ix = n % self.n_x;
        let rest = n / self.n_x;
        (ix, rest % self.n_y, rest / self.n_y)
    }

    pub fn x_multi(&self, ix: usize) -> Vec<usize> {
        unflatten(ix, &self.x_axes)
    }

    pub fn y_multi(&self, iy: usize) -> Vec<usize> {
        unflatten(iy, &self.y_axes)
    }

    pub fn x_coords(&self, ix: usize) -> Vec<f64> {
        self.x_multi(ix)
            .iter()
            .zip(&self.x_axes)
            .map(|(&i, a)| a.nodes[i])
            .collect()
    }

    pub fn y_coords(&self, iy: usize) -> Vec<f64> {
        self.y_multi(iy)
            .iter()
            .zip(&self.y_axes)
            .map(|(&i, a)| a.nodes[i])
            .collect()
    }

    pub fn point(&self, n: usize) -> Point {
        let (ix, iy, k) = self.split(n);
        Point {
            x: self.x_coords(ix),
            y: self.y_coords(iy),
            t: self.t_axis.nodes[k],
        }
    }

    pub fn class(&self, n: usize) -> NodeClass {
        self.class[n]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.class
    }

    pub fn x_active(&self, ix: usize) -> bool {
        self.x_active[ix]
    }

    /// Active `X`-node on `∂U_X` or on the graph-cut layer.
    pub fn x_on_boundary(&self, ix: usize) -> bool {
        self.x_boundary[ix]
    }

    /// Active `X`-node strictly inside.
    pub fn x_interior(&self, ix: usize) -> bool {
        self.x_active[ix] && !self.x_boundary[ix]
    }

    /// Flat `X` stride of axis `i`.
    pub fn x_stride(&self, i: usize) -> usize {
        self.x_axes[..i].iter().map(Axis::len).product()
    }

    pub fn y_stride(&self, i: usize) -> usize {
        self.y_axes[..i].iter().map(Axis::len).product()
    }

    /// Trapezoid weight of `X`-node `ix`.
    pub fn weight_x(&self, ix: usize) -> f64 {
        self.x_multi(ix)
            .iter()
            .zip(&self.x_axes)
            .map(|(&i, a)| a.weight(i))
            .product()
    }

    pub fn weight_y(&self, iy: usize) -> f64 {
        self.y_multi(iy)
            .iter()
            .zip(&self.y_axes)
            .map(|(&i, a)| a.weight(i))
            .product()
    }

    /// Weight of slice `(iy, k)` in the `(Y,t)` quadrature.
    pub fn weight_slice(&self, iy: usize, k: usize) -> f64 {
        self.weight_y(iy) * self.t_axis.weight(k)
    }

    /// Full space-time trapezoid weight; zero at inactive nodes.
    pub fn weight(&self, n: usize) -> f64 {
        let (ix, iy, k) = self.split(n);
        if !self.x_active[ix] {
            return 0.0;
        }
        self.weight_x(ix) * self.weight_slice(iy, k)
    }

    /// Largest spacing over all axes.
    pub fn max_h(&self) -> f64 {
        self.x_axes
            .iter()
            .chain(&self.y_axes)
            .chain(std::iter::once(&self.t_axis))
            .map(Axis::max_h)
            .fold(0.0, f64::max)
    }

    pub fn count(&self, c: NodeClass) -> usize {
        self.class.iter().filter(|k| **k == c).count()
    }

    pub fn same_layout(&self, other: &Grid) -> bool {
        self.x_axes == other.x_axes
            && self.y_axes == other.y_axes
            && self.t_axis == other.t_axis
            && self.x_active == other.x_active
    }
}

/// Uniform grid on a box: vertex nodes in every direction, walls included.
/// Even `X` counts on boxes symmetric about `x_i = 0` keep nodes off `x_i = 0`.
pub fn build_grid(domain: &ProductDomain, res: &Resolution) -> Result<Grid> {
    let m = domain.m();
    if res.nx.len() != m || res.ny.len() != m {
        return Err(KfpError::DimensionMismatch {
            expected: m,
            got: res.nx.len().min(res.ny.len()),
        });
    }
    if res.nx.iter().chain(&res.ny).chain([&res.nt]).any(|&n| n < 3) {
        return invalid("node counts must be at least 3 per axis");
    }
    let x_axes = domain
        .ux
        .bounds
        .iter()
        .zip(&res.nx)
        .map(|([lo, hi], &n)| Axis::uniform(*lo, *hi, n))
        .collect::<Result<Vec<_>>>()?;
    let y_axes = domain.vyt.bounds[..m]
        .iter()
        .zip(&res.ny)
        .map(|([lo, hi], &n)| Axis::uniform(*lo, *hi, n))
        .collect::<Result<Vec<_>>>()?;
    let [t0, t1] = domain.vyt.bounds[m];
    Grid::from_axes(x_axes, y_axes, Axis::uniform(t0, t1, res.nt)?, None)
}
