//! Dirichlet problems on `Ω × ℝ^m × ℝ` for a Lipschitz graph domain `Ω`,
//! approximated on the increasing family `U_X^R × V^R` with cut-off data.
//!
//! Every level uses graded axes that share one uniform core lattice, so the
//! probe nodes coincide across radii and the probe restriction is exact.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::EllipticMatrixField;
use crate::discretization::{solve_problem, Axis, DiscreteField, Grid, NodeClass, SolveOptions};
use crate::error::{invalid, KfpError, Result};
use crate::geometry::{exhaustion_domain, AxisBox, ExhaustionDomain, LipschitzGraphDomain, Point};

/// `1` below `R/2`, `0` above `3R/4`, and the cubic smoothstep between.
pub fn cutoff_profile(r: f64, radius: f64) -> f64 {
    let s = (r - 0.5 * radius) / (0.25 * radius);
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * (3.0 - 2.0 * s)
    }
}

/// Whether active `X`-node `ix` lies on the graph part of `∂U_X^R`, i.e. on
/// the boundary layer but off the artificial walls `|x_i| = R`, `x_m = 4MR`.
fn on_graph_part(grid: &Grid, ix: usize, dom: &ExhaustionDomain) -> bool {
    if !grid.x_on_boundary(ix) {
        return false;
    }
    let m = grid.m;
    let x = grid.x_coords(ix);
    let tol = 1e-9 * dom.radius;
    let top = dom.bbox.bounds[m - 1][1];
    x[m - 1] < top - tol && x[..m - 1].iter().all(|v| v.abs() < dom.radius - tol)
}

/// `g φ_R`: graph-part nodes are weighted by the ramp in the tangential
/// sup-distance `max |x_i|`, other Kolmogorov nodes are set to zero.
pub fn cutoff_data(g: &DiscreteField, dom: &ExhaustionDomain) -> Result<DiscreteField> {
    let grid = &g.grid;
    if grid.m != dom.omega.m {
        return Err(KfpError::DimensionMismatch {
            expected: dom.omega.m,
            got: grid.m,
        });
    }
    let m = grid.m;
    let r = dom.radius;
    let weight: Vec<f64> = (0..grid.n_x())
        .map(|ix| {
            let x = grid.x_coords(ix);
            let dist = x[..m - 1].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            cutoff_profile(dist, r)
        })
        .collect();
    let graph: Vec<bool> = (0..grid.n_x()).map(|ix| on_graph_part(grid, ix, dom)).collect();
    let values = g
        .values
        .iter()
        .enumerate()
        .map(|(n, v)| {
            let ix = n % grid.n_x();
            match grid.class(n) {
                NodeClass::Inactive => 0.0,
                NodeClass::Kolmogorov if !graph[ix] => 0.0,
                _ => v * weight[ix],
            }
        })
        .collect();
    DiscreteField::new(grid.clone(), values)
}

/// Graded discretization of the exhaustion boxes: a uniform core lattice of
/// spacing `h` anchored at the core's lower end, widened geometrically by
/// `growth` outside the core.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradedSpec {
    /// `2m + 1` axes: `x`, then `y`, then `t`.
    pub core: AxisBox,
    pub h: Vec<f64>,
    pub growth: f64,
}

/// Nodes covering `[lo, hi]`: core lattice points inside, geometric steps
/// outside, end points exact. A last gap shorter than half the previous one
/// is merged into it.
pub fn graded_axis(lo: f64, hi: f64, core: [f64; 2], h: f64, growth: f64) -> Result<Axis> {
    if !(hi > lo) || !(h > 0.0) || !(growth >= 1.0) || !(core[1] > core[0]) {
        return invalid(format!("bad graded axis [{lo}, {hi}] core {core:?} h {h} growth {growth}"));
    }
    let steps = ((core[1] - core[0]) / h).round().max(1.0) as usize;
    let hc = (core[1] - core[0]) / steps as f64;
    let lattice: Vec<f64> = (0..=steps).map(|i| core[0] + i as f64 * hc).collect();
    let tol = 1e-9 * hc;
    let inner: Vec<f64> = lattice.iter().copied().filter(|v| *v > lo + tol && *v < hi - tol).collect();
    let mut upper = Vec::new();
    let (mut x, mut step) = (core[1], hc);
    while x < hi - tol {
        if x > lo + tol && x > core[1] + tol {
            upper.push(x);
        }
        step *= growth;
        x += step;
    }
    let mut lower = Vec::new();
    let (mut x, mut step) = (core[0], hc);
    while x > lo + tol {
        if x < hi - tol && x < core[0] - tol {
            lower.push(x);
        }
        step *= growth;
        x -= step;
    }
    lower.reverse();
    let mut nodes = vec![lo];
    nodes.extend(lower);
    nodes.extend(inner);
    nodes.extend(upper);
    nodes.push(hi);
    merge_short_end(&mut nodes, false);
    merge_short_end(&mut nodes, true);
    Axis::new(nodes)
}

fn merge_short_end(nodes: &mut Vec<f64>, front: bool) {
    let n = nodes.len();
    if n < 4 {
        return;
    }
    let (last, prev) = if front {
        (nodes[1] - nodes[0], nodes[2] - nodes[1])
    } else {
        (nodes[n - 1] - nodes[n - 2], nodes[n - 2] - nodes[n - 3])
    };
    if last < 0.5 * prev {
        if front {
            nodes.remove(1);
        } else {
            nodes.remove(n - 2);
        }
    }
}

/// Grid of `U_X^R × V^R` with the graph cut applied.
pub fn exhaustion_grid(dom: &ExhaustionDomain, spec: &GradedSpec) -> Result<Grid> {
    let m = dom.omega.m;
    if spec.core.dim() != 2 * m + 1 || spec.h.len() != 2 * m + 1 {
        return Err(KfpError::DimensionMismatch {
            expected: 2 * m + 1,
            got: spec.core.dim().min(spec.h.len()),
        });
    }
    let bounds: Vec<[f64; 2]> = dom.bbox.bounds.iter().chain(&dom.vyt.bounds).copied().collect();
    let axes = bounds
        .iter()
        .enumerate()
        .map(|(i, [lo, hi])| graded_axis(*lo, *hi, spec.core.bounds[i], spec.h[i], spec.growth))
        .collect::<Result<Vec<_>>>()?;
    let x_axes = axes[..m].to_vec();
    let y_axes = axes[m..2 * m].to_vec();
    Grid::from_axes(x_axes, y_axes, axes[2 * m].clone(), Some(&dom.omega))
}

/// Scalar data on `Ω × ℝ^m × ℝ`.
pub type DataFn<'a> = &'a (dyn Fn(&Point) -> f64 + Sync);

#[derive(Clone, Debug)]
pub struct ExhaustionLevel {
    pub radius: f64,
    pub unknowns: usize,
    /// Solution restricted to the probe nodes.
    pub probe_field: DiscreteField,
    /// `sup |u_R − u_{R_prev}|` on the probe; `None` for the first radius.
    pub sup_difference: Option<f64>,
    pub solution_sup: f64,
    pub data_sup: f64,
    pub weak_residual: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct ExhaustionReport {
    pub levels: Vec<ExhaustionLevel>,
    /// Differences strictly decrease along the sequence.
    pub monotone: bool,
    /// `‖u_R‖_∞ ≤ ‖g_R‖_∞` at every level, up to roundoff.
    pub bounded_by_data: bool,
    pub nested: bool,
}

impl ExhaustionReport {
    pub fn differences(&self) -> Vec<f64> {
        self.levels.iter().filter_map(|l| l.sup_difference).collect()
    }
}

fn probe_axes(grid: &Grid, probe: &AxisBox) -> Result<Vec<(usize, Axis)>> {
    let all: Vec<&Axis> = grid.x_axes.iter().chain(&grid.y_axes).chain([&grid.t_axis]).collect();
    all.iter()
        .zip(&probe.bounds)
        .map(|(a, [lo, hi])| {
            let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            let first = a.nodes.partition_point(|v| *v < lo - tol);
            let nodes: Vec<f64> = a.nodes[first..].iter().copied().take_while(|v| *v <= hi + tol).collect();
            if nodes.len() < 3 {
                return invalid(format!("probe [{lo}, {hi}] holds fewer than 3 grid nodes"));
            }
            Ok((first, Axis::new(nodes)?))
        })
        .collect()
}

/// Solution values at the probe nodes, on a grid built from the probe axes.
fn restrict(u: &DiscreteField, probe: &AxisBox) -> Result<DiscreteField> {
    let grid = &u.grid;
    let m = grid.m;
    let axes = probe_axes(grid, probe)?;
    let pgrid = Grid::from_axes(
        axes[..m].iter().map(|(_, a)| a.clone()).collect(),
        axes[m..2 * m].iter().map(|(_, a)| a.clone()).collect(),
        axes[2 * m].1.clone(),
        None,
    )?;
    let mut values = Vec::with_capacity(pgrid.len());
    for n in 0..pgrid.len() {
        let (ix, iy, k) = pgrid.split(n);
        let xm = pgrid.x_multi(ix);
        let ym = pgrid.y_multi(iy);
        let mut gx = 0;
        let mut stride = 1;
        for i in 0..m {
            gx += (axes[i].0 + xm[i]) * stride;
            stride *= grid.x_axes[i].len();
        }
        let mut gy = 0;
        stride = 1;
        for i in 0..m {
            gy += (axes[m + i].0 + ym[i]) * stride;
            stride *= grid.y_axes[i].len();
        }
        let gn = grid.index(gx, gy, axes[2 * m].0 + k);
        if grid.class(gn) == NodeClass::Inactive {
            return invalid("probe contains nodes outside the domain");
        }
        values.push(u.values[gn]);
    }
    DiscreteField::new(Arc::new(pgrid), values)
}

/// Solves on every `U_X^R × V^R` of `radii` with data `g φ_R`, restricts the
/// solutions to `probe` (`2m + 1` axes) and reports successive sup-norm
/// differences there. The radii are solved in parallel.
#[allow(clippy::too_many_arguments)]
pub fn solve_exhaustion(
    omega: &LipschitzGraphDomain,
    v: &AxisBox,
    g: DataFn,
    gstar: DataFn,
    a: &EllipticMatrixField,
    radii: &[f64],
    probe: &AxisBox,
    spec: &GradedSpec,
) -> Result<ExhaustionReport> {
    let m = omega.m;
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("radii must be a non-empty increasing list");
    }
    if probe.dim() != 2 * m + 1 {
        return Err(KfpError::DimensionMismatch {
            expected: 2 * m + 1,
            got: probe.dim(),
        });
    }
    let domains = radii
        .iter()
        .map(|&r| exhaustion_domain(omega, v, r))
        .collect::<Result<Vec<_>>>()?;
    let first = &domains[0];
    let outer: Vec<[f64; 2]> = first.bbox.bounds.iter().chain(&first.vyt.bounds).copied().collect();
    if !probe.is_subset_of(&AxisBox::new(outer)?) {
        return invalid("probe must lie inside the smallest exhaustion domain");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let nested = domains.windows(2).all(|w| w[0].is_nested_in(&w[1], 2000, &mut rng));
    if !nested {
        return invalid("exhaustion domains are not nested");
    }
    let solved: Vec<Result<(DiscreteField, f64, f64, f64, usize, f64)>> = domains
        .par_iter()
        .map(|dom| {
            let start = Instant::now();
            let grid = Arc::new(exhaustion_grid(dom, spec)?);
            let raw = DiscreteField::from_fn(grid.clone(), g);
            let data = cutoff_data(&raw, dom)?;
            let source = DiscreteField::from_fn(grid.clone(), gstar);
            let (u, rep) = solve_problem(a, &data, &source, SolveOptions::default())?;
            let pf = restrict(&u, probe)?;
            let data_sup = (0..grid.len())
                .filter(|&n| grid.class(n) == NodeClass::Kolmogorov)
                .fold(0.0f64, |acc, n| acc.max(data.values[n].abs()));
            Ok((pf, u.sup_norm(), data_sup, rep.weak_residual, rep.unknowns, start.elapsed().as_secs_f64()))
        })
        .collect();
    let mut levels: Vec<ExhaustionLevel> = Vec::with_capacity(radii.len());
    for (r, res) in radii.iter().zip(solved) {
        let (probe_field, solution_sup, data_sup, weak_residual, unknowns, wall_time_s) = res?;
        let sup_difference = match levels.last() {
            Some(prev) => {
                if !prev.probe_field.grid.same_layout(&probe_field.grid) {
                    return Err(KfpError::GridMismatch(
                        "probe nodes differ between radii; widen the graded core".into(),
                    ));
                }
                Some(probe_field.sub(&prev.probe_field)?.sup_norm())
            }
            None => None,
        };
        levels.push(ExhaustionLevel {
            radius: *r,
            unknowns,
            probe_field,
            sup_difference,
            solution_sup,
            data_sup,
            weak_residual,
            wall_time_s,
        });
    }
    let diffs: Vec<f64> = levels.iter().filter_map(|l| l.sup_difference).collect();
    let monotone = diffs.windows(2).all(|w| w[1] < w[0]);
    let bounded_by_data = levels
        .iter()
        .all(|l| l.solution_sup <= l.data_sup * (1.0 + 1e-10) + 1e-14);
    Ok(ExhaustionReport {
        levels,
        monotone,
        bounded_by_data,
        nested,
    })
}

/// The half-space benchmark: `m = 1`, `Ω = {x > 0}` with declared `M = 1/2`,
/// `V = (−1, 1)²`, data the prototype kernel with pole `(−1, 0, −2)`, probe
/// `[0, 1] × [−0.5, 0.5] × [0, 0.5]`.
pub struct HalfSpaceBenchmark {
    pub omega: LipschitzGraphDomain,
    pub v: AxisBox,
    pub pole: Point,
    pub probe: AxisBox,
    pub spec: GradedSpec,
}

impl HalfSpaceBenchmark {
    pub fn new(h: f64) -> Result<Self> {
        Ok(HalfSpaceBenchmark {
            omega: LipschitzGraphDomain::half_space(1, 0.5)?,
            v: AxisBox::cube(2, -1.0, 1.0)?,
            pole: Point::new(vec![-1.0], vec![0.0], -2.0)?,
            probe: AxisBox::new(vec![[0.0, 1.0], [-0.5, 0.5], [0.0, 0.5]])?,
            spec: GradedSpec {
                core: AxisBox::new(vec![[0.0, 2.0], [-2.0, 2.0], [-3.0, 1.0]])?,
                h: vec![h, h, 0.5 * h],
                growth: 1.25,
            },
        })
    }

    pub fn data(&self) -> impl Fn(&Point) -> f64 + Sync + '_ {
        move |p: &Point| crate::analytic_kernel::kernel_value(&p.x, &p.y, p.t, &self.pole.x, &self.pole.y, self.pole.t)
    }

    pub fn run(&self, radii: &[f64]) -> Result<ExhaustionReport> {
        let g = self.data();
        let zero = |_: &Point| 0.0;
        solve_exhaustion(
            &self.omega,
            &self.v,
            &g,
            &zero,
            &EllipticMatrixField::identity(1),
            radii,
            &self.probe,
            &self.spec,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_values() {
        assert_eq!(cutoff_profile(0.3, 1.0), 1.0);
        assert_eq!(cutoff_profile(0.5, 1.0), 1.0);
        assert_eq!(cutoff_profile(0.75, 1.0), 0.0);
        assert_eq!(cutoff_profile(2.0, 1.0), 0.0);
        assert!((cutoff_profile(0.625, 1.0) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = cutoff_profile(0.5 + 0.0025 * i as f64, 1.0);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn graded_axes_share_core_nodes() {
        let small = graded_axis(-1.0, 1.0, [-3.0, 1.0], 0.125, 1.25).unwrap();
        let big = graded_axis(-4.0, 4.0, [-3.0, 1.0], 0.125, 1.25).unwrap();
        for v in small.nodes.iter().filter(|v| **v > -0.99 && **v < 0.99) {
            assert!(big.find(*v, 1e-12).is_some(), "{v}");
        }
        assert_eq!(big.lo(), -4.0);
        assert_eq!(big.hi(), 4.0);
        for i in 1..big.len() - 1 {
            let r = big.h(i) / big.h(i - 1);
            assert!(r < 1.6 && r > 0.3, "ratio {r} at {i}");
        }
    }

    #[test]
    fn cutoff_on_two_dimensional_graph() {
        let omega = LipschitzGraphDomain::half_space(2, 1.0).unwrap();
        let v = AxisBox::cube(3, -1.0, 1.0).unwrap();
        let dom = exhaustion_domain(&omega, &v, 2.0).unwrap();
        let spec = GradedSpec {
            core: AxisBox::cube(5, -1.0, 1.0).unwrap(),
            h: vec![0.25; 5],
            growth: 1.5,
        };
        let grid = Arc::new(exhaustion_grid(&dom, &spec).unwrap());
        let g = DiscreteField::constant(grid.clone(), 2.0);
        let cut = cutoff_data(&g, &dom).unwrap();
        for n in 0..grid.len() {
            if grid.class(n) != NodeClass::Kolmogorov {
                continue;
            }
            let p = grid.point(n);
            let on_graph = p.x[1].abs() < 1e-12 && p.x[0].abs() < 2.0 - 1e-9;
            if on_graph && p.x[0].abs() <= 1.0 {
                assert_eq!(cut.values[n], 2.0);
            } else if !on_graph || p.x[0].abs() >= 1.5 {
                assert_eq!(cut.values[n], 0.0);
            }
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let b = HalfSpaceBenchmark::new(0.25).unwrap();
        let zero = |_: &Point| 0.0;
        let rep = solve_exhaustion(
            &b.omega,
            &b.v,
            &zero,
            &zero,
            &EllipticMatrixField::identity(1),
            &[1.0, 2.0],
            &b.probe,
            &b.spec,
        )
        .unwrap();
        assert!(rep.levels.iter().all(|l| l.probe_field.sup_norm() == 0.0));
        assert_eq!(rep.differences(), vec![0.0]);
    }

    #[test]
    fn rejects_probe_outside() {
        let b = HalfSpaceBenchmark::new(0.25).unwrap();
        let probe = AxisBox::new(vec![[0.0, 2.5], [-0.5, 0.5], [0.0, 0.5]]).unwrap();
        let g = b.data();
        let zero = |_: &Point| 0.0;
        let err = solve_exhaustion(&b.omega, &b.v, &g, &zero, &EllipticMatrixField::identity(1), &[1.0], &probe, &b.spec);
        assert!(err.is_err());
        assert!(solve_exhaustion(&b.omega, &b.v, &g, &zero, &EllipticMatrixField::identity(1), &[2.0, 1.0], &b.probe, &b.spec).is_err());
    }
}

