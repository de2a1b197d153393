//! Convex variational route: the functional `J`, constrained minimization of
//! `𝒥[f, j] = ∭ ½ A(∇_X f − j)·(∇_X f − j)`, and the related certificates.
//!
//! The flux `j` lives at the same gradient samples as the diffusion stencil,
//! so `K_s = G_sᵀ M_s G_s` with `G_s` the sampled `X`-gradient and `M_s` the
//! block-diagonal matrix of `|cell| / samples · A`. The constraint at every
//! unknown node `n` of slice `s` is the tested identity
//! `(X·∇_Y f − ∂_t f)_n − (G_sᵀ M_s j)_n / W_X[n] = f*_n`; with `j = G f` it
//! is the assembled equation, so a null minimizer is a discrete solution.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::EllipticMatrixField;
use crate::discretization::stencil::{cell_active, cell_coefficient, cell_samples};
use crate::discretization::{transport_stencil, DiscreteField, Grid, NodeClass};
use crate::error::{invalid, KfpError, Result};
use crate::function_spaces::{h1x_norm, w_norm_with, DualNorm};
use crate::sparse::{solve_refined, CsrMatrix, SparseLu};

#[derive(Clone, Debug)]
struct Sample {
    /// Flat `X`-node and gradient coefficient vector.
    nodes: Vec<(usize, Vec<f64>)>,
    /// `|cell| / samples`.
    weight: f64,
    /// `weight · A(cell center)`, row-major.
    mass: Vec<f64>,
}

/// Flux variables of every slice and the operators `G_s`, `M_s`.
#[derive(Clone, Debug)]
pub struct FluxLayout {
    grid: Arc<Grid>,
    slices: Vec<Arc<Vec<Sample>>>,
    offsets: Vec<usize>,
}

fn build_samples(grid: &Grid, a: &EllipticMatrixField, iy: usize, k: usize) -> Vec<Sample> {
    let m = grid.m;
    let mut out = Vec::new();
    for cell in 0..grid.n_x_cells() {
        if !cell_active(grid, cell) {
            continue;
        }
        let corners = grid.cell_corners(cell);
        let mat = cell_coefficient(grid, Some(a), cell, iy, k);
        for (s, w) in cell_samples(grid, cell, &mat) {
            out.push(Sample {
                nodes: s.corners.iter().map(|&c| corners[c]).zip(s.coefs).collect(),
                weight: w,
                mass: mat.iter().map(|v| w * v).collect(),
            });
        }
    }
    debug_assert!(out.iter().all(|s| s.mass.len() == m * m));
    out
}

impl FluxLayout {
    pub fn new(grid: Arc<Grid>, a: &EllipticMatrixField) -> Result<Self> {
        if a.m() != grid.m {
            return Err(KfpError::DimensionMismatch {
                expected: grid.m,
                got: a.m(),
            });
        }
        let slices: Vec<Arc<Vec<Sample>>> = if a.is_constant() {
            let shared = Arc::new(build_samples(&grid, a, 0, 0));
            vec![shared; grid.n_slices()]
        } else {
            (0..grid.n_slices())
                .into_par_iter()
                .map(|s| Arc::new(build_samples(&grid, a, s % grid.n_y(), s / grid.n_y())))
                .collect()
        };
        let mut offsets = Vec::with_capacity(slices.len() + 1);
        offsets.push(0);
        for s in &slices {
            offsets.push(offsets.last().unwrap() + s.len() * grid.m);
        }
        Ok(FluxLayout {
            grid,
            slices,
            offsets,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Total number of flux unknowns.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    fn grad_slice(&self, s: usize, fs: &[f64], out: &mut [f64]) {
        let m = self.grid.m;
        out.fill(0.0);
        for (q, sample) in self.slices[s].iter().enumerate() {
            for (ix, coef) in &sample.nodes {
                for i in 0..m {
                    out[q * m + i] += coef[i] * fs[*ix];
                }
            }
        }
    }

    /// `G f` for all slices.
    pub fn gradient(&self, f: &DiscreteField) -> Vec<f64> {
        let nx = self.grid.n_x();
        let mut out = vec![0.0; self.len()];
        for s in 0..self.grid.n_slices() {
            let r = self.range(s);
            self.grad_slice(s, &f.values[s * nx..(s + 1) * nx], &mut out[r]);
        }
        out
    }

    fn mass_apply(&self, s: usize, js: &[f64]) -> Vec<f64> {
        let m = self.grid.m;
        let mut out = vec![0.0; js.len()];
        for (q, sample) in self.slices[s].iter().enumerate() {
            for i in 0..m {
                out[q * m + i] = (0..m).map(|k| sample.mass[i * m + k] * js[q * m + k]).sum();
            }
        }
        out
    }

    /// `(G_sᵀ M_s j_s)` as an `N_X` vector.
    fn divergence_slice(&self, s: usize, js: &[f64]) -> Vec<f64> {
        let m = self.grid.m;
        let mj = self.mass_apply(s, js);
        let mut out = vec![0.0; self.grid.n_x()];
        for (q, sample) in self.slices[s].iter().enumerate() {
            for (ix, coef) in &sample.nodes {
                out[*ix] += (0..m).map(|i| coef[i] * mj[q * m + i]).sum::<f64>();
            }
        }
        out
    }

    fn slice_weight(&self, s: usize) -> f64 {
        let g = &self.grid;
        g.weight_slice(s % g.n_y(), s / g.n_y())
    }

    /// `Σ_s w_s ½ dᵀ M_s d`.
    pub fn energy(&self, d: &[f64]) -> f64 {
        (0..self.grid.n_slices())
            .map(|s| {
                let r = self.range(s);
                let md = self.mass_apply(s, &d[r.clone()]);
                0.5 * self.slice_weight(s) * d[r].iter().zip(&md).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum()
    }

    /// `‖j‖²_{L²}` with sample weights `|cell| / samples`.
    pub fn l2_squared(&self, j: &[f64]) -> f64 {
        let m = self.grid.m;
        (0..self.grid.n_slices())
            .map(|s| {
                let r = self.range(s);
                let js = &j[r];
                let sum: f64 = self.slices[s]
                    .iter()
                    .enumerate()
                    .map(|(q, sample)| sample.weight * (0..m).map(|i| js[q * m + i] * js[q * m + i]).sum::<f64>())
                    .sum();
                self.slice_weight(s) * sum
            })
            .sum()
    }
}

/// `𝒥[f, j] = Σ_s w_s ½ (G f − j)ᵀ M (G f − j)`.
pub fn functional(layout: &FluxLayout, f: &DiscreteField, j: &[f64]) -> f64 {
    let gf = layout.gradient(f);
    let d: Vec<f64> = gf.iter().zip(j).map(|(a, b)| a - b).collect();
    layout.energy(&d)
}

/// `(X·∇_Y f − ∂_t f)` at every unknown node (zero elsewhere).
fn transport_apply(f: &DiscreteField) -> Vec<f64> {
    let g = &f.grid;
    (0..g.len())
        .into_par_iter()
        .map(|n| {
            if g.class(n).is_unknown() {
                transport_stencil(g, n).iter().map(|(c, v)| v * f.values[*c]).sum()
            } else {
                0.0
            }
        })
        .collect()
}

/// `max_n |(T f)_n − (G_sᵀ M_s j)_n / W_X[n] − f*_n|` over unknown nodes.
pub fn constraint_residual(layout: &FluxLayout, f: &DiscreteField, j: &[f64], fstar: &DiscreteField) -> f64 {
    let g = &layout.grid;
    let tf = transport_apply(f);
    let nx = g.n_x();
    (0..g.n_slices())
        .into_par_iter()
        .map(|s| {
            let div = layout.divergence_slice(s, &j[layout.range(s)]);
            (0..nx)
                .filter(|ix| g.class(s * nx + ix).is_unknown())
                .map(|ix| {
                    let n = s * nx + ix;
                    (tf[n] - div[ix] / g.weight_x(ix) - fstar.values[n]).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Minimizes `½ (j − target)ᵀ M_s (j − target)` over slice fluxes with
/// `−(G_sᵀ M_s j)_n = W_X[n] r_n` at the unknown nodes of slice `s`, through
/// the KKT system `[[M, Cᵀ], [C, 0]]`.
fn project_slice(layout: &FluxLayout, s: usize, target: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let g = &layout.grid;
    let m = g.m;
    let nx = g.n_x();
    let unknown: Vec<usize> = (0..nx).filter(|ix| g.class(s * nx + ix).is_unknown()).collect();
    if unknown.is_empty() {
        return Ok(target.to_vec());
    }
    let nj = target.len();
    let mut pos = vec![usize::MAX; nx];
    for (e, &ix) in unknown.iter().enumerate() {
        pos[ix] = e;
    }
    let mut t = Vec::new();
    for (q, sample) in layout.slices[s].iter().enumerate() {
        for i in 0..m {
            for k in 0..m {
                t.push((q * m + i, q * m + k, sample.mass[i * m + k]));
            }
        }
        for (ix, coef) in &sample.nodes {
            let e = pos[*ix];
            if e == usize::MAX {
                continue;
            }
            for k in 0..m {
                let v: f64 = -(0..m).map(|i| coef[i] * sample.mass[i * m + k]).sum::<f64>();
                t.push((nj + e, q * m + k, v));
                t.push((q * m + k, nj + e, v));
            }
        }
    }
    let size = nj + unknown.len();
    let kkt = CsrMatrix::from_triplets(size, size, &t);
    let mut rhs = layout.mass_apply(s, target);
    rhs.extend(unknown.iter().map(|&ix| g.weight_x(ix) * r[ix]));
    let lu = SparseLu::factor(&kkt)?;
    let (x, _) = solve_refined(&kkt, &lu, &rhs, 1e-13, 4).or_else(|e| match e {
        KfpError::NonConvergence { .. } => lu.solve(&rhs).map(|x| (x, Vec::new())),
        other => Err(other),
    })?;
    Ok(x[..nj].to_vec())
}

#[derive(Clone, Debug, Serialize)]
pub struct JEvaluation {
    pub value: f64,
    /// `Σ_s w_s ½ (G f)ᵀ M (G f)`, the natural scale of `value`.
    pub scale: f64,
    pub constraint_residual: f64,
    #[serde(skip)]
    pub flux: Vec<f64>,
}

/// `J[f, f*] = min_j 𝒥[f, j]` over fluxes satisfying the constraint.
pub fn evaluate_j(f: &DiscreteField, fstar: &DiscreteField, a: &EllipticMatrixField) -> Result<JEvaluation> {
    let layout = FluxLayout::new(f.grid.clone(), a)?;
    evaluate_j_with(&layout, f, fstar)
}

pub fn evaluate_j_with(layout: &FluxLayout, f: &DiscreteField, fstar: &DiscreteField) -> Result<JEvaluation> {
    let g = &layout.grid;
    if !f.grid.same_layout(g) || !fstar.grid.same_layout(g) {
        return Err(KfpError::GridMismatch("J needs f, f* on the layout grid".into()));
    }
    let nx = g.n_x();
    let tf = transport_apply(f);
    let gf = layout.gradient(f);
    let parts: Result<Vec<Vec<f64>>> = (0..g.n_slices())
        .into_par_iter()
        .map(|s| {
            let r: Vec<f64> = (0..nx)
                .map(|ix| {
                    let n = s * nx + ix;
                    fstar.values[n] - tf[n]
                })
                .collect();
            project_slice(layout, s, &gf[layout.range(s)], &r)
        })
        .collect();
    let flux: Vec<f64> = parts?.into_iter().flatten().collect();
    let d: Vec<f64> = gf.iter().zip(&flux).map(|(a, b)| a - b).collect();
    Ok(JEvaluation {
        value: layout.energy(&d),
        scale: layout.energy(&gf),
        constraint_residual: constraint_residual(layout, f, &flux, fstar),
        flux,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimizerPair {
    #[serde(skip)]
    pub f: DiscreteField,
    #[serde(skip)]
    pub j: Vec<f64>,
    pub objective: f64,
    pub constraint_residual: f64,
    /// `max |G f − j| / max(1, max |j|)`.
    pub gradient_mismatch: f64,
    pub kkt_residual: f64,
    pub unknowns: usize,
}

/// Joint minimization of `𝒥` over `(f, j)` with `f = g` on Kolmogorov nodes,
/// in one sparse KKT solve. Slice weights are dropped from the objective
/// (any positive weights share the null minimizer); the reported objective
/// uses the true weights.
pub fn minimize_joint(g: &DiscreteField, gstar: &DiscreteField, a: &EllipticMatrixField) -> Result<MinimizerPair> {
    let layout = FluxLayout::new(g.grid.clone(), a)?;
    minimize_joint_with(&layout, g, gstar)
}

pub fn minimize_joint_with(layout: &FluxLayout, g: &DiscreteField, gstar: &DiscreteField) -> Result<MinimizerPair> {
    let grid = layout.grid.clone();
    if !g.grid.same_layout(&grid) || !gstar.grid.same_layout(&grid) {
        return Err(KfpError::GridMismatch("data must live on the layout grid".into()));
    }
    let m = grid.m;
    let nx = grid.n_x();
    let mut fpos = vec![usize::MAX; grid.len()];
    let mut nf = 0;
    for (n, p) in fpos.iter_mut().enumerate() {
        if grid.class(n).is_unknown() {
            *p = nf;
            nf += 1;
        }
    }
    let nj = layout.len();
    let size = 2 * nf + nj;
    // Known part of f: Kolmogorov data, zero elsewhere.
    let known: Vec<f64> = (0..grid.len())
        .map(|n| if grid.class(n) == NodeClass::Kolmogorov { g.values[n] } else { 0.0 })
        .collect();
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0; size];
    for s in 0..grid.n_slices() {
        let off = nf + layout.offsets[s];
        let base = s * nx;
        for (q, sample) in layout.slices[s].iter().enumerate() {
            let mm = &sample.mass;
            // G f for the known part of this sample.
            let mut gk = vec![0.0; m];
            for (ix, coef) in &sample.nodes {
                for i in 0..m {
                    gk[i] += coef[i] * known[base + ix];
                }
            }
            for i in 0..m {
                for k in 0..m {
                    t.push((off + q * m + i, off + q * m + k, mm[i * m + k]));
                }
                // q_j = −M G g_K, moved to the right-hand side.
                rhs[off + q * m + i] += (0..m).map(|k| mm[i * m + k] * gk[k]).sum::<f64>();
            }
            for (ia, ca) in &sample.nodes {
                let pa = fpos[base + ia];
                if pa == usize::MAX {
                    continue;
                }
                // H_fj = −(M c_a)ᵀ and q_f = c_aᵀ M G g_K.
                for k in 0..m {
                    let v: f64 = (0..m).map(|i| ca[i] * mm[i * m + k]).sum();
                    t.push((pa, off + q * m + k, -v));
                    t.push((off + q * m + k, pa, -v));
                    rhs[pa] -= v * gk[k];
                }
                for (ib, cb) in &sample.nodes {
                    let pb = fpos[base + ib];
                    if pb == usize::MAX {
                        continue;
                    }
                    let mut v = 0.0;
                    for i in 0..m {
                        for k in 0..m {
                            v += ca[i] * mm[i * m + k] * cb[k];
                        }
                    }
                    t.push((pa, pb, v));
                }
                // Constraint: −(G_sᵀ M_s j)_n part.
                let row = nf + nj + pa;
                for k in 0..m {
                    let v: f64 = (0..m).map(|i| ca[i] * mm[i * m + k]).sum();
                    t.push((row, off + q * m + k, -v));
                    t.push((off + q * m + k, row, -v));
                }
            }
        }
    }
    // Constraint: W_X[n] (T f)_n = W_X[n] g*_n.
    for n in 0..grid.len() {
        let pn = fpos[n];
        if pn == usize::MAX {
            continue;
        }
        let row = nf + nj + pn;
        let w = grid.weight_x(n % nx);
        rhs[row] += w * gstar.values[n];
        for (c, v) in transport_stencil(&grid, n) {
            let pc = fpos[c];
            if pc == usize::MAX {
                rhs[row] -= w * v * known[c];
            } else {
                t.push((row, pc, w * v));
                t.push((pc, row, w * v));
            }
        }
    }
    let kkt = CsrMatrix::from_triplets(size, size, &t);
    let lu = SparseLu::factor(&kkt)?;
    let (x, hist) = solve_refined(&kkt, &lu, &rhs, 1e-13, 6).or_else(|e| match e {
        KfpError::NonConvergence { history, .. } if history.last().is_some_and(|r| *r < 1e-9) => {
            let mut x = lu.solve(&rhs)?;
            for _ in 0..6 {
                let ax = kkt.matvec(&x);
                let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                let dx = lu.solve(&r)?;
                x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
            }
            Ok((x, history))
        }
        other => Err(other),
    })?;
    let mut f = known.clone();
    for (n, p) in fpos.iter().enumerate() {
        if *p != usize::MAX {
            f[n] = x[*p];
        }
    }
    let f = DiscreteField::new(grid.clone(), f)?;
    let j = x[nf..nf + nj].to_vec();
    let gf = layout.gradient(&f);
    let jmax = j.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let gradient_mismatch = gf.iter().zip(&j).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / jmax;
    Ok(MinimizerPair {
        objective: functional(layout, &f, &j),
        constraint_residual: constraint_residual(layout, &f, &j, gstar),
        gradient_mismatch,
        kkt_residual: *hist.last().unwrap_or(&f64::NAN),
        unknowns: size,
        f,
        j,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport {
    pub min_coercivity_ratio: f64,
    pub ratios: Vec<f64>,
    /// Largest relative defect of the parallelogram identity of `𝒥`.
    pub parallelogram_defect: f64,
    /// Largest relative defect of `𝒥[2f, 2j] = 4 𝒥[f, j]`.
    pub scaling_defect: f64,
}

/// Random admissible pair in `𝒜(0, 0)`: `f` random on unknown nodes and zero
/// on Kolmogorov nodes, `j` a random flux projected onto the constraint.
pub fn random_admissible_pair<R: Rng>(layout: &FluxLayout, rng: &mut R) -> Result<(DiscreteField, Vec<f64>)> {
    let g = layout.grid.clone();
    let mut f = DiscreteField::zeros(g.clone());
    for n in 0..g.len() {
        if g.class(n).is_unknown() {
            f.values[n] = rng.random_range(-1.0..1.0);
        }
    }
    let target: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let tf = transport_apply(&f);
    let nx = g.n_x();
    let parts: Result<Vec<Vec<f64>>> = (0..g.n_slices())
        .into_par_iter()
        .map(|s| {
            let r: Vec<f64> = (0..nx).map(|ix| -tf[s * nx + ix]).collect();
            project_slice(layout, s, &target[layout.range(s)], &r)
        })
        .collect();
    Ok((f, parts?.into_iter().flatten().collect()))
}

/// Empirical coercivity `min 𝒥 / (‖f‖²_W + ‖j‖²)` over random admissible
/// pairs, with the parallelogram and scaling identities of `𝒥` checked on
/// the same samples.
pub fn convexity_certificate<R: Rng>(
    grid: Arc<Grid>,
    a: &EllipticMatrixField,
    trials: usize,
    rng: &mut R,
) -> Result<ConvexityReport> {
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let layout = FluxLayout::new(grid.clone(), a)?;
    let dual = DualNorm::new(grid.clone())?;
    let zero = DiscreteField::zeros(grid.clone());
    let mut ratios = Vec::with_capacity(trials);
    let mut para: f64 = 0.0;
    let mut scaling: f64 = 0.0;
    let mut prev: Option<(DiscreteField, Vec<f64>)> = None;
    for _ in 0..trials {
        let (f, j) = random_admissible_pair(&layout, rng)?;
        debug_assert!(constraint_residual(&layout, &f, &j, &zero) < 1e-8);
        let jv = functional(&layout, &f, &j);
        let wn = w_norm_with(&f, &dual)?.w_norm;
        ratios.push(jv / (wn * wn + layout.l2_squared(&j)));
        let j2: Vec<f64> = j.iter().map(|v| 2.0 * v).collect();
        let scaled = functional(&layout, &f.scale(2.0), &j2);
        scaling = scaling.max((scaled - 4.0 * jv).abs() / jv.max(f64::MIN_POSITIVE));
        if let Some((fp, jp)) = &prev {
            let plus = functional(&layout, &fp.add(&f)?, &add(jp, &j, 1.0));
            let minus = functional(&layout, &fp.sub(&f)?, &add(jp, &j, -1.0));
            let lhs = 0.5 * plus + 0.5 * minus - functional(&layout, fp, jp);
            para = para.max((lhs - jv).abs() / jv.max(f64::MIN_POSITIVE));
        }
        prev = Some((f, j));
    }
    Ok(ConvexityReport {
        min_coercivity_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        ratios,
        parallelogram_defect: para,
        scaling_defect: scaling,
    })
}

fn add(a: &[f64], b: &[f64], c: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + c * y).collect()
}

/// `‖u − g‖_{L²(V; H¹_X)} / (‖g‖_W + ‖g*‖_{L²(V; H⁻¹_X)})`.
pub fn energy_estimate_ratio(u: &DiscreteField, g: &DiscreteField, gstar: &DiscreteField) -> Result<f64> {
    let dual = DualNorm::new(u.grid.clone())?;
    let num = h1x_norm(&u.sub(g)?);
    let den = w_norm_with(g, &dual)?.w_norm + dual.field_norm(gstar)?;
    if num == 0.0 {
        return Ok(0.0);
    }
    if den == 0.0 {
        return invalid("energy ratio undefined for zero data");
    }
    Ok(num / den)
}

/// Terms of the discrete identity
/// `Σ (X·∇_Y f − ∂_t f) f = ½ Σ_{Free faces} f² (X, −1)·N − dissipation`.
#[derive(Clone, Debug, Serialize)]
pub struct TransportIdentity {
    pub volume: f64,
    pub boundary: f64,
    pub dissipation: f64,
}

/// Evaluates the transport identity for `f` vanishing on Kolmogorov nodes.
/// Each directional term is weighted by the upwind cell width along its own
/// direction and by trapezoid weights across it, so the sums telescope.
pub fn transport_identity(f: &DiscreteField) -> Result<TransportIdentity> {
    let g = &f.grid;
    if (0..g.len()).any(|n| g.class(n) == NodeClass::Kolmogorov && f.values[n] != 0.0) {
        return invalid("transport identity needs f = 0 on the Kolmogorov boundary");
    }
    let v = &f.values;
    let nt = g.n_t();
    let l = g.level_size();
    let (mut volume, mut boundary, mut dissipation) = (0.0, 0.0, 0.0);
    for n in 0..g.len() {
        if g.class(n) == NodeClass::Inactive {
            continue;
        }
        let (ix, iy, k) = g.split(n);
        let x = g.x_coords(ix);
        let yidx = g.y_multi(iy);
        let wx = g.weight_x(ix);
        for i in 0..g.m {
            let axis = &g.y_axes[i];
            let stride = g.y_stride(i) * g.n_x();
            let across = wx
                * g.t_axis.weight(k)
                * (0..g.m)
                    .filter(|&j| j != i)
                    .map(|j| g.y_axes[j].weight(yidx[j]))
                    .product::<f64>();
            let last = axis.len() - 1;
            if x[i] > 0.0 {
                if yidx[i] < last {
                    let d = v[n + stride] - v[n];
                    volume += across * x[i] * d * v[n];
                    dissipation += across * 0.5 * x[i] * d * d;
                }
                if yidx[i] == 0 {
                    boundary -= across * 0.5 * x[i] * v[n] * v[n];
                }
            } else if x[i] < 0.0 {
                if yidx[i] > 0 {
                    let d = v[n] - v[n - stride];
                    volume += across * x[i] * d * v[n];
                    dissipation -= across * 0.5 * x[i] * d * d;
                }
                if yidx[i] == last {
                    boundary += across * 0.5 * x[i] * v[n] * v[n];
                }
            }
        }
        let across = wx * g.weight_y(iy);
        if k > 0 {
            let d = v[n] - v[n - l];
            volume -= across * d * v[n];
            dissipation += across * 0.5 * d * d;
        }
        if k + 1 == nt {
            boundary -= across * 0.5 * v[n] * v[n];
        }
    }
    Ok(TransportIdentity {
        volume,
        boundary,
        dissipation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientFamily;
    use crate::discretization::{build_grid, solve_problem, Resolution, SolveOptions};
    use crate::geometry::{AxisBox, ProductDomain};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(m: usize, n: usize) -> Arc<Grid> {
        let d = ProductDomain::new(AxisBox::cube(m, -1.0, 1.0).unwrap(), AxisBox::cube(m + 1, 0.0, 1.0).unwrap()).unwrap();
        Arc::new(build_grid(&d, &Resolution::uniform(m, n)).unwrap())
    }

    fn checker(m: usize) -> EllipticMatrixField {
        EllipticMatrixField::new(
            m,
            4.0,
            CoefficientFamily::Checkerboard {
                a: 4.0,
                b: 0.25,
                period: Some(0.5),
            },
        )
        .unwrap()
    }

    #[test]
    fn layout_reproduces_stiffness() {
        let g = grid(2, 5);
        let a = checker(2);
        let layout = FluxLayout::new(g.clone(), &a).unwrap();
        let k = crate::discretization::slice_stiffness(&g, Some(&a), 1, 2);
        let s = 2 * g.n_y() + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..g.n_x()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut gv = vec![0.0; layout.range(s).len()];
        layout.grad_slice(s, &v, &mut gv);
        let div = layout.divergence_slice(s, &gv);
        let kv = k.matvec(&v);
        for i in 0..g.n_x() {
            assert!((div[i] - kv[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn inner_problem_matches_schur_reduction() {
        // Closed form: d = G Eᵀν with K_EE ν = −W r and J_s = ½ νᵀ K_EE ν.
        let g = grid(1, 9);
        let a = EllipticMatrixField::constant_diag(&[2.0], 2.0).unwrap();
        let layout = FluxLayout::new(g.clone(), &a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = DiscreteField::from_fn(g.clone(), |p| (p.x[0] * 3.0).sin() + p.y[0] * p.t);
        let noise: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fstar = DiscreteField::new(g.clone(), noise).unwrap();
        let ev = evaluate_j_with(&layout, &f, &fstar).unwrap();
        assert!(ev.constraint_residual < 1e-10);
        let tf = transport_apply(&f);
        let k = crate::discretization::slice_stiffness(&g, Some(&a), 0, 0);
        let nx = g.n_x();
        let mut expected = 0.0;
        for s in 0..g.n_slices() {
            let e: Vec<usize> = (0..nx).filter(|ix| g.class(s * nx + ix).is_unknown()).collect();
            if e.is_empty() {
                continue;
            }
            let fs = &f.values[s * nx..(s + 1) * nx];
            let kf = k.matvec(fs);
            let kee = nalgebra::DMatrix::from_fn(e.len(), e.len(), |p, q| k.get(e[p], e[q]));
            let rhs = nalgebra::DVector::from_fn(e.len(), |p, _| {
                let ix = e[p];
                let n = s * nx + ix;
                let r = fstar.values[n] - tf[n] + kf[ix] / g.weight_x(ix);
                -g.weight_x(ix) * r
            });
            let nu = kee.clone().lu().solve(&rhs).unwrap();
            let js = 0.5 * nu.dot(&(&kee * &nu));
            expected += g.weight_slice(s % g.n_y(), s / g.n_y()) * js;
        }
        assert!((ev.value - expected).abs() <= 1e-9 * expected.max(1.0), "{} vs {expected}", ev.value);
    }

    #[test]
    fn null_minimum_and_joint_agreement() {
        let g = grid(1, 8);
        let a = checker(1);
        let data = DiscreteField::from_fn(g.clone(), |p| (p.x[0] + p.y[0]).cos() + p.t);
        let gstar = DiscreteField::from_fn(g.clone(), |p| p.x[0] * p.y[0]);
        let (u, _) = solve_problem(&a, &data, &gstar, SolveOptions::default()).unwrap();
        let ev = evaluate_j(&u, &gstar, &a).unwrap();
        assert!(ev.value <= 1e-10 * ev.scale.max(1.0), "J = {}", ev.value);
        let pair = minimize_joint(&data, &gstar, &a).unwrap();
        let rel = u.sub(&pair.f).unwrap().l2_norm() / u.l2_norm();
        assert!(rel <= 1e-8, "relative difference {rel}");
        assert!(pair.gradient_mismatch <= 1e-8);
        assert!(pair.objective <= 1e-12);
    }

    #[test]
    fn zero_data_gives_zero_minimizer() {
        let g = grid(2, 4);
        let a = checker(2);
        let zero = DiscreteField::zeros(g.clone());
        let pair = minimize_joint(&zero, &zero, &a).unwrap();
        assert!(pair.f.sup_norm() == 0.0 && pair.j.iter().all(|v| *v == 0.0));
        assert_eq!(pair.objective, 0.0);
    }

    #[test]
    fn convexity_identities() {
        let g = grid(1, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rep = convexity_certificate(g, &checker(1), 10, &mut rng).unwrap();
        assert!(rep.min_coercivity_ratio > 0.0);
        assert!(rep.parallelogram_defect < 1e-10);
        assert!(rep.scaling_defect < 1e-12);
    }

    #[test]
    fn transport_identity_holds() {
        for m in [1, 2] {
            let g = grid(m, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..10 {
                let mut f = DiscreteField::zeros(g.clone());
                for n in 0..g.len() {
                    if g.class(n).is_unknown() {
                        f.values[n] = rng.random_range(-1.0..1.0);
                    }
                }
                let id = transport_identity(&f).unwrap();
                let scale = id.dissipation.abs() + id.boundary.abs();
                assert!((id.volume - (id.boundary - id.dissipation)).abs() <= 1e-12 * scale);
                assert!(id.volume <= 0.0 && id.boundary <= 0.0);
            }
        }
    }

    #[test]
    fn energy_ratio_basics() {
        let g = grid(1, 6);
        let c = DiscreteField::constant(g.clone(), 3.0);
        let zero = DiscreteField::zeros(g.clone());
        assert_eq!(energy_estimate_ratio(&c, &c, &zero).unwrap(), 0.0);
        let a = EllipticMatrixField::identity(1);
        let data = DiscreteField::from_fn(g.clone(), |p| p.x[0] * p.x[0] + p.y[0]);
        let gs = DiscreteField::from_fn(g.clone(), |p| p.t);
        let (u, _) = solve_problem(&a, &data, &gs, SolveOptions::default()).unwrap();
        let r1 = energy_estimate_ratio(&u, &data, &gs).unwrap();
        let (u2, _) = solve_problem(&a, &data.scale(2.0), &gs.scale(2.0), SolveOptions::default()).unwrap();
        let r2 = energy_estimate_ratio(&u2, &data.scale(2.0), &gs.scale(2.0)).unwrap();
        assert!((r1 - r2).abs() < 1e-10 * r1);
    }
}
