//! Monte-Carlo representation of solutions through the kinetic process
//! `dX = √(2A) dW`, `dY = X ds`, run in calendar time `t − s`.
//!
//! A path started at `(X, Y, t)` stops on the Kolmogorov boundary; the mean
//! of the data over exit points estimates `u(X, Y, t)` and the exit
//! frequencies estimate the parabolic measure. Coefficients must be constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::EllipticMatrixField;
use crate::error::{invalid, KfpError, Result};
use crate::geometry::{kolmogorov_sign, BoundaryClass, FaceLocation, GraphFunction, LipschitzGraphDomain, Point, ProductDomain};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExitRecord {
    pub point: Point,
    pub face: FaceLocation,
}

/// State of one path: position, elapsed time `s` and, once stopped, where.
#[derive(Clone, Debug, PartialEq)]
pub struct PathState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: f64,
    pub alive: bool,
    pub exit: Option<ExitRecord>,
}

impl PathState {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        PathState {
            x,
            y,
            s: 0.0,
            alive: true,
            exit: None,
        }
    }
}

/// One Euler step: `X ← X + S ξ √dt`, `Y ← Y + X_old dt`, `s ← s + dt`,
/// with `S Sᵀ = 2A` row-major. Stopped states are returned unchanged.
pub fn step(state: &PathState, dt: f64, sqrt_a: &[f64], draw: &[f64]) -> PathState {
    if !state.alive {
        return state.clone();
    }
    let m = state.x.len();
    let sq = dt.sqrt();
    let x = (0..m)
        .map(|i| state.x[i] + sq * (0..m).map(|k| sqrt_a[i * m + k] * draw[k]).sum::<f64>())
        .collect();
    let y = state.y.iter().zip(&state.x).map(|(y, x)| y + x * dt).collect();
    PathState {
        x,
        y,
        s: state.s + dt,
        alive: true,
        exit: None,
    }
}

/// Step whose `Y` increment has the exact joint law with the `X` increment:
/// `Y ← Y + X dt + (dt/2) ΔX + S η √(dt³/12)` with `draw = (ξ, η)`.
pub fn step_exact(state: &PathState, dt: f64, sqrt_a: &[f64], draw: &[f64]) -> PathState {
    if !state.alive {
        return state.clone();
    }
    let m = state.x.len();
    let mut next = step(state, dt, sqrt_a, &draw[..m]);
    let c = (dt * dt * dt / 12.0).sqrt();
    for i in 0..m {
        let dx = next.x[i] - state.x[i];
        let extra: f64 = (0..m).map(|k| sqrt_a[i * m + k] * draw[m + k]).sum();
        next.y[i] += 0.5 * dt * dx + c * extra;
    }
    next
}

/// `S` with `S Sᵀ = 2A`, row-major, from a constant coefficient field.
pub fn sqrt_two_a(a: &EllipticMatrixField) -> Result<Vec<f64>> {
    if !a.is_constant() {
        return invalid("the stochastic oracle needs constant coefficients");
    }
    let m = a.m();
    let mat = a.eval(&Point::origin(m)) * 2.0;
    let sym = (&mat + mat.transpose()) * 0.5;
    let chol = nalgebra::Cholesky::new(sym).ok_or_else(|| KfpError::Singular("2A is not positive definite".into()))?;
    let l = chol.l();
    Ok((0..m * m).map(|k| l[(k / m, k % m)]).collect())
}

/// Space-time region explored by the paths.
#[derive(Clone, Debug, PartialEq)]
pub enum KineticDomain {
    Box(ProductDomain),
    /// `Ω × ℝ^m × (t_min, ∞)`.
    Graph { omega: LipschitzGraphDomain, t_min: f64 },
}

impl KineticDomain {
    pub fn m(&self) -> usize {
        match self {
            KineticDomain::Box(d) => d.m(),
            KineticDomain::Graph { omega, .. } => omega.m,
        }
    }

    pub fn t_min(&self) -> f64 {
        match self {
            KineticDomain::Box(d) => d.t_range()[0],
            KineticDomain::Graph { t_min, .. } => *t_min,
        }
    }

    /// Open interior in `X` and `Y`, time in `(t_min, t_max]`.
    fn admits_start(&self, p: &Point) -> bool {
        match self {
            KineticDomain::Box(d) => {
                let m = d.m();
                let [t0, t1] = d.t_range();
                d.ux.contains_open(&p.x)
                    && p.y.iter().zip(&d.vyt.bounds[..m]).all(|(v, [lo, hi])| v > lo && v < hi)
                    && p.t > t0
                    && p.t <= t1
            }
            KineticDomain::Graph { omega, t_min } => omega.contains(&p.x) && p.t > *t_min,
        }
    }

    fn face_class(&self, face: FaceLocation, x: &[f64]) -> BoundaryClass {
        match face.yt_normal(self.m()) {
            Some(normal) => kolmogorov_sign(x, &normal),
            None => BoundaryClass::Kolmogorov,
        }
    }
}

/// Monte-Carlo settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub paths: usize,
    /// Step size; `None` means `(t − t_min) / 2048`.
    pub dt: Option<f64>,
    pub seed: u64,
    /// Exact-in-law `Y` increments instead of Euler.
    pub exact_y: bool,
    /// Brownian-bridge test for crossings of flat walls inside a step.
    pub bridge: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            paths: 100_000,
            dt: None,
            seed: 1,
            exact_y: false,
            bridge: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathOutcome {
    pub exit: Option<ExitRecord>,
    /// Steps redrawn after landing on a Free face.
    pub resamples: u32,
}

struct Walker<'a> {
    domain: &'a KineticDomain,
    sqrt_a: Vec<f64>,
    /// Variance rate `(2A)_{ii}` of each `X` coordinate.
    var: Vec<f64>,
    two_a: Vec<f64>,
    exact_y: bool,
    bridge: bool,
}

fn lerp(a: f64, b: f64, l: f64) -> f64 {
    a + l * (b - a)
}

impl Walker<'_> {
    /// Probability that a bridge between distances `d0`, `d1 > 0` from a flat
    /// wall touched it; skipped (zero) when below `e^{-40}`.
    fn crossing_prob(&self, d0: f64, d1: f64, var: f64, dt: f64) -> f64 {
        if !self.bridge || d0 <= 0.0 || d1 <= 0.0 {
            return 0.0;
        }
        let e = 2.0 * d0 * d1 / (var * dt);
        if e > 40.0 {
            0.0
        } else {
            (-e).exp()
        }
    }

    /// First boundary crossing of the step `(x0, y0) → (x1, y1)` as `(λ, face)`.
    #[allow(clippy::too_many_arguments)]
    fn first_exit<R: Rng>(
        &self,
        x0: &[f64],
        y0: &[f64],
        x1: &[f64],
        y1: &[f64],
        tau0: f64,
        dt: f64,
        rng: &mut R,
    ) -> Option<(f64, FaceLocation)> {
        let m = x0.len();
        let mut best: Option<(f64, FaceLocation)> = None;
        let mut offer = |l: f64, f: FaceLocation| {
            if best.is_none_or(|(b, _)| l < b) {
                best = Some((l, f));
            }
        };
        match self.domain {
            KineticDomain::Box(d) => {
                for i in 0..m {
                    let [lo, hi] = d.ux.bounds[i];
                    let (a, b) = (x0[i], x1[i]);
                    if b <= lo {
                        offer((lo - a) / (b - a), FaceLocation::XLower(i));
                    } else if b >= hi {
                        offer((hi - a) / (b - a), FaceLocation::XUpper(i));
                    } else {
                        let p_lo = self.crossing_prob(a - lo, b - lo, self.var[i], dt);
                        let p_hi = self.crossing_prob(hi - a, hi - b, self.var[i], dt);
                        if p_lo + p_hi > 0.0 {
                            let u: f64 = rng.random();
                            if u < p_lo {
                                offer(0.5, FaceLocation::XLower(i));
                            } else if u < p_lo + p_hi {
                                offer(0.5, FaceLocation::XUpper(i));
                            }
                        }
                    }
                    let [lo, hi] = d.vyt.bounds[i];
                    let (a, b) = (y0[i], y1[i]);
                    if b <= lo {
                        offer((lo - a) / (b - a), FaceLocation::YLower(i));
                    } else if b >= hi {
                        offer((hi - a) / (b - a), FaceLocation::YUpper(i));
                    }
                }
            }
            KineticDomain::Graph { omega, .. } => {
                let gap = |x: &[f64]| x[m - 1] - omega.psi(&x[..m - 1]);
                let (g0, g1) = (gap(x0), gap(x1));
                if g1 <= 0.0 {
                    let (mut lo, mut hi) = (0.0, 1.0);
                    let mut xm = vec![0.0; m];
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        for i in 0..m {
                            xm[i] = lerp(x0[i], x1[i], mid);
                        }
                        if gap(&xm) > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    offer(hi, FaceLocation::Graph);
                } else if let GraphFunction::Plane { slope } = &omega.psi {
                    // Distance to the plane along its unit normal.
                    let mut n: Vec<f64> = slope.iter().map(|a| -a).collect();
                    n.push(1.0);
                    let norm2 = n.iter().map(|v| v * v).sum::<f64>();
                    let var: f64 = (0..m)
                        .flat_map(|i| (0..m).map(move |k| (i, k)))
                        .map(|(i, k)| n[i] * self.two_a[i * m + k] * n[k])
                        .sum::<f64>()
                        / norm2;
                    let norm = norm2.sqrt();
                    let p = self.crossing_prob(g0 / norm, g1 / norm, var, dt);
                    if p > 0.0 && rng.random::<f64>() < p {
                        offer(0.5, FaceLocation::Graph);
                    }
                }
            }
        }
        let t_min = self.domain.t_min();
        if tau0 - dt <= t_min {
            offer(((tau0 - t_min) / dt).min(1.0), FaceLocation::Initial);
        }
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn exit_point(&self, x0: &[f64], y0: &[f64], x1: &[f64], y1: &[f64], tau0: f64, dt: f64, l: f64, face: FaceLocation) -> Point {
        let m = x0.len();
        let mut x: Vec<f64> = (0..m).map(|i| lerp(x0[i], x1[i], l)).collect();
        let mut y: Vec<f64> = (0..m).map(|i| lerp(y0[i], y1[i], l)).collect();
        let mut t = tau0 - l * dt;
        match (self.domain, face) {
            (KineticDomain::Box(d), FaceLocation::XLower(i)) => x[i] = d.ux.bounds[i][0],
            (KineticDomain::Box(d), FaceLocation::XUpper(i)) => x[i] = d.ux.bounds[i][1],
            (KineticDomain::Box(d), FaceLocation::YLower(i)) => y[i] = d.vyt.bounds[i][0],
            (KineticDomain::Box(d), FaceLocation::YUpper(i)) => y[i] = d.vyt.bounds[i][1],
            (KineticDomain::Graph { omega, .. }, FaceLocation::Graph) => x[m - 1] = omega.psi(&x[..m - 1]),
            (_, FaceLocation::Initial) => t = self.domain.t_min(),
            _ => {}
        }
        Point { x, y, t }
    }

    /// In-place version of `step` / `step_exact`.
    fn advance<R: Rng>(&self, x0: &[f64], y0: &[f64], h: f64, x1: &mut [f64], y1: &mut [f64], draw: &mut [f64], rng: &mut R) {
        let m = x0.len();
        for v in draw.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let sq = h.sqrt();
        for i in 0..m {
            let mut inc = 0.0;
            for k in 0..m {
                inc += self.sqrt_a[i * m + k] * draw[k];
            }
            x1[i] = x0[i] + sq * inc;
            y1[i] = y0[i] + x0[i] * h;
        }
        if self.exact_y {
            let c = (h * h * h / 12.0).sqrt();
            for i in 0..m {
                let mut extra = 0.0;
                for k in 0..m {
                    extra += self.sqrt_a[i * m + k] * draw[m + k];
                }
                y1[i] += 0.5 * h * (x1[i] - x0[i]) + c * extra;
            }
        }
    }

    fn run<R: Rng>(&self, start: &Point, dt: f64, rng: &mut R) -> PathOutcome {
        let m = start.x.len();
        let t_min = self.domain.t_min();
        let mut resamples = 0;
        if start.t <= t_min {
            return PathOutcome {
                exit: Some(ExitRecord {
                    point: start.clone(),
                    face: FaceLocation::Initial,
                }),
                resamples,
            };
        }
        let (mut x, mut y) = (start.x.clone(), start.y.clone());
        let (mut nx, mut ny) = (vec![0.0; m], vec![0.0; m]);
        let mut draw = vec![0.0; if self.exact_y { 2 * m } else { m }];
        let mut s = 0.0;
        loop {
            let tau0 = start.t - s;
            // The last step lands exactly on the initial-time face.
            let h = dt.min(tau0 - t_min);
            let mut tries = 0;
            loop {
                self.advance(&x, &y, h, &mut nx, &mut ny, &mut draw, rng);
                match self.first_exit(&x, &y, &nx, &ny, tau0, h, rng) {
                    None => {
                        std::mem::swap(&mut x, &mut nx);
                        std::mem::swap(&mut y, &mut ny);
                        s += h;
                        break;
                    }
                    Some((l, face)) => {
                        let point = self.exit_point(&x, &y, &nx, &ny, tau0, h, l, face);
                        if self.domain.face_class(face, &point.x) == BoundaryClass::Kolmogorov {
                            return PathOutcome {
                                exit: Some(ExitRecord { point, face }),
                                resamples,
                            };
                        }
                        tries += 1;
                        if tries > 1 {
                            return PathOutcome { exit: None, resamples };
                        }
                        resamples += 1;
                    }
                }
            }
        }
    }
}

/// Simulates `paths` independent paths from `start`. Path `i` draws from the
/// ChaCha stream `i` of `seed`, so results do not depend on scheduling.
pub fn simulate_exits(start: &Point, domain: &KineticDomain, a: &EllipticMatrixField, opts: &McOptions) -> Result<Vec<PathOutcome>> {
    let m = domain.m();
    if start.dim() != m || a.m() != m {
        return Err(KfpError::DimensionMismatch {
            expected: m,
            got: if start.dim() != m { start.dim() } else { a.m() },
        });
    }
    if opts.paths == 0 {
        return invalid("need at least one path");
    }
    let t_min = domain.t_min();
    let on_initial = start.t == t_min;
    if !on_initial && !domain.admits_start(start) {
        return invalid("start point must be interior or on the initial-time face");
    }
    let dt = opts.dt.unwrap_or((start.t - t_min) / 2048.0);
    if !on_initial && !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("time step must be positive, got {dt}"));
    }
    let sqrt_a = sqrt_two_a(a)?;
    let two_a: Vec<f64> = {
        let mat = a.eval(&Point::origin(m));
        (0..m * m).map(|k| 2.0 * mat[(k / m, k % m)]).collect()
    };
    let walker = Walker {
        domain,
        var: (0..m).map(|i| two_a[i * m + i]).collect(),
        two_a,
        sqrt_a,
        exact_y: opts.exact_y,
        bridge: opts.bridge,
    };
    Ok((0..opts.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            walker.run(start, dt, &mut rng)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub lost_fraction: f64,
    pub paths: usize,
    pub lost: usize,
    pub resamples: u64,
}

/// Sample mean and standard error of `values` (two-pass).
pub fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// `u(start) ≈ mean of φ over exit points`, lost paths excluded.
pub fn estimate_solution(
    start: &Point,
    domain: &KineticDomain,
    a: &EllipticMatrixField,
    phi: &(dyn Fn(&Point) -> f64 + Sync),
    opts: &McOptions,
) -> Result<McEstimate> {
    let outcomes = simulate_exits(start, domain, a, opts)?;
    let values: Vec<f64> = outcomes.iter().filter_map(|o| o.exit.as_ref()).map(|e| phi(&e.point)).collect();
    let lost = outcomes.len() - values.len();
    if values.is_empty() {
        return Err(KfpError::NonConvergence {
            message: "every path was lost".into(),
            history: Vec::new(),
        });
    }
    let (mean, std_error) = mean_and_error(&values);
    Ok(McEstimate {
        mean,
        std_error,
        lost_fraction: lost as f64 / outcomes.len() as f64,
        paths: outcomes.len(),
        lost,
        resamples: outcomes.iter().map(|o| o.resamples as u64).sum(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub patches: Vec<FaceLocation>,
    pub counts: Vec<usize>,
    pub masses: Vec<f64>,
    /// Exits through faces outside the given patches.
    pub unassigned: usize,
    pub lost: usize,
    pub paths: usize,
    pub lost_fraction: f64,
    /// Set when more than 1% of the paths were lost.
    pub warning: Option<String>,
}

/// Exit frequencies over `patches`; counts, unassigned and lost paths add up
/// to `paths`.
pub fn estimate_parabolic_measure(
    start: &Point,
    domain: &KineticDomain,
    a: &EllipticMatrixField,
    patches: &[FaceLocation],
    opts: &McOptions,
) -> Result<MeasureEstimate> {
    let outcomes = simulate_exits(start, domain, a, opts)?;
    let mut counts = vec![0usize; patches.len()];
    let (mut unassigned, mut lost) = (0, 0);
    for o in &outcomes {
        match &o.exit {
            None => lost += 1,
            Some(e) => match patches.iter().position(|p| *p == e.face) {
                Some(k) => counts[k] += 1,
                None => unassigned += 1,
            },
        }
    }
    let n = outcomes.len() as f64;
    let lost_fraction = lost as f64 / n;
    Ok(MeasureEstimate {
        patches: patches.to_vec(),
        masses: counts.iter().map(|c| *c as f64 / n).collect(),
        counts,
        unassigned,
        lost,
        paths: outcomes.len(),
        lost_fraction,
        warning: (lost_fraction > 0.01).then(|| format!("{:.2}% of paths lost", 100.0 * lost_fraction)),
    })
}

/// Every face of a box cylinder a path can stop on.
pub fn box_faces(m: usize) -> Vec<FaceLocation> {
    let mut v = Vec::new();
    for i in 0..m {
        v.extend([FaceLocation::XLower(i), FaceLocation::XUpper(i), FaceLocation::YLower(i), FaceLocation::YUpper(i)]);
    }
    v.push(FaceLocation::Initial);
    v
}

/// Unstopped paths from `(x0, y0)` after `steps` steps of size `s / steps`;
/// returns `(X_s, Y_s)` per path.
pub fn free_endpoints(
    x0: &[f64],
    y0: &[f64],
    s: f64,
    steps: usize,
    a: &EllipticMatrixField,
    opts: &McOptions,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if x0.len() != a.m() || y0.len() != a.m() {
        return Err(KfpError::DimensionMismatch {
            expected: a.m(),
            got: x0.len(),
        });
    }
    if !(s > 0.0) || steps == 0 {
        return invalid("need s > 0 and at least one step");
    }
    let sqrt_a = sqrt_two_a(a)?;
    let dt = s / steps as f64;
    let m = a.m();
    let n = if opts.exact_y { 2 * m } else { m };
    Ok((0..opts.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let mut st = PathState::new(x0.to_vec(), y0.to_vec());
            for _ in 0..steps {
                let draw: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                st = if opts.exact_y {
                    step_exact(&st, dt, &sqrt_a, &draw)
                } else {
                    step(&st, dt, &sqrt_a, &draw)
                };
            }
            (st.x, st.y)
        })
        .collect())
}

/// Sample moment with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moment {
    pub estimate: f64,
    pub std_error: f64,
    pub expected: f64,
}

impl Moment {
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.expected) / self.std_error
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub var_x: Moment,
    pub cov_xy: Moment,
    pub var_y: Moment,
}

fn central_moment(a: &[f64], b: &[f64], expected: f64) -> Moment {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let (mean, se) = mean_and_error(&prods);
    Moment {
        estimate: mean * n / (n - 1.0),
        std_error: se,
        expected,
    }
}

/// `Var X_s`, `Cov(X_s, Y_s)` and `Var Y_s` of the first coordinate for
/// `A = I`, against `2s`, `s²` and `2s³/3`.
pub fn moment_check(s: f64, steps: usize, opts: &McOptions) -> Result<MomentReport> {
    let a = EllipticMatrixField::identity(1);
    let ends = free_endpoints(&[0.0], &[0.0], s, steps, &a, opts)?;
    let xs: Vec<f64> = ends.iter().map(|e| e.0[0]).collect();
    let ys: Vec<f64> = ends.iter().map(|e| e.1[0]).collect();
    Ok(MomentReport {
        var_x: central_moment(&xs, &xs, 2.0 * s),
        cov_xy: central_moment(&xs, &ys, s * s),
        var_y: central_moment(&ys, &ys, 2.0 * s * s * s / 3.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AxisBox;

    fn unit_box(m: usize, t: [f64; 2]) -> KineticDomain {
        let mut vyt = vec![[-1.0, 1.0]; m];
        vyt.push(t);
        KineticDomain::Box(ProductDomain::new(AxisBox::cube(m, -1.0, 1.0).unwrap(), AxisBox::new(vyt).unwrap()).unwrap())
    }

    fn opts(paths: usize) -> McOptions {
        McOptions {
            paths,
            dt: Some(1e-3),
            ..Default::default()
        }
    }

    #[test]
    fn zero_draw_moves_y_by_x_dt() {
        let st = PathState::new(vec![1.0, 0.0], vec![0.0, 0.0]);
        let eye = [2f64.sqrt(), 0.0, 0.0, 2f64.sqrt()];
        let next = step(&st, 0.01, &eye, &[0.0, 0.0]);
        assert_eq!(next.y, vec![0.01, 0.0]);
        assert_eq!(next.x, vec![1.0, 0.0]);
        assert_eq!(next.s, 0.01);
    }

    #[test]
    fn constant_data_is_exact() {
        let d = unit_box(1, [0.0, 1.0]);
        let a = EllipticMatrixField::identity(1);
        let start = Point::new(vec![0.2], vec![-0.1], 0.5).unwrap();
        let est = estimate_solution(&start, &d, &a, &|_| 1.0, &opts(2000)).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn initial_face_start_exits_immediately() {
        let d = unit_box(1, [0.0, 1.0]);
        let a = EllipticMatrixField::identity(1);
        let start = Point::new(vec![0.2], vec![-0.1], 0.0).unwrap();
        let est = estimate_solution(&start, &d, &a, &|p| p.x[0] + 3.0, &opts(50)).unwrap();
        assert!((est.mean - 3.2).abs() < 1e-14);
        assert!(est.std_error < 1e-14);
        assert!(estimate_solution(&Point::new(vec![1.5], vec![0.0], 0.5).unwrap(), &d, &a, &|_| 1.0, &opts(5)).is_err());
    }

    #[test]
    fn exits_obey_sign_rule_and_are_reproducible() {
        let d = unit_box(2, [0.0, 1.0]);
        let a = EllipticMatrixField::identity(2);
        let start = Point::new(vec![0.3, -0.2], vec![0.8, -0.7], 0.9).unwrap();
        let o = McOptions { paths: 3000, dt: Some(2e-3), ..Default::default() };
        let outs = simulate_exits(&start, &d, &a, &o).unwrap();
        for e in outs.iter().filter_map(|o| o.exit.as_ref()) {
            assert_eq!(d.face_class(e.face, &e.point.x), BoundaryClass::Kolmogorov);
            if let KineticDomain::Box(pd) = &d {
                assert_eq!(pd.classify_point(&e.point), Some(BoundaryClass::Kolmogorov), "{e:?}");
            }
        }
        assert_eq!(outs, simulate_exits(&start, &d, &a, &o).unwrap());
        let rep = estimate_parabolic_measure(&start, &d, &a, &box_faces(2), &o).unwrap();
        assert_eq!(rep.counts.iter().sum::<usize>() + rep.unassigned + rep.lost, rep.paths);
        assert_eq!(rep.unassigned, 0);
    }

    #[test]
    fn short_horizon_concentrates_on_initial_face() {
        let d = unit_box(1, [0.0, 1.0]);
        let a = EllipticMatrixField::identity(1);
        let start = Point::new(vec![0.0], vec![0.0], 1e-4).unwrap();
        let rep = estimate_parabolic_measure(&start, &d, &a, &box_faces(1), &McOptions { paths: 2000, ..Default::default() }).unwrap();
        assert_eq!(rep.masses[4], 1.0);
    }

    #[test]
    fn half_space_paths_stop_on_graph() {
        let omega = LipschitzGraphDomain::half_space(1, 1.0).unwrap();
        let d = KineticDomain::Graph { omega, t_min: 0.0 };
        let a = EllipticMatrixField::identity(1);
        let start = Point::new(vec![0.3], vec![0.0], 1.0).unwrap();
        let outs = simulate_exits(&start, &d, &a, &opts(2000)).unwrap();
        let graph = outs.iter().filter(|o| matches!(&o.exit, Some(e) if e.face == FaceLocation::Graph)).count();
        assert!(graph > 500 && graph < 2000);
        for e in outs.iter().filter_map(|o| o.exit.as_ref()) {
            if e.face == FaceLocation::Graph {
                assert_eq!(e.point.x[0], 0.0);
            }
        }
    }

    #[test]
    fn moments_match_closed_forms() {
        let rep = moment_check(0.5, 200, &McOptions { paths: 20_000, exact_y: true, ..Default::default() }).unwrap();
        for m in [rep.var_x, rep.cov_xy, rep.var_y] {
            assert!(m.z_score().abs() < 4.0, "{m:?}");
        }
    }
}
