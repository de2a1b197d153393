//! Group structure of the Kolmogorov operator and the domains it is posed on.
//!
//! Points live in plain Cartesian coordinates `(X, Y, t)` with `X, Y ∈ ℝ^m`.
//! The translation group, the anisotropic dilations `(rX, r³Y, r²t)` and the
//! homogeneous norm are exposed as operations on [`Point`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, KfpError, Result};

/// A point `(X, Y, t)` of `ℝ^m × ℝ^m × ℝ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
}

impl Point {
    pub fn new(x: Vec<f64>, y: Vec<f64>, t: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(KfpError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.is_empty() {
            return invalid("point dimension m must be at least 1");
        }
        if !(x.iter().chain(y.iter()).all(|v| v.is_finite()) && t.is_finite()) {
            return invalid("point components must be finite");
        }
        Ok(Point { x, y, t })
    }

    pub fn origin(m: usize) -> Self {
        Point {
            x: vec![0.0; m],
            y: vec![0.0; m],
            t: 0.0,
        }
    }

    /// Builds a point from a flat `[x_1..x_m, y_1..y_m, t]` slice.
    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if v.len() < 3 || v.len() % 2 == 0 {
            return invalid(format!(
                "flat point must have 2m+1 components, got {}",
                v.len()
            ));
        }
        let m = (v.len() - 1) / 2;
        Point::new(v[..m].to_vec(), v[m..2 * m].to_vec(), v[2 * m])
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dim() + 1);
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.y);
        v.push(self.t);
        v
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Group law `(X̃, Ỹ, t̃) ∘ (X, Y, t) = (X̃ + X, Ỹ + Y − t X̃, t̃ + t)`.
    pub fn compose(&self, q: &Point) -> Point {
        debug_assert_eq!(self.dim(), q.dim());
        let x = self.x.iter().zip(&q.x).map(|(a, b)| a + b).collect();
        let y = self
            .y
            .iter()
            .zip(&q.y)
            .zip(&self.x)
            .map(|((yt, y), xt)| yt + y - q.t * xt)
            .collect();
        Point {
            x,
            y,
            t: self.t + q.t,
        }
    }

    /// Two-sided inverse: `(−X, −Y − tX, −t)`.
    pub fn inverse(&self) -> Point {
        Point {
            x: self.x.iter().map(|v| -v).collect(),
            y: self
                .y
                .iter()
                .zip(&self.x)
                .map(|(y, x)| -y - self.t * x)
                .collect(),
            t: -self.t,
        }
    }

    /// Anisotropic dilation `δ_r(X, Y, t) = (rX, r³Y, r²t)`.
    pub fn dilate(&self, r: f64) -> Result<Point> {
        if !(r > 0.0 && r.is_finite()) {
            return invalid(format!("dilation factor must be positive, got {r}"));
        }
        let r3 = r * r * r;
        Ok(Point {
            x: self.x.iter().map(|v| r * v).collect(),
            y: self.y.iter().map(|v| r3 * v).collect(),
            t: r * r * self.t,
        })
    }

    /// `‖(X,Y,t)‖ = |X| + |Y|^{1/3} + |t|^{1/2}`.
    pub fn homogeneous_norm(&self) -> f64 {
        euclid(&self.x) + euclid(&self.y).cbrt() + self.t.abs().sqrt()
    }

    /// Symmetric quasi-distance `½(‖q⁻¹∘p‖ + ‖p⁻¹∘q‖)`.
    pub fn quasi_distance(&self, q: &Point) -> f64 {
        0.5 * (q.relative(self).homogeneous_norm() + self.relative(q).homogeneous_norm())
    }

    /// `self⁻¹ ∘ p = (X − X̃, (Y − Ỹ) + (t − t̃)X̃, t − t̃)`, arranged so that
    /// `p = self` gives exactly the origin.
    pub fn relative(&self, p: &Point) -> Point {
        let dt = p.t - self.t;
        Point {
            x: p.x.iter().zip(&self.x).map(|(a, b)| a - b).collect(),
            y: p.y
                .iter()
                .zip(&self.y)
                .zip(&self.x)
                .map(|((y, yt), xt)| (y - yt) + dt * xt)
                .collect(),
            t: dt,
        }
    }

    pub fn max_abs_diff(&self, q: &Point) -> f64 {
        self.to_flat()
            .iter()
            .zip(q.to_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Largest observed ratio `d(p,q) / (d(p,w) + d(w,q))` over random triples.
///
/// Points are drawn from `δ_r` images of the unit cube with `r` log-uniform in
/// `[1e-2, 1e2]`, so that the ratio is probed across scales.
pub fn quasi_triangle_constant<R: Rng>(m: usize, samples: usize, rng: &mut R) -> f64 {
    let mut worst: f64 = 0.0;
    let draw = |rng: &mut R| {
        let r = 10f64.powf(rng.random_range(-2.0..2.0));
        let flat: Vec<f64> = (0..2 * m + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        Point::from_flat(&flat)
            .and_then(|p| p.dilate(r))
            .expect("sampled point is finite")
    };
    for _ in 0..samples {
        let p = draw(rng);
        let q = draw(rng);
        let w = draw(rng);
        let denom = p.quasi_distance(&w) + w.quasi_distance(&q);
        if denom > 0.0 {
            worst = worst.max(p.quasi_distance(&q) / denom);
        }
    }
    worst
}

/// Axis-aligned open box given by `[lo, hi]` per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub bounds: Vec<[f64; 2]>,
}

impl AxisBox {
    pub fn new(bounds: Vec<[f64; 2]>) -> Result<Self> {
        if bounds.is_empty() {
            return invalid("box needs at least one axis");
        }
        for (i, [lo, hi]) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return invalid(format!("box axis {i} is degenerate: [{lo}, {hi}]"));
            }
        }
        Ok(AxisBox { bounds })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        AxisBox::new(vec![[lo, hi]; dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains_open(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(&self.bounds)
                .all(|(c, [lo, hi])| *c > *lo && *c < *hi)
    }

    pub fn contains_closed(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(&self.bounds)
                .all(|(c, [lo, hi])| *c >= *lo && *c <= *hi)
    }

    pub fn is_subset_of(&self, other: &AxisBox) -> bool {
        self.dim() == other.dim()
            && self
                .bounds
                .iter()
                .zip(&other.bounds)
                .all(|(a, b)| a[0] >= b[0] && a[1] <= b[1])
    }

    pub fn measure(&self) -> f64 {
        self.bounds.iter().map(|[lo, hi]| hi - lo).product()
    }
}

/// Class of a boundary point of the cylinder `U_X × V_{Y,t}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryClass {
    /// Data is prescribed: `∂U_X × V_{Y,t}` and inflow points of `Ū_X × ∂V_{Y,t}`.
    Kolmogorov,
    /// Outflow part, no data.
    Free,
}

/// Sign rule on `Ū_X × ∂V_{Y,t}`: Kolmogorov iff `(X, −1)·N_{Y,t} > 0`.
///
/// `normal` is the outward unit normal in `(Y, t)` coordinates (length `m + 1`).
pub fn kolmogorov_sign(x: &[f64], normal: &[f64]) -> BoundaryClass {
    debug_assert_eq!(normal.len(), x.len() + 1);
    let m = x.len();
    let s: f64 = x.iter().zip(normal).map(|(a, b)| a * b).sum::<f64>() - normal[m];
    if s > 0.0 {
        BoundaryClass::Kolmogorov
    } else {
        BoundaryClass::Free
    }
}

/// Where on the boundary of a box cylinder a point sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceLocation {
    XLower(usize),
    XUpper(usize),
    YLower(usize),
    YUpper(usize),
    Initial,
    Final,
    /// The graph part `∂Ω` of a Lipschitz-graph domain.
    Graph,
}

impl FaceLocation {
    /// Outward `(Y, t)` normal of a `V_{Y,t}` face; `None` for `X` faces.
    pub fn yt_normal(&self, m: usize) -> Option<Vec<f64>> {
        let mut n = vec![0.0; m + 1];
        match *self {
            FaceLocation::YLower(i) => n[i] = -1.0,
            FaceLocation::YUpper(i) => n[i] = 1.0,
            FaceLocation::Initial => n[m] = -1.0,
            FaceLocation::Final => n[m] = 1.0,
            _ => return None,
        }
        Some(n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFace {
    pub location: FaceLocation,
    pub normal: Vec<f64>,
    pub class: BoundaryClass,
}

/// Bounded cylinder `U_X × V_{Y,t}` with both factors axis-aligned boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductDomain {
    pub ux: AxisBox,
    /// `m` space axes followed by the time axis.
    pub vyt: AxisBox,
}

impl ProductDomain {
    pub fn new(ux: AxisBox, vyt: AxisBox) -> Result<Self> {
        if vyt.dim() != ux.dim() + 1 {
            return Err(KfpError::DimensionMismatch {
                expected: ux.dim() + 1,
                got: vyt.dim(),
            });
        }
        Ok(ProductDomain { ux, vyt })
    }

    pub fn m(&self) -> usize {
        self.ux.dim()
    }

    pub fn t_range(&self) -> [f64; 2] {
        self.vyt.bounds[self.m()]
    }

    /// Class of a `V_{Y,t}` face with outward normal `face_normal` at the
    /// spatial position `x`. Points with `x ∈ ∂U_X` are always Kolmogorov.
    pub fn classify_boundary(&self, face_normal: &[f64], x: &[f64]) -> BoundaryClass {
        if self.on_x_boundary(x) {
            return BoundaryClass::Kolmogorov;
        }
        kolmogorov_sign(x, face_normal)
    }

    pub fn on_x_boundary(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.ux.bounds)
            .any(|(c, [lo, hi])| c == lo || c == hi)
    }

    /// All faces of the closed cylinder containing `p` (exact comparisons).
    pub fn boundary_faces(&self, p: &Point) -> Vec<BoundaryFace> {
        let m = self.m();
        let mut faces = Vec::new();
        for i in 0..m {
            let [lo, hi] = self.ux.bounds[i];
            for (hit, loc) in [
                (p.x[i] == lo, FaceLocation::XLower(i)),
                (p.x[i] == hi, FaceLocation::XUpper(i)),
            ] {
                if hit {
                    let mut normal = vec![0.0; m];
                    normal[i] = if matches!(loc, FaceLocation::XLower(_)) {
                        -1.0
                    } else {
                        1.0
                    };
                    faces.push(BoundaryFace {
                        location: loc,
                        normal,
                        class: BoundaryClass::Kolmogorov,
                    });
                }
            }
        }
        let yt: Vec<f64> = p.y.iter().copied().chain(std::iter::once(p.t)).collect();
        for (a, c) in yt.iter().enumerate() {
            let [lo, hi] = self.vyt.bounds[a];
            let locs = if a < m {
                [FaceLocation::YLower(a), FaceLocation::YUpper(a)]
            } else {
                [FaceLocation::Initial, FaceLocation::Final]
            };
            for (hit, loc) in [(*c == lo, locs[0]), (*c == hi, locs[1])] {
                if hit {
                    let normal = loc.yt_normal(m).expect("yt face");
                    let class = self.classify_boundary(&normal, &p.x);
                    faces.push(BoundaryFace {
                        location: loc,
                        normal,
                        class,
                    });
                }
            }
        }
        faces
    }

    /// `None` for interior points; otherwise Kolmogorov iff some face through
    /// `p` is Kolmogorov (edges belong to the closure of each incident face).
    pub fn classify_point(&self, p: &Point) -> Option<BoundaryClass> {
        let faces = self.boundary_faces(p);
        if faces.is_empty() {
            None
        } else if faces.iter().any(|f| f.class == BoundaryClass::Kolmogorov) {
            Some(BoundaryClass::Kolmogorov)
        } else {
            Some(BoundaryClass::Free)
        }
    }
}

/// Built-in graph functions `ψ: ℝ^{m−1} → ℝ`, each with `ψ(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GraphFunction {
    /// `ψ(x) = a·x`.
    Plane { slope: Vec<f64> },
    /// `ψ(x) = c|x|`.
    Cone { slope: f64 },
    /// `ψ(x) = a Σ sin(k x_i)`.
    Sine { amplitude: f64, wavenumber: f64 },
}

impl GraphFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            GraphFunction::Plane { slope } => slope.iter().zip(x).map(|(a, b)| a * b).sum(),
            GraphFunction::Cone { slope } => slope * euclid(x),
            GraphFunction::Sine {
                amplitude,
                wavenumber,
            } => x.iter().map(|v| amplitude * (wavenumber * v).sin()).sum(),
        }
    }
}

/// Unbounded domain `Ω = {(x, x_m) : x_m > ψ(x)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzGraphDomain {
    pub m: usize,
    pub psi: GraphFunction,
    /// Declared Lipschitz constant of `ψ`; must be positive since it sets
    /// the height `4MR` of the exhaustion boxes.
    pub lipschitz: f64,
}

impl LipschitzGraphDomain {
    pub fn new(m: usize, psi: GraphFunction, lipschitz: f64) -> Result<Self> {
        if m == 0 {
            return invalid("m must be at least 1");
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return invalid(format!(
                "Lipschitz constant M must be positive, got {lipschitz}"
            ));
        }
        if let GraphFunction::Plane { slope } = &psi {
            if slope.len() != m - 1 {
                return Err(KfpError::DimensionMismatch {
                    expected: m - 1,
                    got: slope.len(),
                });
            }
        }
        let d = LipschitzGraphDomain { m, psi, lipschitz };
        if d.psi(&vec![0.0; m - 1]) != 0.0 {
            return invalid("graph must pass through the origin");
        }
        Ok(d)
    }

    /// Half-space `{x_m > 0}`.
    pub fn half_space(m: usize, lipschitz: f64) -> Result<Self> {
        LipschitzGraphDomain::new(
            m,
            GraphFunction::Plane {
                slope: vec![0.0; m - 1],
            },
            lipschitz,
        )
    }

    pub fn psi(&self, tangential: &[f64]) -> f64 {
        if tangential.is_empty() {
            0.0
        } else {
            self.psi.eval(tangential)
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let m = self.m;
        x[m - 1] > self.psi(&x[..m - 1])
    }

    /// Largest observed difference quotient of `ψ` on random pairs in
    /// `[-radius, radius]^{m-1}`; a spot check, not a certificate.
    pub fn observed_lipschitz<R: Rng>(&self, radius: f64, samples: usize, rng: &mut R) -> f64 {
        let d = self.m - 1;
        if d == 0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..radius)).collect();
            let b: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..radius)).collect();
            let dist = euclid(&a.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>());
            if dist > 0.0 {
                worst = worst.max((self.psi(&a) - self.psi(&b)).abs() / dist);
            }
        }
        worst
    }
}

/// Bounded piece `U_X^R × V^R` of `Ω × ℝ^m × ℝ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExhaustionDomain {
    pub radius: f64,
    pub omega: LipschitzGraphDomain,
    /// Bounding box of `U_X^R`; the graph cut removes the part below `ψ`.
    pub bbox: AxisBox,
    /// `V^R = {(Y,t) : (R^{-3}Y, R^{-2}t) ∈ V}`.
    pub vyt: AxisBox,
}

/// `U_X^R = Ω ∩ {|x_i| < R, ψ(x) < x_m < 4MR}` and the dilated time-space box.
pub fn exhaustion_domain(
    omega: &LipschitzGraphDomain,
    v: &AxisBox,
    radius: f64,
) -> Result<ExhaustionDomain> {
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid(format!("exhaustion radius must be positive, got {radius}"));
    }
    let m = omega.m;
    if v.dim() != m + 1 {
        return Err(KfpError::DimensionMismatch {
            expected: m + 1,
            got: v.dim(),
        });
    }
    if !v.contains_open(&vec![0.0; m + 1]) {
        return invalid("V must contain the origin");
    }
    // |ψ(x)| ≤ M|x| ≤ M R √(m−1) on the tangential cube since ψ(0) = 0.
    let floor = -omega.lipschitz * radius * ((m - 1) as f64).sqrt();
    let mut bounds = vec![[-radius, radius]; m - 1];
    bounds.push([floor, 4.0 * omega.lipschitz * radius]);
    let r2 = radius * radius;
    let r3 = r2 * radius;
    let vyt = v
        .bounds
        .iter()
        .enumerate()
        .map(|(i, [lo, hi])| {
            let s = if i < m { r3 } else { r2 };
            [lo * s, hi * s]
        })
        .collect();
    Ok(ExhaustionDomain {
        radius,
        omega: omega.clone(),
        bbox: AxisBox::new(bounds)?,
        vyt: AxisBox::new(vyt)?,
    })
}

impl ExhaustionDomain {
    pub fn contains(&self, p: &Point) -> bool {
        let yt: Vec<f64> = p.y.iter().copied().chain(std::iter::once(p.t)).collect();
        self.bbox.contains_open(&p.x) && self.omega.contains(&p.x) && self.vyt.contains_open(&yt)
    }

    /// Sampled check that `self ⊆ other`.
    pub fn is_nested_in<R: Rng>(&self, other: &ExhaustionDomain, samples: usize, rng: &mut R) -> bool {
        let m = self.omega.m;
        for _ in 0..samples {
            let x: Vec<f64> = self
                .bbox
                .bounds
                .iter()
                .map(|[lo, hi]| rng.random_range(*lo..*hi))
                .collect();
            let yt: Vec<f64> = self
                .vyt
                .bounds
                .iter()
                .map(|[lo, hi]| rng.random_range(*lo..*hi))
                .collect();
            let p = Point {
                x,
                y: yt[..m].to_vec(),
                t: yt[m],
            };
            if self.contains(&p) && !other.contains(&p) {
                return false;
            }
        }
        self.bbox.is_subset_of(&other.bbox) && self.vyt.is_subset_of(&other.vyt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p1(x: f64, y: f64, t: f64) -> Point {
        Point::new(vec![x], vec![y], t).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, m: usize) -> Point {
        let v: Vec<f64> = (0..2 * m + 1).map(|_| rng.random_range(-3.0..3.0)).collect();
        Point::from_flat(&v).unwrap()
    }

    #[test]
    fn compose_matches_group_law() {
        let r = p1(1.0, 0.0, 0.0).compose(&p1(0.0, 0.0, 1.0));
        assert_eq!(r, p1(1.0, -1.0, 1.0));
        let q = p1(0.3, -2.0, 5.0);
        assert_eq!(Point::origin(1).compose(&q), q);
    }

    #[test]
    fn inverse_closed_form() {
        // Solving Ỹ + Y − tX̃ = 0 with t = −t̃, X = −X̃ gives Y = −Ỹ − t̃X̃.
        let p = p1(1.0, 1.0, 1.0);
        assert_eq!(p.inverse(), p1(-1.0, -2.0, -1.0));
        assert_eq!(Point::origin(1).inverse(), Point::origin(1));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_point(&mut rng, 2);
            assert!(p.compose(&p.inverse()).max_abs_diff(&Point::origin(2)) < 1e-12);
            assert!(p.inverse().compose(&p).max_abs_diff(&Point::origin(2)) < 1e-12);
            assert!(p.inverse().inverse().max_abs_diff(&p) < 1e-12);
        }
    }

    #[test]
    fn dilation_and_norm() {
        let p = p1(1.0, 1.0, 1.0);
        assert_eq!(p.dilate(2.0).unwrap(), p1(2.0, 8.0, 4.0));
        assert_eq!(p.dilate(1.0).unwrap(), p);
        assert!(p.dilate(0.0).is_err());
        assert!(p.dilate(-1.0).is_err());
        assert_eq!(Point::origin(3).homogeneous_norm(), 0.0);
        assert!((p1(1.0, 8.0, 4.0).homogeneous_norm() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn quasi_distance_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = random_point(&mut rng, 1);
            let q = random_point(&mut rng, 1);
            assert_eq!(p.quasi_distance(&p), 0.0);
            assert!(q.relative(&p).max_abs_diff(&q.inverse().compose(&p)) < 1e-12);
            let (a, b) = (p.quasi_distance(&q), q.quasi_distance(&p));
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            assert!(a > 0.0);
        }
        let c = quasi_triangle_constant(1, 5000, &mut rng);
        assert!(c.is_finite() && c >= 0.5, "measured constant {c}");
    }

    #[test]
    fn boundary_sign_rule() {
        let d = ProductDomain::new(
            AxisBox::cube(1, -1.0, 1.0).unwrap(),
            AxisBox::new(vec![[-1.0, 1.0], [0.0, 1.0]]).unwrap(),
        )
        .unwrap();
        let x = [0.5];
        assert_eq!(d.classify_boundary(&[0.0, 1.0], &x), BoundaryClass::Free);
        assert_eq!(d.classify_boundary(&[0.0, -1.0], &x), BoundaryClass::Kolmogorov);
        assert_eq!(d.classify_boundary(&[1.0, 0.0], &x), BoundaryClass::Kolmogorov);
        assert_eq!(d.classify_boundary(&[1.0, 0.0], &[-0.5]), BoundaryClass::Free);
        assert_eq!(d.classify_boundary(&[1.0, 0.0], &[0.0]), BoundaryClass::Free);
        assert_eq!(d.classify_boundary(&[-1.0, 0.0], &[-0.5]), BoundaryClass::Kolmogorov);
        // X faces always carry data, even at final time.
        assert_eq!(d.classify_point(&p1(1.0, 0.0, 1.0)), Some(BoundaryClass::Kolmogorov));
        assert_eq!(d.classify_point(&p1(0.2, 0.0, 1.0)), Some(BoundaryClass::Free));
        assert_eq!(d.classify_point(&p1(0.2, 0.0, 0.5)), None);
        assert_eq!(d.classify_point(&p1(-0.2, 1.0, 1.0)), Some(BoundaryClass::Free));
        assert_eq!(d.classify_point(&p1(-0.2, 1.0, 0.0)), Some(BoundaryClass::Kolmogorov));
    }

    #[test]
    fn exhaustion_scaling() {
        let omega = LipschitzGraphDomain::half_space(1, 1.0).unwrap();
        let v = AxisBox::cube(2, -1.0, 1.0).unwrap();
        let d1 = exhaustion_domain(&omega, &v, 1.0).unwrap();
        assert_eq!(d1.bbox.bounds, vec![[0.0, 4.0]]);
        assert_eq!(d1.vyt, v);
        let d2 = exhaustion_domain(&omega, &v, 2.0).unwrap();
        assert_eq!(d2.vyt.bounds, vec![[-8.0, 8.0], [-4.0, 4.0]]);
        assert!(exhaustion_domain(&omega, &v, 0.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(d1.is_nested_in(&d2, 2000, &mut rng));
        assert!(!d2.is_nested_in(&d1, 2000, &mut rng));
    }

    #[test]
    fn graph_domains() {
        assert!(LipschitzGraphDomain::half_space(1, 0.0).is_err());
        let cone = LipschitzGraphDomain::new(2, GraphFunction::Cone { slope: 0.5 }, 0.5).unwrap();
        assert!(cone.contains(&[1.0, 0.6]));
        assert!(!cone.contains(&[1.0, 0.4]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(cone.observed_lipschitz(2.0, 500, &mut rng) <= 0.5 + 1e-12);
        let sine = LipschitzGraphDomain::new(
            2,
            GraphFunction::Sine {
                amplitude: 0.2,
                wavenumber: 2.0,
            },
            0.4,
        )
        .unwrap();
        assert!(sine.observed_lipschitz(3.0, 500, &mut rng) <= 0.4 + 1e-12);
    }
}
