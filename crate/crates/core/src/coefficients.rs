//! Rough coefficient fields `A(X,Y,t)`: built-in families, ellipticity checks
//! and mollification.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, KfpError, Result};
use crate::geometry::{AxisBox, Point};

/// Built-in coefficient families.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientFamily {
    /// Constant symmetric matrix, row-major `m × m`.
    Constant { matrix: Vec<f64> },
    /// `R(θ) diag(λ) R(θ)ᵀ` with the rotation acting in the `(x_1, x_2)` plane.
    Rotated { eigenvalues: Vec<f64>, angle: f64 },
    /// `diag(a, b, a, …)` where `x_1` is in an even cell, `diag(b, a, b, …)`
    /// otherwise. Without a period the cells are `x_1 ≥ 0` and `x_1 < 0`.
    Checkerboard { a: f64, b: f64, period: Option<f64> },
    /// `(1 + ε sin(k(ΣX + ΣY + t))) I`.
    Periodic { amplitude: f64, wavenumber: f64 },
}

#[derive(Clone, Debug, PartialEq)]
enum Source {
    Family(CoefficientFamily),
    Mollified {
        base: Box<EllipticMatrixField>,
        epsilon: f64,
    },
}

/// Symmetric, uniformly elliptic coefficient field.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticMatrixField {
    m: usize,
    kappa: f64,
    source: Source,
    /// Outside this box (over `X`, or over all of `(X,Y,t)`) the field is `I`.
    identity_outside: Option<AxisBox>,
}

// 5-point Gauss–Legendre on [-1, 1].
const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Nodes and weights of the normalized bump `(1 − s²)²` on `[-1, 1]`,
/// integrated with 5-point Gauss on each half.
fn bump_rule() -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(10);
    for (lo, hi) in [(-1.0, 0.0), (0.0, 1.0)] {
        for (xi, w) in GAUSS5 {
            let s: f64 = 0.5 * (hi - lo) * xi + 0.5 * (hi + lo);
            let b = (1.0 - s * s).powi(2);
            rule.push((s, 0.5 * (hi - lo) * w * b));
        }
    }
    let total: f64 = rule.iter().map(|(_, w)| w).sum();
    rule.iter().map(|(s, w)| (*s, w / total)).collect()
}

impl EllipticMatrixField {
    pub fn new(m: usize, kappa: f64, family: CoefficientFamily) -> Result<Self> {
        if !(kappa >= 1.0) {
            return Err(KfpError::BadKappa(kappa));
        }
        if m == 0 {
            return invalid("m must be at least 1");
        }
        match &family {
            CoefficientFamily::Constant { matrix } => {
                if matrix.len() != m * m {
                    return Err(KfpError::DimensionMismatch {
                        expected: m * m,
                        got: matrix.len(),
                    });
                }
                for i in 0..m {
                    for j in 0..m {
                        if matrix[i * m + j] != matrix[j * m + i] {
                            return invalid("constant coefficient matrix must be symmetric");
                        }
                    }
                }
            }
            CoefficientFamily::Rotated { eigenvalues, .. } => {
                if eigenvalues.len() != m {
                    return Err(KfpError::DimensionMismatch {
                        expected: m,
                        got: eigenvalues.len(),
                    });
                }
                if eigenvalues.iter().any(|l| !(*l > 0.0)) {
                    return invalid("eigenvalues must be positive");
                }
            }
            CoefficientFamily::Checkerboard { a, b, period } => {
                if !(*a > 0.0 && *b > 0.0) {
                    return invalid("checkerboard values must be positive");
                }
                if let Some(p) = period {
                    if !(*p > 0.0) {
                        return invalid("checkerboard period must be positive");
                    }
                }
            }
            CoefficientFamily::Periodic { amplitude, .. } => {
                if !(amplitude.abs() < 1.0) {
                    return invalid("periodic amplitude must satisfy |ε| < 1");
                }
            }
        }
        Ok(EllipticMatrixField {
            m,
            kappa,
            source: Source::Family(family),
            identity_outside: None,
        })
    }

    pub fn identity(m: usize) -> Self {
        let mut matrix = vec![0.0; m * m];
        for i in 0..m {
            matrix[i * m + i] = 1.0;
        }
        EllipticMatrixField::new(m, 1.0, CoefficientFamily::Constant { matrix })
            .expect("identity is valid")
    }

    pub fn constant_diag(diag: &[f64], kappa: f64) -> Result<Self> {
        let m = diag.len();
        let mut matrix = vec![0.0; m * m];
        for (i, d) in diag.iter().enumerate() {
            matrix[i * m + i] = *d;
        }
        EllipticMatrixField::new(m, kappa, CoefficientFamily::Constant { matrix })
    }

    /// Restricts the perturbation to `region`; outside it `A ≡ I`.
    /// `region` spans either the `m` space axes or all `2m + 1` axes.
    pub fn with_identity_outside(mut self, region: AxisBox) -> Result<Self> {
        if region.dim() != self.m && region.dim() != 2 * self.m + 1 {
            return invalid(format!(
                "identity_outside must have {} or {} axes, got {}",
                self.m,
                2 * self.m + 1,
                region.dim()
            ));
        }
        self.identity_outside = Some(region);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `true` when the field does not depend on the point.
    pub fn is_constant(&self) -> bool {
        matches!(
            (&self.source, &self.identity_outside),
            (Source::Family(CoefficientFamily::Constant { .. }), None)
                | (Source::Family(CoefficientFamily::Rotated { .. }), None)
        ) || matches!(&self.source, Source::Mollified { base, .. } if base.is_constant())
    }

    pub fn eval(&self, p: &Point) -> DMatrix<f64> {
        let mut out = vec![0.0; self.m * self.m];
        self.eval_into(&p.x, &p.y, p.t, &mut out);
        DMatrix::from_row_slice(self.m, self.m, &out)
    }

    /// Writes `A(x, y, t)` row-major into `out` (length `m²`).
    pub fn eval_into(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        let m = self.m;
        if let Some(region) = &self.identity_outside {
            let inside = if region.dim() == m {
                region.contains_closed(x)
            } else {
                let flat: Vec<f64> = x.iter().chain(y).copied().chain([t]).collect();
                region.contains_closed(&flat)
            };
            if !inside {
                out.fill(0.0);
                for i in 0..m {
                    out[i * m + i] = 1.0;
                }
                return;
            }
        }
        match &self.source {
            Source::Family(f) => eval_family(f, m, x, y, t, out),
            Source::Mollified { base, epsilon } => {
                mollified_eval(base, *epsilon, x, y, t, out);
            }
        }
    }
}

fn eval_family(f: &CoefficientFamily, m: usize, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
    out.fill(0.0);
    match f {
        CoefficientFamily::Constant { matrix } => out.copy_from_slice(matrix),
        CoefficientFamily::Rotated { eigenvalues, angle } => {
            for i in 0..m {
                out[i * m + i] = eigenvalues[i];
            }
            if m >= 2 {
                let (s, c) = angle.sin_cos();
                let (l1, l2) = (eigenvalues[0], eigenvalues[1]);
                out[0] = c * c * l1 + s * s * l2;
                out[m + 1] = s * s * l1 + c * c * l2;
                let off = c * s * (l1 - l2);
                out[1] = off;
                out[m] = off;
            }
        }
        CoefficientFamily::Checkerboard { a, b, period } => {
            let even = match period {
                None => x[0] >= 0.0,
                Some(p) => (x[0] / p).floor().rem_euclid(2.0) == 0.0,
            };
            for i in 0..m {
                let first = (i % 2 == 0) == even;
                out[i * m + i] = if first { *a } else { *b };
            }
        }
        CoefficientFamily::Periodic {
            amplitude,
            wavenumber,
        } => {
            let phase: f64 = x.iter().chain(y).sum::<f64>() + t;
            let v = 1.0 + amplitude * (wavenumber * phase).sin();
            for i in 0..m {
                out[i * m + i] = v;
            }
        }
    }
}

fn mollified_eval(
    base: &EllipticMatrixField,
    eps: f64,
    x: &[f64],
    y: &[f64],
    t: f64,
    out: &mut [f64],
) {
    let m = base.m;
    let dims = 2 * m + 1;
    let rule = bump_rule();
    let q = rule.len();
    let total = q.pow(dims as u32);
    let mut px = x.to_vec();
    let mut py = y.to_vec();
    let mut tmp = vec![0.0; m * m];
    out.fill(0.0);
    let mut idx = vec![0usize; dims];
    for _ in 0..total {
        let mut w = 1.0;
        for (d, &k) in idx.iter().enumerate() {
            let (s, wk) = rule[k];
            w *= wk;
            let shift = eps * s;
            if d < m {
                px[d] = x[d] - shift;
            } else if d < 2 * m {
                py[d - m] = y[d - m] - shift;
            }
        }
        let pt = t - eps * rule[idx[dims - 1]].0;
        base.eval_into(&px, &py, pt, &mut tmp);
        for (o, v) in out.iter_mut().zip(&tmp) {
            *o += w * v;
        }
        for d in 0..dims {
            idx[d] += 1;
            if idx[d] < q {
                break;
            }
            idx[d] = 0;
        }
    }
    // Symmetrize exactly; each summand was symmetric.
    for i in 0..m {
        for j in (i + 1)..m {
            let v = 0.5 * (out[i * m + j] + out[j * m + i]);
            out[i * m + j] = v;
            out[j * m + i] = v;
        }
    }
}

/// `A ⋆ ρ_ε` with the tensor bump `(1 − s²)²` of half-width `ε` in every
/// variable, evaluated by fixed 10-point-per-axis quadrature. The result is a
/// convex combination of values of `A` and keeps its `κ`.
pub fn mollify(a: &EllipticMatrixField, epsilon: f64) -> Result<EllipticMatrixField> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return invalid(format!("mollification width must be positive, got {epsilon}"));
    }
    Ok(EllipticMatrixField {
        m: a.m,
        kappa: a.kappa,
        source: Source::Mollified {
            base: Box::new(a.clone()),
            epsilon,
        },
        identity_outside: None,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EllipticityReport {
    pub min_eig: f64,
    pub max_eig: f64,
    pub symmetric_defect: f64,
    /// First sampled point (flat `X, Y, t`) whose eigenvalues leave `[κ⁻¹, κ]`.
    pub violation: Option<(Vec<f64>, f64)>,
}

impl EllipticityReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }

    pub fn into_result(self, kappa: f64) -> Result<Self> {
        match &self.violation {
            None => Ok(self),
            Some((point, eig)) => Err(KfpError::EllipticityViolation {
                point: point.clone(),
                eigenvalue: *eig,
                lower: 1.0 / kappa,
                upper: kappa,
            }),
        }
    }
}

/// Samples `A` at random points of `region` (over all `2m + 1` axes) and
/// checks symmetry and `κ⁻¹ ≤ λ ≤ κ` to within `1e-10`.
pub fn verify_ellipticity<R: Rng>(
    a: &EllipticMatrixField,
    region: &AxisBox,
    samples: usize,
    rng: &mut R,
) -> Result<EllipticityReport> {
    let m = a.m;
    if samples == 0 {
        return invalid("need at least one sample");
    }
    if region.dim() != 2 * m + 1 {
        return Err(KfpError::DimensionMismatch {
            expected: 2 * m + 1,
            got: region.dim(),
        });
    }
    let tol = 1e-10;
    let mut report = EllipticityReport {
        min_eig: f64::INFINITY,
        max_eig: f64::NEG_INFINITY,
        symmetric_defect: 0.0,
        violation: None,
    };
    for _ in 0..samples {
        let flat: Vec<f64> = region
            .bounds
            .iter()
            .map(|[lo, hi]| rng.random_range(*lo..*hi))
            .collect();
        let p = Point::from_flat(&flat)?;
        let mat = a.eval(&p);
        let defect = (&mat - mat.transpose()).amax();
        report.symmetric_defect = report.symmetric_defect.max(defect);
        let sym = (&mat + mat.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym).eigenvalues;
        for &l in eig.iter() {
            report.min_eig = report.min_eig.min(l);
            report.max_eig = report.max_eig.max(l);
            let out = l < 1.0 / a.kappa - tol || l > a.kappa + tol;
            if out && report.violation.is_none() {
                report.violation = Some((flat.clone(), l));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn region(m: usize) -> AxisBox {
        AxisBox::cube(2 * m + 1, -1.0, 1.0).unwrap()
    }

    #[test]
    fn kappa_below_one_rejected() {
        let e = EllipticMatrixField::new(1, 0.5, CoefficientFamily::Constant { matrix: vec![1.0] });
        assert_eq!(e.unwrap_err().to_string(), "ellipticity constant must be ≥ 1 (got 0.5)");
    }

    #[test]
    fn identity_and_diag_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = verify_ellipticity(&EllipticMatrixField::identity(2), &region(2), 50, &mut rng).unwrap();
        assert_eq!((r.min_eig, r.max_eig, r.symmetric_defect), (1.0, 1.0, 0.0));
        let d = EllipticMatrixField::constant_diag(&[2.0, 0.5], 2.0).unwrap();
        assert!(verify_ellipticity(&d, &region(2), 50, &mut rng).unwrap().passed());
    }

    #[test]
    fn checkerboard_kappa_detection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fam = CoefficientFamily::Checkerboard {
            a: 2.0,
            b: 0.5,
            period: None,
        };
        let ok = EllipticMatrixField::new(2, 2.0, fam.clone()).unwrap();
        let r = verify_ellipticity(&ok, &region(2), 200, &mut rng).unwrap();
        assert!(r.passed());
        assert_eq!((r.min_eig, r.max_eig), (0.5, 2.0));
        let bad = EllipticMatrixField::new(2, 1.5, fam).unwrap();
        let r = verify_ellipticity(&bad, &region(2), 200, &mut rng).unwrap();
        assert!(!r.passed());
        assert!(r.into_result(1.5).is_err());
        // Cells differ: diag(2, 1/2) for x₁ ≥ 0 and diag(1/2, 2) otherwise.
        let p = Point::new(vec![0.3, 0.0], vec![0.0; 2], 0.0).unwrap();
        let q = Point::new(vec![-0.3, 0.0], vec![0.0; 2], 0.0).unwrap();
        assert_eq!(ok.eval(&p)[(0, 0)], 2.0);
        assert_eq!(ok.eval(&q)[(0, 0)], 0.5);
    }

    #[test]
    fn rotated_is_symmetric_with_given_spectrum() {
        let a = EllipticMatrixField::new(
            2,
            4.0,
            CoefficientFamily::Rotated {
                eigenvalues: vec![4.0, 0.25],
                angle: 0.7,
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = verify_ellipticity(&a, &region(2), 20, &mut rng).unwrap();
        assert!(r.passed());
        assert!((r.min_eig - 0.25).abs() < 1e-12 && (r.max_eig - 4.0).abs() < 1e-12);
        assert_eq!(r.symmetric_defect, 0.0);
    }

    #[test]
    fn identity_outside_region() {
        let a = EllipticMatrixField::constant_diag(&[3.0], 3.0)
            .unwrap()
            .with_identity_outside(AxisBox::cube(1, -0.5, 0.5).unwrap())
            .unwrap();
        let inside = Point::new(vec![0.1], vec![5.0], 5.0).unwrap();
        let outside = Point::new(vec![0.9], vec![0.0], 0.0).unwrap();
        assert_eq!(a.eval(&inside)[(0, 0)], 3.0);
        assert_eq!(a.eval(&outside)[(0, 0)], 1.0);
    }

    #[test]
    fn bump_rule_is_normalized_and_symmetric() {
        let r = bump_rule();
        let s: f64 = r.iter().map(|(_, w)| w).sum();
        assert!((s - 1.0).abs() < 1e-15);
        let first: f64 = r.iter().map(|(x, w)| x * w).sum();
        assert!(first.abs() < 1e-15);
    }

    #[test]
    fn mollify_constant_and_step() {
        let c = EllipticMatrixField::constant_diag(&[2.5], 2.5).unwrap();
        let mc = mollify(&c, 0.1).unwrap();
        let p = Point::new(vec![0.2], vec![0.1], 0.3).unwrap();
        assert!((mc.eval(&p)[(0, 0)] - 2.5).abs() < 1e-14);

        let step = EllipticMatrixField::new(
            1,
            3.0,
            CoefficientFamily::Checkerboard {
                a: 3.0,
                b: 1.0,
                period: None,
            },
        )
        .unwrap();
        let ms = mollify(&step, 0.1).unwrap();
        let far = Point::new(vec![0.15], vec![0.0], 0.0).unwrap();
        assert_eq!(ms.eval(&far)[(0, 0)], 3.0 * 1.0_f64.min(ms.eval(&far)[(0, 0)] / 3.0));
        assert!((ms.eval(&far)[(0, 0)] - 3.0).abs() < 1e-14);
        // Symmetric kernel: half the mass on each side of the jump.
        let mid = Point::new(vec![0.0], vec![0.0], 0.0).unwrap();
        assert!((ms.eval(&mid)[(0, 0)] - 2.0).abs() < 1e-6);
        assert!(mollify(&step, 0.0).is_err());
    }

    #[test]
    fn mollify_converges_at_smooth_points() {
        let a = EllipticMatrixField::new(
            1,
            2.0,
            CoefficientFamily::Periodic {
                amplitude: 0.5,
                wavenumber: 3.0,
            },
        )
        .unwrap();
        let p = Point::new(vec![0.37], vec![-0.2], 0.11).unwrap();
        let exact = a.eval(&p)[(0, 0)];
        let mut prev = f64::NAN;
        for eps in [0.2, 0.1, 0.05, 0.025] {
            let err = (mollify(&a, eps).unwrap().eval(&p)[(0, 0)] - exact).abs();
            if prev.is_finite() {
                assert!(prev / err >= 1.5, "ratio {}", prev / err);
            }
            prev = err;
        }
    }

    #[test]
    fn mollify_keeps_bounds() {
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
        let ma = mollify(&a, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = verify_ellipticity(&ma, &region(2), 3, &mut rng).unwrap();
        assert!(r.passed());
        assert!(r.min_eig >= 0.25 - 1e-8 && r.max_eig <= 4.0 + 1e-8);
        assert_eq!(r.symmetric_defect, 0.0);
    }
}
