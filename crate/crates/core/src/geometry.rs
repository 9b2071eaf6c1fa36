//! Surfaces in R^4: quadratic models, curve lifts and custom maps, together
//! with quadratic normal forms and the nondegeneracy determinants.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{axpy, det4, dot, norm, rank_with_margin, scale};

pub type Vec4 = [f64; 4];

/// Relative singular-value threshold for every rank decision.
pub const RANK_TOL: f64 = 1e-8;

/// Default constant for membership in the quadratic class.
pub const DEFAULT_CLASS_CONSTANT: f64 = 10.0;

/// Coefficients of the quadratic pair
/// `(A1 t^2 + 2 A2 ts + A3 s^2, A4 t^2 + 2 A5 ts + A6 s^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuadCoeffs(pub [f64; 6]);

impl QuadCoeffs {
    pub fn new(a: [f64; 6]) -> Result<Self> {
        ensure_finite("quadratic coefficients", &a)?;
        Ok(Self(a))
    }

    pub fn zero() -> Self {
        Self([0.0; 6])
    }

    pub fn get(&self, k: usize) -> f64 {
        self.0[k - 1]
    }

    /// The two quadratic forms at `(t, s)`.
    #[inline]
    pub fn forms(&self, t: f64, s: f64) -> (f64, f64) {
        let a = &self.0;
        (a[0] * t * t + 2.0 * a[1] * t * s + a[2] * s * s, a[3] * t * t + 2.0 * a[4] * t * s + a[5] * s * s)
    }

    /// The 2x2 minors `A1A5 - A2A4`, `A1A6 - A3A4`, `A3A5 - A2A6` used by the
    /// class test.
    pub fn minors(&self) -> [f64; 3] {
        let a = &self.0;
        [a[0] * a[4] - a[1] * a[3], a[0] * a[5] - a[2] * a[3], a[2] * a[4] - a[1] * a[5]]
    }

    /// Rank of `[[A1, A2, A3], [A4, A5, A6]]` is two.
    pub fn rank2(&self) -> bool {
        let m = DMatrix::from_row_slice(2, 3, &self.0);
        rank_with_margin(&m, RANK_TOL).0 == 2
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.map(|v| v * factor))
    }
}

impl fmt::Display for QuadCoeffs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v}")).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Membership in the class of quadratic surfaces with constant `c`.
pub fn in_l(a: &QuadCoeffs, c: f64) -> Result<bool> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("class constant must be positive, got {c}")));
    }
    let bounded = a.0.iter().all(|v| v.abs() <= c);
    let big = a.minors().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(bounded && big >= 1.0 / c)
}

type CurveFn = dyn Fn(f64) -> Vec4 + Send + Sync;

/// A curve `[0,1] -> R^4` with derivatives up to order four.
#[derive(Clone)]
pub enum CurveEvaluator {
    /// Component polynomials, coefficients in increasing degree.
    Polynomial([Vec<f64>; 4]),
    /// A black-box map differentiated with five-point central differences.
    Sampled(Arc<CurveFn>),
}

impl fmt::Debug for CurveEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Polynomial(c) => f.debug_tuple("Polynomial").field(c).finish(),
            Self::Sampled(_) => f.write_str("Sampled(..)"),
        }
    }
}

fn poly_derivative(coeffs: &[f64], order: usize, t: f64) -> f64 {
    // Horner over the differentiated coefficients c_deg * deg!/(deg-order)!.
    let mut acc = 0.0;
    for (deg, &c) in coeffs.iter().enumerate().skip(order).rev() {
        let falling: f64 = (deg - order + 1..=deg).map(|k| k as f64).product();
        acc = acc * t + c * falling;
    }
    acc
}

impl CurveEvaluator {
    /// The moment curve `(t, t^2, t^3, t^4)`.
    pub fn moment() -> Self {
        Self::Polynomial([vec![0.0, 1.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 0.0, 1.0]])
    }

    pub fn polynomial(components: [Vec<f64>; 4]) -> Result<Self> {
        for c in &components {
            ensure_finite("curve coefficients", c)?;
        }
        Ok(Self::Polynomial(components))
    }

    pub fn sampled<F>(f: F) -> Self
    where
        F: Fn(f64) -> Vec4 + Send + Sync + 'static,
    {
        Self::Sampled(Arc::new(f))
    }

    /// The `order`-th derivative at `t`, `order <= 4`.
    pub fn derivative(&self, order: usize, t: f64) -> Vec4 {
        match self {
            Self::Polynomial(c) => [0, 1, 2, 3].map(|k| poly_derivative(&c[k], order, t)),
            Self::Sampled(f) => sampled_derivative(f.as_ref(), order, t),
        }
    }

    pub fn value(&self, t: f64) -> Vec4 {
        self.derivative(0, t)
    }
}

fn combine(f: &CurveFn, t: f64, h: f64, weights: [f64; 5], denom: f64) -> Vec4 {
    let mut out = [0.0; 4];
    for (k, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let v = f(t + (k as f64 - 2.0) * h);
        axpy(*w, &v, &mut out);
    }
    scale(1.0 / denom, &out)
}

fn sampled_derivative(f: &CurveFn, order: usize, t: f64) -> Vec4 {
    match order {
        0 => f(t),
        1 => {
            let h = 1e-4;
            combine(f, t, h, [1.0, -8.0, 0.0, 8.0, -1.0], 12.0 * h)
        }
        2 => {
            let h = 1e-3;
            combine(f, t, h, [-1.0, 16.0, -30.0, 16.0, -1.0], 12.0 * h * h)
        }
        3 => {
            let h = 1e-2;
            combine(f, t, h, [-1.0, 2.0, 0.0, -2.0, 1.0], 2.0 * h * h * h)
        }
        4 => {
            let h = 1e-2;
            combine(f, t, h, [1.0, -4.0, 6.0, -4.0, 1.0], h * h * h * h)
        }
        _ => [f64::NAN; 4],
    }
}

/// Determinant of the matrix whose row `i` is the `i`-th derivative of the
/// curve at `t_i`.
pub fn curve_det(curve: &CurveEvaluator, ts: [f64; 4]) -> f64 {
    let rows = [0, 1, 2, 3].map(|i| curve.derivative(i + 1, ts[i]));
    det4(rows)
}

/// Determinant of `[Phi'(t); Phi'(s); Phi''(t); Phi''(s)]`.
pub fn lift_det(curve: &CurveEvaluator, t: f64, s: f64) -> f64 {
    if t == s {
        return 0.0;
    }
    det4([curve.derivative(1, t), curve.derivative(1, s), curve.derivative(2, t), curve.derivative(2, s)])
}

/// Value and partial derivatives up to order two at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: Vec4,
    pub dt: Vec4,
    pub ds: Vec4,
    pub dtt: Vec4,
    pub dts: Vec4,
    pub dss: Vec4,
}

type SurfaceFn = dyn Fn(f64, f64) -> Vec4 + Send + Sync;

#[derive(Clone)]
pub enum SurfaceKind {
    Quadratic(QuadCoeffs),
    CurveLift { curve: CurveEvaluator, i1: (f64, f64), i2: (f64, f64) },
    Custom(Arc<SurfaceFn>),
}

impl fmt::Debug for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Quadratic(a) => write!(f, "Quadratic{a}"),
            Self::CurveLift { curve, i1, i2 } => {
                f.debug_struct("CurveLift").field("curve", curve).field("i1", i1).field("i2", i2).finish()
            }
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A surface `[0,1]^2 -> R^4`. Immutable and cheap to clone.
#[derive(Debug, Clone)]
pub struct SurfaceEvaluator {
    pub kind: SurfaceKind,
    /// Warnings attached at construction, e.g. overlapping lift intervals.
    pub flags: Vec<String>,
}

/// Quadratic model surface for the given coefficients.
pub fn quad_surface(a: QuadCoeffs) -> Result<SurfaceEvaluator> {
    ensure_finite("quadratic coefficients", &a.0)?;
    Ok(SurfaceEvaluator { kind: SurfaceKind::Quadratic(a), flags: Vec::new() })
}

/// The sum lift `Phi(t) + Phi(s)` on `I1 x I2`.
pub fn curve_lift(curve: CurveEvaluator, i1: (f64, f64), i2: (f64, f64)) -> Result<SurfaceEvaluator> {
    for (name, iv) in [("I1", i1), ("I2", i2)] {
        ensure_finite(name, &[iv.0, iv.1])?;
        if !(0.0 <= iv.0 && iv.0 < iv.1 && iv.1 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} = [{}, {}] is not a subinterval of [0,1]",
                iv.0, iv.1
            )));
        }
    }
    let mut flags = Vec::new();
    if interval_gap(i1, i2) <= 0.0 {
        flags.push(format!("lift intervals [{}, {}] and [{}, {}] are not separated", i1.0, i1.1, i2.0, i2.1));
    }
    Ok(SurfaceEvaluator { kind: SurfaceKind::CurveLift { curve, i1, i2 }, flags })
}

pub fn interval_gap(i1: (f64, f64), i2: (f64, f64)) -> f64 {
    (i2.0 - i1.1).max(i1.0 - i2.1)
}

impl SurfaceEvaluator {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(f64, f64) -> Vec4 + Send + Sync + 'static,
    {
        Self { kind: SurfaceKind::Custom(Arc::new(f)), flags: Vec::new() }
    }

    pub fn quad_coeffs(&self) -> Option<&QuadCoeffs> {
        match &self.kind {
            SurfaceKind::Quadratic(a) => Some(a),
            _ => None,
        }
    }

    #[inline]
    pub fn value(&self, t: f64, s: f64) -> Vec4 {
        match &self.kind {
            SurfaceKind::Quadratic(a) => {
                let (q1, q2) = a.forms(t, s);
                [t, s, q1, q2]
            }
            SurfaceKind::CurveLift { curve, .. } => {
                let (u, v) = (curve.value(t), curve.value(s));
                [u[0] + v[0], u[1] + v[1], u[2] + v[2], u[3] + v[3]]
            }
            SurfaceKind::Custom(f) => f(t, s),
        }
    }

    pub fn jet(&self, t: f64, s: f64) -> Jet {
        match &self.kind {
            SurfaceKind::Quadratic(a) => {
                let c = &a.0;
                Jet {
                    value: self.value(t, s),
                    dt: [1.0, 0.0, 2.0 * (c[0] * t + c[1] * s), 2.0 * (c[3] * t + c[4] * s)],
                    ds: [0.0, 1.0, 2.0 * (c[1] * t + c[2] * s), 2.0 * (c[4] * t + c[5] * s)],
                    dtt: [0.0, 0.0, 2.0 * c[0], 2.0 * c[3]],
                    dts: [0.0, 0.0, 2.0 * c[1], 2.0 * c[4]],
                    dss: [0.0, 0.0, 2.0 * c[2], 2.0 * c[5]],
                }
            }
            SurfaceKind::CurveLift { curve, .. } => Jet {
                value: self.value(t, s),
                dt: curve.derivative(1, t),
                ds: curve.derivative(1, s),
                dtt: curve.derivative(2, t),
                dts: [0.0; 4],
                dss: curve.derivative(2, s),
            },
            SurfaceKind::Custom(f) => custom_jet(f.as_ref(), t, s),
        }
    }

    pub fn d_t(&self, t: f64, s: f64) -> Vec4 {
        self.jet(t, s).dt
    }
    pub fn d_s(&self, t: f64, s: f64) -> Vec4 {
        self.jet(t, s).ds
    }
    pub fn d_tt(&self, t: f64, s: f64) -> Vec4 {
        self.jet(t, s).dtt
    }
    pub fn d_ts(&self, t: f64, s: f64) -> Vec4 {
        self.jet(t, s).dts
    }
    pub fn d_ss(&self, t: f64, s: f64) -> Vec4 {
        self.jet(t, s).dss
    }
}

const FIVE_POINT: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];

fn custom_jet(f: &SurfaceFn, t: f64, s: f64) -> Jet {
    let h1 = 1e-4;
    let h2 = 1e-3;
    let mut dt = [0.0; 4];
    let mut ds = [0.0; 4];
    let mut dtt = [0.0; 4];
    let mut dss = [0.0; 4];
    let mut dts = [0.0; 4];
    let second = [-1.0, 16.0, -30.0, 16.0, -1.0];
    for k in 0..5 {
        let o = k as f64 - 2.0;
        if FIVE_POINT[k] != 0.0 {
            axpy(FIVE_POINT[k] / (12.0 * h1), &f(t + o * h1, s), &mut dt);
            axpy(FIVE_POINT[k] / (12.0 * h1), &f(t, s + o * h1), &mut ds);
        }
        axpy(second[k] / (12.0 * h2 * h2), &f(t + o * h2, s), &mut dtt);
        axpy(second[k] / (12.0 * h2 * h2), &f(t, s + o * h2), &mut dss);
        for l in 0..5 {
            let w = FIVE_POINT[k] * FIVE_POINT[l];
            if w != 0.0 {
                let q = l as f64 - 2.0;
                axpy(w / (144.0 * h2 * h2), &f(t + o * h2, s + q * h2), &mut dts);
            }
        }
    }
    Jet { value: f(t, s), dt, ds, dtt, dts, dss }
}

/// Local quadratic normal form of a surface at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    pub tangent: [Vec4; 2],
    pub normal: [Vec4; 2],
    pub coeffs: QuadCoeffs,
    /// Empirical `max |remainder| / |(u,v)|^3` over the sampled patch.
    pub residual: f64,
    pub rank2: bool,
}

fn gram_schmidt_push(basis: &mut Vec<Vec4>, v: &Vec4, tol: f64) -> bool {
    let mut w = *v;
    for _ in 0..2 {
        for b in basis.iter() {
            let c = dot(b, &w);
            axpy(-c, b, &mut w);
        }
    }
    let n = norm(&w);
    if n > tol {
        basis.push(scale(1.0 / n, &w));
        true
    } else {
        false
    }
}

fn project_off(basis: &[Vec4], v: &Vec4) -> Vec4 {
    let mut w = *v;
    for b in basis {
        let c = dot(b, &w);
        axpy(-c, b, &mut w);
    }
    w
}

/// Quadratic normal form at `(t0, s0)`.
///
/// The tangent frame is Gram-Schmidt of `(Psi_t, Psi_s)`; normals come from
/// the second derivatives projected off the tangent plane, largest first,
/// completed by coordinate vectors when the surface is flat in some normal
/// direction. The coefficients are unique up to an orthogonal mixing of the
/// two normals.
pub fn normal_form(surface: &SurfaceEvaluator, t0: f64, s0: f64) -> Result<NormalForm> {
    normal_form_with_guess(surface, t0, s0, None)
}

/// As [`normal_form`], seeding the tangent frame with `guess`. The first
/// tangent is always aligned with `Psi_t`; the guess only fixes the
/// orientation of the pair, which flips the sign of the mixed coefficients.
pub fn normal_form_with_guess(
    surface: &SurfaceEvaluator,
    t0: f64,
    s0: f64,
    guess: Option<[Vec4; 2]>,
) -> Result<NormalForm> {
    ensure_finite("normal form point", &[t0, s0])?;
    let jet = surface.jet(t0, s0);
    let scale_ref = norm(&jet.dt).max(norm(&jet.ds));
    let tol = 1e-10 * scale_ref.max(f64::MIN_POSITIVE);
    let mut tangent = Vec::with_capacity(2);
    if !gram_schmidt_push(&mut tangent, &jet.dt, tol) || !gram_schmidt_push(&mut tangent, &jet.ds, tol) {
        return Err(Error::DegenerateParametrization { t: t0, s: s0 });
    }
    if let Some(g) = guess {
        let m =
            [[dot(&tangent[0], &g[0]), dot(&tangent[0], &g[1])], [dot(&tangent[1], &g[0]), dot(&tangent[1], &g[1])]];
        let orient = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if orient.abs() < 1e-12 {
            return Err(Error::InvalidParameter("tangent guess does not span the tangent plane".into()));
        }
        if orient < 0.0 {
            tangent[1] = scale(-1.0, &tangent[1]);
        }
    }
    let second = [jet.dtt, jet.dts, jet.dss];
    let mut candidates: Vec<Vec4> = second.iter().map(|v| project_off(&tangent, v)).collect();
    candidates.sort_by(|a, b| norm(b).partial_cmp(&norm(a)).unwrap_or(std::cmp::Ordering::Equal));
    let mut frame = tangent.clone();
    let second_scale = second.iter().map(norm).fold(0.0, f64::max).max(scale_ref);
    for c in &candidates {
        if frame.len() == 4 {
            break;
        }
        gram_schmidt_push(&mut frame, c, 1e-9 * second_scale);
    }
    let mut axis = 0;
    while frame.len() < 4 && axis < 4 {
        let mut e = [0.0; 4];
        e[axis] = 1.0;
        gram_schmidt_push(&mut frame, &e, 1e-6);
        axis += 1;
    }
    let normal = [frame[2], frame[3]];

    // Tangent-coordinate Jacobian and its inverse.
    let je = [
        [dot(&tangent[0], &jet.dt), dot(&tangent[0], &jet.ds)],
        [dot(&tangent[1], &jet.dt), dot(&tangent[1], &jet.ds)],
    ];
    let det = je[0][0] * je[1][1] - je[0][1] * je[1][0];
    let inv = [[je[1][1] / det, -je[0][1] / det], [-je[1][0] / det, je[0][0] / det]];
    let mut coeffs = [0.0; 6];
    for (k, n) in normal.iter().enumerate() {
        let h = [[dot(n, &jet.dtt), dot(n, &jet.dts)], [dot(n, &jet.dts), dot(n, &jet.dss)]];
        // G = 1/2 inv^T H inv
        let mut g = [[0.0; 2]; 2];
        for (r, row) in g.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        acc += inv[i][r] * h[i][j] * inv[j][c];
                    }
                }
                *cell = 0.5 * acc;
            }
        }
        coeffs[3 * k] = g[0][0];
        coeffs[3 * k + 1] = 0.5 * (g[0][1] + g[1][0]);
        coeffs[3 * k + 2] = g[1][1];
    }
    ensure_finite("normal form coefficients", &coeffs)?;
    let coeffs = QuadCoeffs(coeffs);
    let tangent = [tangent[0], tangent[1]];
    let residual = normal_form_residual(surface, t0, s0, &tangent, &normal, &coeffs);
    Ok(NormalForm { tangent, normal, rank2: coeffs.rank2(), coeffs, residual })
}

fn normal_form_residual(
    surface: &SurfaceEvaluator,
    t0: f64,
    s0: f64,
    tangent: &[Vec4; 2],
    normal: &[Vec4; 2],
    coeffs: &QuadCoeffs,
) -> f64 {
    let p = surface.value(t0, s0);
    let mut worst: f64 = 0.0;
    for radius in [0.1, 0.05, 0.025] {
        for k in 0..16 {
            let ang = std::f64::consts::TAU * k as f64 / 16.0;
            let q = surface.value(t0 + radius * ang.cos(), s0 + radius * ang.sin());
            let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2], q[3] - p[3]];
            let (u, v) = (dot(&tangent[0], &d), dot(&tangent[1], &d));
            let r = (u * u + v * v).sqrt();
            if r < 1e-12 {
                continue;
            }
            let (w1, w2) = coeffs.forms(u, v);
            let rem = (dot(&normal[0], &d) - w1).hypot(dot(&normal[1], &d) - w2);
            worst = worst.max(rem / (r * r * r));
        }
    }
    worst
}

/// Rank of `[Psi_t, Psi_s, Psi_tt, Psi_ss, Psi_ts]` equals four.
pub fn rank5_check(surface: &SurfaceEvaluator, t: f64, s: f64) -> bool {
    rank5_margin(surface, t, s).0
}

/// Verdict plus `sigma_4 / sigma_max`, for locating the tolerance band.
pub fn rank5_margin(surface: &SurfaceEvaluator, t: f64, s: f64) -> (bool, f64) {
    let jet = surface.jet(t, s);
    let cols = [jet.dt, jet.ds, jet.dtt, jet.dss, jet.dts];
    let m = DMatrix::from_fn(4, 5, |r, c| cols[c][r]);
    let (rank, sv) = rank_with_margin(&m, RANK_TOL);
    let ratio = if sv[0] > 0.0 { sv[3] / sv[0] } else { 0.0 };
    (rank == 4, ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: [f64; 6]) -> QuadCoeffs {
        QuadCoeffs::new(a).unwrap()
    }

    #[test]
    fn quad_surface_values() {
        let s = quad_surface(q([1.0, 0.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(s.value(0.3, 0.7), [0.3, 0.7, 0.3 * 0.3, 0.7 * 0.7]);
        let s = quad_surface(q([1.0, 0.0, 0.0, 0.0, 0.5, 0.0])).unwrap();
        assert_eq!(s.value(0.5, 0.25), [0.5, 0.25, 0.25, 0.125]);
        let s = quad_surface(QuadCoeffs::zero()).unwrap();
        assert_eq!(s.value(0.5, 0.25), [0.5, 0.25, 0.0, 0.0]);
        assert!(QuadCoeffs::new([f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn class_membership_examples() {
        assert!(in_l(&q([1.0, 0.0, 0.0, 0.0, 0.0, 1.0]), 2.0).unwrap());
        assert!(in_l(&q([1.0, 0.0, 0.0, 0.0, 0.5, 0.0]), 2.0).unwrap());
        assert!(!in_l(&q([1.0, 0.0, 0.0, 2.0, 0.0, 0.0]), 10.0).unwrap());
        assert!(in_l(&QuadCoeffs::zero(), 0.0).is_err());
        assert!(!in_l(&q([20.0, 0.0, 0.0, 0.0, 0.0, 1.0]), 10.0).unwrap());
    }

    #[test]
    fn moment_curve_determinants() {
        let m = CurveEvaluator::moment();
        assert!((curve_det(&m, [0.0; 4]) - 288.0).abs() < 1e-12);
        assert!((lift_det(&m, 0.0, 1.0) + 24.0).abs() < 1e-12);
        assert_eq!(lift_det(&m, 0.4, 0.4), 0.0);
        let flat = CurveEvaluator::polynomial([vec![0.0, 1.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0], vec![]])
            .unwrap();
        assert_eq!(curve_det(&flat, [0.1, 0.2, 0.3, 0.4]), 0.0);
    }

    #[test]
    fn polynomial_derivatives() {
        let m = CurveEvaluator::moment();
        let t: f64 = 0.7;
        let v = m.value(t);
        for (a, b) in v.iter().zip([t, t * t, t * t * t, t.powi(4)]) {
            assert!((a - b).abs() < 1e-15);
        }
        let d3 = m.derivative(3, t);
        assert!((d3[2] - 6.0).abs() < 1e-15 && (d3[3] - 24.0 * t).abs() < 1e-14);
        assert_eq!(m.derivative(4, t), [0.0, 0.0, 0.0, 24.0]);
    }

    #[test]
    fn sampled_curve_matches_analytic() {
        let s = CurveEvaluator::sampled(|t| [t, t * t, t * t * t, t.powi(4)]);
        let m = CurveEvaluator::moment();
        for order in 1..=4 {
            let (a, b) = (s.derivative(order, 0.6), m.derivative(order, 0.6));
            for k in 0..4 {
                assert!((a[k] - b[k]).abs() < 1e-5 * (1.0 + b[k].abs()), "order {order}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn lift_is_symmetric() {
        let lift = curve_lift(CurveEvaluator::moment(), (0.0, 0.25), (0.75, 1.0)).unwrap();
        assert!(lift.flags.is_empty());
        assert_eq!(lift.value(0.0, 1.0), [1.0, 1.0, 1.0, 1.0]);
        assert_eq!(lift.value(0.2, 0.9), lift.value(0.9, 0.2));
        let overlapping = curve_lift(CurveEvaluator::moment(), (0.0, 0.6), (0.5, 1.0)).unwrap();
        assert_eq!(overlapping.flags.len(), 1);
    }

    #[test]
    fn normal_form_of_quadratic_at_origin_recovers_coefficients() {
        let a = q([0.7, -0.2, 0.4, 0.1, 0.9, -0.5]);
        let nf = normal_form(&quad_surface(a).unwrap(), 0.0, 0.0).unwrap();
        // Normal frame is an orthogonal mixing of e3, e4: compare invariants.
        let m1 = a.minors().map(f64::abs);
        let m2 = nf.coeffs.minors().map(f64::abs);
        for k in 0..3 {
            assert!((m1[k] - m2[k]).abs() < 1e-12, "{m1:?} vs {m2:?}");
        }
        let norm2 = |c: &QuadCoeffs| c.0.iter().map(|v| v * v).sum::<f64>();
        assert!((norm2(&a) - norm2(&nf.coeffs)).abs() < 1e-12);
        assert!(nf.residual < 1e-10);
    }

    #[test]
    fn flat_plane_is_degenerate() {
        let s = quad_surface(QuadCoeffs::zero()).unwrap();
        assert!(!rank5_check(&s, 0.3, 0.3));
        assert!(!normal_form(&s, 0.3, 0.3).unwrap().rank2);
        let s = quad_surface(q([1.0, 0.0, 0.0, 0.0, 0.5, 0.0])).unwrap();
        assert!(rank5_check(&s, 0.1, 0.9));
    }

    #[test]
    fn dependent_tangents_are_rejected() {
        let s = SurfaceEvaluator::custom(|t, s| [t + s, t + s, 0.0, 0.0]);
        assert!(matches!(normal_form(&s, 0.5, 0.5), Err(Error::DegenerateParametrization { .. })));
    }

    #[test]
    fn custom_jet_matches_quadratic() {
        let a = q([0.7, -0.2, 0.4, 0.1, 0.9, -0.5]);
        let exact = quad_surface(a).unwrap();
        let fd = SurfaceEvaluator::custom(move |t, s| {
            let (q1, q2) = a.forms(t, s);
            [t, s, q1, q2]
        });
        let (x, y) = (exact.jet(0.3, 0.6), fd.jet(0.3, 0.6));
        for (u, v) in [(x.dt, y.dt), (x.ds, y.ds), (x.dtt, y.dtt), (x.dts, y.dts), (x.dss, y.dss)] {
            for k in 0..4 {
                assert!((u[k] - v[k]).abs() < 1e-6 * (1.0 + u[k].abs()), "{u:?} {v:?}");
            }
        }
    }
}
