//! Parabolic rescaling of quadratic surfaces: the affine cap map, the shear
//! of the dual variable and the identity `|E_R g(x)| = delta^2 |E g^{a,b}(x')|`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::fields::{AmplitudeField, AtomicPoint, CapEvaluator, FieldMode};
use crate::geometry::{quad_surface, QuadCoeffs};
use crate::grid::DyadicSquare;
use crate::phase::e;

/// The square `[a, a + delta] x [b, b + delta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSquare {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

impl ParamSquare {
    pub fn new(a: f64, b: f64, delta: f64) -> Result<Self> {
        ensure_finite("rescaling square", &[a, b, delta])?;
        if delta == 0.0 {
            return Err(Error::InvalidParameter("rescaling side must be nonzero".into()));
        }
        Ok(Self { a, b, delta })
    }

    pub fn from_dyadic(sq: &DyadicSquare) -> Self {
        let r = sq.rect();
        Self { a: r.t0, b: r.s0, delta: sq.side() }
    }

    /// The dyadic square this is, if `delta = 2^-k` and the corner is aligned.
    pub fn as_dyadic(&self) -> Option<DyadicSquare> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return None;
        }
        let k = -self.delta.log2();
        if k.fract() != 0.0 || (-k).exp2() != self.delta {
            return None;
        }
        let (i, j) = (self.a / self.delta, self.b / self.delta);
        if i.fract() != 0.0 || j.fract() != 0.0 || i < 0.0 || j < 0.0 {
            return None;
        }
        DyadicSquare::new(k as u32, i as u32, j as u32).ok()
    }

    /// `eta(t', s') = (a + delta t', b + delta s')`.
    pub fn forward(&self, t: f64, s: f64) -> (f64, f64) {
        (self.a + self.delta * t, self.b + self.delta * s)
    }

    pub fn inverse(&self, t: f64, s: f64) -> (f64, f64) {
        ((t - self.a) / self.delta, (s - self.b) / self.delta)
    }

    /// `self` followed by `inner` taken in the rescaled coordinates.
    pub fn compose(&self, inner: &ParamSquare) -> ParamSquare {
        let (a, b) = self.forward(inner.a, inner.b);
        ParamSquare { a, b, delta: self.delta * inner.delta }
    }
}

/// Dual-variable shear attached to a quadratic surface and a square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearMap {
    pub coeffs: QuadCoeffs,
    pub square: ParamSquare,
}

impl ShearMap {
    pub fn new(coeffs: QuadCoeffs, square: ParamSquare) -> Self {
        Self { coeffs, square }
    }

    /// The linear part of the map as a 4x4 matrix (rows of `x'`).
    pub fn matrix(&self) -> [[f64; 4]; 4] {
        let c = &self.coeffs.0;
        let ParamSquare { a, b, delta } = self.square;
        let d2 = delta * delta;
        [
            [delta, 0.0, delta * (2.0 * a * c[0] + 2.0 * b * c[1]), delta * (2.0 * a * c[3] + 2.0 * b * c[4])],
            [0.0, delta, delta * (2.0 * b * c[2] + 2.0 * a * c[1]), delta * (2.0 * b * c[5] + 2.0 * a * c[4])],
            [0.0, 0.0, d2, 0.0],
            [0.0, 0.0, 0.0, d2],
        ]
    }

    /// The phase `x . Psi(a, b)` dropped by the change of variables.
    pub fn corner_phase(&self, x: &[f64; 4]) -> f64 {
        let ParamSquare { a, b, .. } = self.square;
        let (q1, q2) = self.coeffs.forms(a, b);
        x[0] * a + x[1] * b + x[2] * q1 + x[3] * q2
    }
}

/// `x' = shear(x)`.
pub fn shear_point(map: &ShearMap, x: &[f64; 4]) -> [f64; 4] {
    let c = &map.coeffs.0;
    let ParamSquare { a, b, delta } = map.square;
    [
        delta * (x[0] + x[2] * (2.0 * a * c[0] + 2.0 * b * c[1]) + x[3] * (2.0 * a * c[3] + 2.0 * b * c[4])),
        delta * (x[1] + x[2] * (2.0 * b * c[2] + 2.0 * a * c[1]) + x[3] * (2.0 * b * c[5] + 2.0 * a * c[4])),
        delta * delta * x[2],
        delta * delta * x[3],
    ]
}

/// `g^{a,b}(t', s') = g(a + delta t', b + delta s')` on the unit square.
///
/// Atomic points are mapped by the inverse cap map and their amplitudes
/// divided by `delta^2`, so the rescaled sum obeys the same identity as the
/// integral. Continuous fields need a dyadic square so that supports stay
/// dyadic.
pub fn rescale_field(field: &AmplitudeField, square: &ParamSquare) -> Result<AmplitudeField> {
    let d2 = square.delta * square.delta;
    match &field.mode {
        FieldMode::Atomic { points } => {
            let mut mapped = Vec::with_capacity(points.len());
            for p in points {
                let (t, s) = square.inverse(p.t, p.s);
                let tol = 1e-12;
                if !(-tol..=1.0 + tol).contains(&t) || !(-tol..=1.0 + tol).contains(&s) {
                    return Err(Error::SupportViolation(format!(
                        "atomic point ({}, {}) lies outside the rescaling square",
                        p.t, p.s
                    )));
                }
                mapped.push(AtomicPoint { t: t.clamp(0.0, 1.0), s: s.clamp(0.0, 1.0), a: p.a / d2 });
            }
            AmplitudeField::atomic(mapped)
        }
        FieldMode::Continuous { amplitude, quad, window } => {
            let Some(r) = square.as_dyadic() else {
                return Err(Error::InvalidParameter(format!(
                    "continuous fields rescale only by dyadic squares, got {square:?}"
                )));
            };
            let mut support = Vec::with_capacity(field.support.len());
            for sq in &field.support {
                if !r.contains_square(sq) {
                    return Err(Error::SupportViolation(format!("support square {sq:?} is not inside {r:?}")));
                }
                let k = sq.level - r.level;
                support.push(DyadicSquare { level: k, i: sq.i - (r.i << k), j: sq.j - (r.j << k) });
            }
            let window = DyadicSquare {
                level: window.level + r.level,
                i: (window.i << r.level) + r.i,
                j: (window.j << r.level) + r.j,
            };
            let out = AmplitudeField::continuous(amplitude.clone(), support)?.with_quadrature(*quad)?;
            Ok(AmplitudeField {
                mode: FieldMode::Continuous { amplitude: amplitude.clone(), quad: *quad, window },
                support: out.support,
            })
        }
    }
}

/// Caps of level `cap_level` inside `r`, paired with their images among the
/// caps of level `cap_level - r.level` of the unit square.
pub fn cap_correspondence(r: &DyadicSquare, cap_level: u32) -> Result<Vec<(DyadicSquare, DyadicSquare)>> {
    if cap_level < r.level {
        return Err(Error::InvalidParameter(format!("cap level {cap_level} is coarser than the square")));
    }
    let k = cap_level - r.level;
    Ok(r.descendants(cap_level)
        .into_iter()
        .map(|c| (c, DyadicSquare { level: k, i: c.i - (r.i << k), j: c.j - (r.j << k) }))
        .collect())
}

/// `n` random unit-modulus masses uniformly placed in the square.
pub fn random_atomic_in(square: &ParamSquare, n: usize, seed: u64) -> Result<AmplitudeField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| {
            let (t, s) = square.forward(rng.random(), rng.random());
            AtomicPoint { t, s, a: e(rng.random()) }
        })
        .collect();
    AmplitudeField::atomic(pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleCheck {
    pub max_residual: f64,
    pub trials: usize,
    /// Largest phase-corrected complex deviation, relative.
    pub max_complex_residual: f64,
}

/// Max over random `x` with `|x| <= delta^-2` of
/// `| |E_R g(x)| - delta^2 |E g^{a,b}(x')| | / (delta^2 |E g^{a,b}(x')| + 1e-30)`.
pub fn rescaling_residual(
    a: &QuadCoeffs,
    field: &AmplitudeField,
    square: &ParamSquare,
    trials: usize,
    seed: u64,
) -> Result<RescaleCheck> {
    let surface = quad_surface(*a)?;
    let rescaled = rescale_field(field, square)?;
    let map = ShearMap::new(*a, *square);
    let original = CapEvaluator::new(&surface, field, 0)?;
    let unit = CapEvaluator::new(&surface, &rescaled, 0)?;
    let d2 = square.delta * square.delta;
    let reach = 1.0 / d2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    for _ in 0..trials {
        let mut x = [0.0; 4];
        let mut n2 = 0.0;
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
            n2 += *v * *v;
        }
        let r = reach * rng.random::<f64>();
        let scale = r / f64::sqrt(n2);
        x.iter_mut().for_each(|v| *v *= scale);
        let lhs = original.total(&x)?;
        let rhs = unit.total(&shear_point(&map, &x))? * d2;
        worst = worst.max((lhs.norm() - rhs.norm()).abs() / (rhs.norm() + 1e-30));
        let phased: Complex64 = rhs * e(map.corner_phase(&x));
        worst_c = worst_c.max((lhs - phased).norm() / (rhs.norm() + 1e-30));
    }
    Ok(RescaleCheck { max_residual: worst, trials, max_complex_residual: worst_c })
}
