//! The transversality form of a quadratic surface, its eigen-strip geometry,
//! pairwise transversality of dyadic squares and the bilinear Jacobian
//! identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::QuadCoeffs;
use crate::linalg::det4;

pub use crate::grid::{DyadicSquare, Rect};

/// Coefficients of `Q(dt, ds) = c1 dt^2 + c2 dt ds + c3 ds^2` with the
/// eigen-decomposition of its matrix `[[c1, c2/2], [c2/2, c3]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransCoeffs {
    pub c: [f64; 3],
    pub matrix: [[f64; 2]; 2],
    /// Eigenvalues with `|lambda[0]| >= |lambda[1]|`.
    pub lambda: [f64; 2],
    pub v1: [f64; 2],
    pub v2: [f64; 2],
}

impl TransCoeffs {
    #[inline]
    pub fn form(&self, dt: f64, ds: f64) -> f64 {
        self.c[0] * dt * dt + self.c[1] * dt * ds + self.c[2] * ds * ds
    }

    /// Eigen-coordinates `(beta1, beta2)` of a difference vector.
    pub fn eigen_coords(&self, dt: f64, ds: f64) -> [f64; 2] {
        [self.v1[0] * dt + self.v1[1] * ds, self.v2[0] * dt + self.v2[1] * ds]
    }

    pub fn is_indefinite(&self) -> bool {
        self.lambda[0] * self.lambda[1] < 0.0
    }
}

/// Symmetric 2x2 eigenproblem in closed form. Returns eigenvalues ordered by
/// magnitude and `v1` with nonnegative first coordinate (ties: second).
pub fn sym2_eigen(a: f64, b: f64, c: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
    let mean = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    let (hi, lo) = (mean + rad, mean - rad);
    let (l1, l2) = if hi.abs() >= lo.abs() { (hi, lo) } else { (lo, hi) };
    let mut v = if b == 0.0 && rad == 0.0 {
        [1.0, 0.0]
    } else {
        // Two algebraically equivalent eigenvectors; take the better scaled.
        let p = [b, l1 - a];
        let q = [l1 - c, b];
        let (np, nq) = (p[0].hypot(p[1]), q[0].hypot(q[1]));
        if np >= nq {
            [p[0] / np, p[1] / np]
        } else {
            [q[0] / nq, q[1] / nq]
        }
    };
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        v = [-v[0], -v[1]];
    }
    ([l1, l2], v, [-v[1], v[0]])
}

pub fn trans_coeffs(a: &QuadCoeffs) -> TransCoeffs {
    let x = &a.0;
    let c = [x[0] * x[4] - x[1] * x[3], x[0] * x[5] - x[2] * x[3], x[1] * x[5] - x[2] * x[4]];
    let matrix = [[c[0], 0.5 * c[1]], [0.5 * c[1], c[2]]];
    let (lambda, v1, v2) = sym2_eigen(c[0], 0.5 * c[1], c[2]);
    TransCoeffs { c, matrix, lambda, v1, v2 }
}

/// Difference rectangle `{p1 - p2 : p1 in r1, p2 in r2}`.
pub fn difference_rect(r1: &Rect, r2: &Rect) -> Rect {
    Rect::new(r1.t0 - r2.t1, r1.t1 - r2.t0, r1.s0 - r2.s1, r1.s1 - r2.s0)
}

/// `min |Q|` over the difference rectangle, analytically.
///
/// `Q` is homogeneous quadratic, so its only interior critical value is 0.
/// The extremes are therefore among the corners, the vertices of the edge
/// parabolas and (when the origin is inside) zero; a sign change forces a
/// zero by continuity.
pub fn min_abs_form_rect(tc: &TransCoeffs, d: &Rect) -> f64 {
    if d.t0 <= 0.0 && 0.0 <= d.t1 && d.s0 <= 0.0 && 0.0 <= d.s1 {
        return 0.0;
    }
    let [c1, c2, c3] = tc.c;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut push = |v: f64| {
        lo = lo.min(v);
        hi = hi.max(v);
    };
    for &x in &[d.t0, d.t1] {
        for &y in &[d.s0, d.s1] {
            push(tc.form(x, y));
        }
        // Fixed dt = x: vertex of c3 y^2 + c2 x y.
        if c3 != 0.0 {
            let y = -c2 * x / (2.0 * c3);
            if d.s0 < y && y < d.s1 {
                push(tc.form(x, y));
            }
        }
    }
    for &y in &[d.s0, d.s1] {
        if c1 != 0.0 {
            let x = -c2 * y / (2.0 * c1);
            if d.t0 < x && x < d.t1 {
                push(tc.form(x, y));
            }
        }
    }
    if lo <= 0.0 && 0.0 <= hi {
        0.0
    } else {
        lo.abs().min(hi.abs())
    }
}

pub fn min_abs_form(a: &QuadCoeffs, r1: &DyadicSquare, r2: &DyadicSquare) -> f64 {
    min_abs_form_rect(&trans_coeffs(a), &difference_rect(&r1.rect(), &r2.rect()))
}

/// Grid minimum of `|Q|` over the difference rectangle at `cells` cells per
/// side. Test oracle, not the production path.
pub fn min_abs_form_grid(tc: &TransCoeffs, d: &Rect, cells: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..=cells {
        let x = d.t0 + d.width() * i as f64 / cells as f64;
        for j in 0..=cells {
            let y = d.s0 + d.height() * j as f64 / cells as f64;
            best = best.min(tc.form(x, y).abs());
        }
    }
    best
}

/// `min |lambda1 b1^2 + lambda2 b2^2|` over the difference rectangle mapped
/// into eigen-coordinates (a parallelogram). Independent of
/// [`min_abs_form_rect`]: works on the diagonalised form and the polygon
/// edges rather than the axis-aligned rectangle.
pub fn min_abs_form_eigen(tc: &TransCoeffs, d: &Rect) -> f64 {
    let [l1, l2] = tc.lambda;
    let q = |b: [f64; 2]| l1 * b[0] * b[0] + l2 * b[1] * b[1];
    let polar = |p: [f64; 2], r: [f64; 2]| l1 * p[0] * r[0] + l2 * p[1] * r[1];
    let corners = [(d.t0, d.s0), (d.t1, d.s0), (d.t1, d.s1), (d.t0, d.s1)].map(|(x, y)| tc.eigen_coords(x, y));
    // The origin lies inside the parallelogram iff it lies inside the
    // rectangle; test with edge cross products in eigen space.
    let mut sign = 0.0f64;
    let mut inside = true;
    for k in 0..4 {
        let (p, r) = (corners[k], corners[(k + 1) % 4]);
        let cross = (r[0] - p[0]) * (-p[1]) - (r[1] - p[1]) * (-p[0]);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                inside = false;
            }
        }
    }
    if inside {
        return 0.0;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..4 {
        let (p, r) = (corners[k], corners[(k + 1) % 4]);
        let dir = [r[0] - p[0], r[1] - p[1]];
        let v = q(p);
        lo = lo.min(v);
        hi = hi.max(v);
        let qa = q(dir);
        if qa != 0.0 {
            let tau = -polar(p, dir) / qa;
            if 0.0 < tau && tau < 1.0 {
                let w = q([p[0] + tau * dir[0], p[1] + tau * dir[1]]);
                lo = lo.min(w);
                hi = hi.max(w);
            }
        }
    }
    if lo <= 0.0 && 0.0 <= hi {
        0.0
    } else {
        lo.abs().min(hi.abs())
    }
}

/// Strips predicted to contain every non-transverse difference vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripPrediction {
    /// `"definite"` (one strip along `v2`, or a disc when both eigenvalues
    /// are comparable), `"indefinite"` (two strips) or `"degenerate"`.
    pub kind: String,
    /// Unit normals `n` of the strips `{|n . delta| < half_width}`.
    pub normals: Vec<[f64; 2]>,
    pub half_width: f64,
}

pub fn predict_strips(tc: &TransCoeffs, nu: f64) -> StripPrediction {
    let [l1, l2] = tc.lambda;
    if l1 == 0.0 {
        return StripPrediction { kind: "degenerate".into(), normals: Vec::new(), half_width: f64::INFINITY };
    }
    if l1 * l2 >= 0.0 {
        // |Q| >= |l1| b1^2, so |Q| < nu forces |b1| < sqrt(nu/|l1|).
        return StripPrediction { kind: "definite".into(), normals: vec![tc.v1], half_width: (nu / l1.abs()).sqrt() };
    }
    // Q = l1 (b1 - r b2)(b1 + r b2); one factor is below sqrt(nu/|l1|).
    let r = (-l2 / l1).sqrt();
    let normals = [1.0, -1.0].map(|sgn: f64| {
        let n = [tc.v1[0] - sgn * r * tc.v2[0], tc.v1[1] - sgn * r * tc.v2[1]];
        let len = n[0].hypot(n[1]);
        [n[0] / len, n[1] / len]
    });
    let half_width = (nu / l1.abs()).sqrt() / (1.0 + r * r).sqrt();
    StripPrediction { kind: "indefinite".into(), normals: normals.to_vec(), half_width }
}

/// True when the rectangle meets some predicted strip.
pub fn rect_meets_strips(strips: &StripPrediction, d: &Rect) -> bool {
    if strips.normals.is_empty() {
        return true;
    }
    strips.normals.iter().any(|n| {
        let vals = [(d.t0, d.s0), (d.t1, d.s0), (d.t0, d.s1), (d.t1, d.s1)].map(|(x, y)| n[0] * x + n[1] * y);
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lo < strips.half_width && hi > -strips.half_width
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransverseGraph {
    #[serde(rename = "K")]
    pub k: u32,
    pub nu: f64,
    pub coeffs: QuadCoeffs,
    pub trans: TransCoeffs,
    /// Non-transverse partner count (self included) per square, indexed
    /// `i * K + j`.
    pub counts: Vec<usize>,
    pub max_count: usize,
    pub strips: StripPrediction,
    /// Fraction of ordered pairs where the eigen-coordinate classification
    /// agrees with the rectangle classification. Pairs whose minimum sits
    /// within a relative `1e-9` of `nu` count as agreeing.
    pub eigen_agreement: f64,
    /// Ordered pairs whose minimum lies in that tie band.
    pub ties: u64,
    /// Fraction of non-transverse pairs whose difference rectangle meets a
    /// predicted strip (1 when the strip picture is a valid cover).
    pub strip_cover: f64,
    /// Offsets `(di, dj)` of non-transverse partners.
    pub nontransverse_offsets: Vec<(i32, i32)>,
}

/// Classify all ordered pairs of level-`log2 K` squares. Pair classes depend
/// only on the index offset, so the work is `O(K^2)` forms plus counting.
pub fn transverse_graph(a: &QuadCoeffs, k: u32, nu: Option<f64>) -> Result<TransverseGraph> {
    if k == 0 || !k.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("K = {k} is not a power of two")));
    }
    let nu = nu.unwrap_or(1.0 / (k as f64 * k as f64));
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!("nu = {nu} must be nonnegative")));
    }
    let tc = trans_coeffs(a);
    let strips = predict_strips(&tc, nu);
    let h = 1.0 / k as f64;
    let ki = k as i32;
    let span = 2 * ki - 1;
    let offsets: Vec<(i32, i32)> = (-(ki - 1)..ki).flat_map(|di| (-(ki - 1)..ki).map(move |dj| (di, dj))).collect();
    let band = 1e-9 * nu;
    let classes: Vec<(bool, bool, bool, bool)> = offsets
        .par_iter()
        .map(|&(di, dj)| {
            let d = Rect::new((di - 1) as f64 * h, (di + 1) as f64 * h, (dj - 1) as f64 * h, (dj + 1) as f64 * h);
            let direct = min_abs_form_rect(&tc, &d);
            let eigen = min_abs_form_eigen(&tc, &d);
            let tie = (direct - nu).abs() <= band || (eigen - nu).abs() <= band;
            (direct < nu, eigen < nu, rect_meets_strips(&strips, &d), tie)
        })
        .collect();
    let idx = |di: i32, dj: i32| ((di + ki - 1) * span + (dj + ki - 1)) as usize;
    let mut counts = vec![0usize; (k * k) as usize];
    let mut agree = 0u64;
    let mut nontransverse = 0u64;
    let mut covered = 0u64;
    let mut ties = 0u64;
    for i in 0..ki {
        for j in 0..ki {
            let mut c = 0;
            for i2 in 0..ki {
                for j2 in 0..ki {
                    let (nt, ne, st, tie) = classes[idx(i - i2, j - j2)];
                    if nt {
                        c += 1;
                        nontransverse += 1;
                        covered += st as u64;
                    }
                    agree += (nt == ne || tie) as u64;
                    ties += tie as u64;
                }
            }
            counts[(i * ki + j) as usize] = c;
        }
    }
    let pairs = (k as u64).pow(4);
    let nontransverse_offsets = offsets.iter().zip(&classes).filter(|(_, c)| c.0).map(|(o, _)| *o).collect();
    Ok(TransverseGraph {
        k,
        nu,
        coeffs: *a,
        trans: tc,
        max_count: counts.iter().copied().max().unwrap_or(0),
        counts,
        strips,
        eigen_agreement: agree as f64 / pairs as f64,
        ties,
        strip_cover: if nontransverse == 0 { 1.0 } else { covered as f64 / nontransverse as f64 },
        nontransverse_offsets,
    })
}

/// The change of variables `(t1, s1, t2, s2) -> (t1 + t2, s1 + s2,
/// q1(t1, s1) + q1(t2, s2), q2(t1, s1) + q2(t2, s2))`.
pub fn bilinear_map(a: &QuadCoeffs, p: [f64; 4]) -> [f64; 4] {
    let (a1, a2) = a.forms(p[0], p[1]);
    let (b1, b2) = a.forms(p[2], p[3]);
    [p[0] + p[2], p[1] + p[3], a1 + b1, a2 + b2]
}

/// Central-difference Jacobian determinant of [`bilinear_map`].
pub fn bilinear_jacobian_fd(a: &QuadCoeffs, p: [f64; 4], h: f64) -> f64 {
    let mut cols = [[0.0; 4]; 4];
    for (k, col) in cols.iter_mut().enumerate() {
        let (mut up, mut dn) = (p, p);
        up[k] += h;
        dn[k] -= h;
        let (fu, fd) = (bilinear_map(a, up), bilinear_map(a, dn));
        for r in 0..4 {
            col[r] = (fu[r] - fd[r]) / (2.0 * h);
        }
    }
    let rows = [0, 1, 2, 3].map(|r| [cols[0][r], cols[1][r], cols[2][r], cols[3][r]]);
    det4(rows)
}

/// Max over `n` random points of `|J - 4 Q(t1 - t2, s1 - s2)| / |4 Q|`
/// with the finite-difference determinant `J` at step `1e-4`.
pub fn jacobian_residual(a: &QuadCoeffs, n: usize, seed: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    let tc = trans_coeffs(a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let p: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
        worst = worst.max(jacobian_point_residual(a, &tc, p));
    }
    Ok(worst)
}

pub fn jacobian_point_residual(a: &QuadCoeffs, tc: &TransCoeffs, p: [f64; 4]) -> f64 {
    let j = bilinear_jacobian_fd(a, p, 1e-4);
    let target = 4.0 * tc.form(p[0] - p[2], p[1] - p[3]);
    let err = (j - target).abs();
    if err == 0.0 {
        0.0
    } else {
        err / target.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: [f64; 6]) -> QuadCoeffs {
        QuadCoeffs::new(a).unwrap()
    }

    fn sq(level: u32, i: u32, j: u32) -> DyadicSquare {
        DyadicSquare::new(level, i, j).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let tc = trans_coeffs(&q([1.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
        assert_eq!(tc.c, [0.0, 1.0, 0.0]);
        assert_eq!(tc.lambda.map(f64::abs), [0.5, 0.5]);
        assert!(tc.is_indefinite());
        let tc = trans_coeffs(&q([1.0, 0.0, 0.0, 0.0, 0.5, 0.0]));
        assert_eq!(tc.c, [0.5, 0.0, 0.0]);
        assert_eq!(tc.lambda, [0.5, 0.0]);
        assert_eq!(tc.v1, [1.0, 0.0]);
    }

    #[test]
    fn eigenvectors_satisfy_eigen_equation() {
        for (a, b, c) in [(1.0, 0.3, -2.0), (0.0, 0.5, 0.0), (2.0, 0.0, 2.0), (-1.0, 1e-9, 3.0)] {
            let (l, v1, v2) = sym2_eigen(a, b, c);
            for (lam, v) in [(l[0], v1), (l[1], v2)] {
                assert!((a * v[0] + b * v[1] - lam * v[0]).abs() < 1e-12);
                assert!((b * v[0] + c * v[1] - lam * v[1]).abs() < 1e-12);
            }
            assert!(l[0].abs() >= l[1].abs());
            assert!(v1[0] >= 0.0);
        }
    }

    #[test]
    fn min_form_examples() {
        let a = q([1.0, 0.0, 0.0, 0.0, 0.5, 0.0]);
        let r = sq(3, 0, 0);
        assert_eq!(min_abs_form(&a, &r, &r), 0.0);
        let v = min_abs_form(&a, &r, &sq(3, 2, 0));
        assert!((v - 0.5 / 64.0).abs() < 1e-15);

        let a = q([1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let tc = trans_coeffs(&a);
        let v = min_abs_form(&a, &r, &sq(3, 2, 2));
        assert!((v - 1.0 / 64.0).abs() < 1e-15);
        let d = difference_rect(&r.rect(), &sq(3, 2, 2).rect());
        let grid = min_abs_form_grid(&tc, &d, 250);
        assert!((grid - v).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(transverse_graph(&q([1.0, 0.0, 0.0, 0.0, 0.5, 0.0]), 6, None).is_err());
    }

    #[test]
    fn degenerate_quadratic_partners_are_a_column_band() {
        let g = transverse_graph(&q([1.0, 0.0, 0.0, 0.0, 0.5, 0.0]), 8, None).unwrap();
        for &(di, _) in &g.nontransverse_offsets {
            assert!(((di.abs() - 1).max(0) as f64) / 8.0 < 2f64.sqrt() / 8.0);
        }
        assert_eq!(g.nontransverse_offsets.len(), 5 * 15);
        // Interior columns: five columns of eight squares.
        assert_eq!(g.max_count, 40);
        assert!(g.max_count <= 5 * 8);
        assert_eq!(g.eigen_agreement, 1.0);
    }

    #[test]
    fn hyperbolic_case_has_two_axis_strips() {
        let g = transverse_graph(&q([1.0, 0.0, 0.0, 0.0, 0.0, 1.0]), 8, None).unwrap();
        assert_eq!(g.strips.kind, "indefinite");
        // Q = dt ds vanishes on the axes: the strip normals are e1, e2.
        let mut ns: Vec<[f64; 2]> = g.strips.normals.iter().map(|n| [n[0].abs(), n[1].abs()]).collect();
        ns.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!(ns[0][0] < 1e-12 && (ns[1][0] - 1.0).abs() < 1e-12);
        assert!(g.eigen_agreement >= 0.99);
        assert_eq!(g.strip_cover, 1.0);
    }

    #[test]
    fn jacobian_identity_for_product_surface() {
        let a = q([1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(jacobian_residual(&a, 500, 7).unwrap() < 1e-5);
        let tc = trans_coeffs(&a);
        assert_eq!(jacobian_point_residual(&a, &tc, [0.3, 0.4, 0.3, 0.4]), 0.0);
    }
}
