//! One-dimensional extensions `int_I h(t) e(x . Phi(t)) dt` along curves:
//! the planar parabola calibration, the two-interval curve bilinear
//! measurement, and the Dirichlet-kernel oracle for the flat line.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;

use super::{assemble, gate_points, l2_sum, lp_sum, pad4, DecouplingReport, Measure, Parts};
use crate::error::{Error, Result};
use crate::fields::{AmplitudeField, CapEvaluator, QuadratureSpec};
use crate::geometry::{curve_lift, interval_gap, lift_det, CurveEvaluator};
use crate::grid::{cap_level_for, DyadicSquare};
use crate::norms::{sample_moments, BallSpec, Profile};
use crate::phase::e;
use crate::quadrature::GaussLegendre;

pub type Amp1 = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// Smallest gap allowed between the two intervals of a curve bilinear run.
pub const MIN_INTERVAL_GAP: f64 = 0.0625;

/// Per-interval extensions of one curve, with a per-point cell count.
#[derive(Clone)]
pub struct IntervalEvaluator {
    curve: CurveEvaluator,
    intervals: Vec<(f64, f64)>,
    slopes: Vec<f64>,
    amplitude: Option<Amp1>,
    gl: GaussLegendre,
    quad: QuadratureSpec,
}

impl IntervalEvaluator {
    pub fn new(
        curve: CurveEvaluator,
        intervals: Vec<(f64, f64)>,
        amplitude: Option<Amp1>,
        quad: QuadratureSpec,
    ) -> Result<Self> {
        for &(a, b) in &intervals {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidParameter(format!("bad interval [{a}, {b}]")));
            }
        }
        let slopes = intervals
            .iter()
            .map(|&(a, b)| {
                let best = (0..=16)
                    .map(|k| {
                        let d = curve.derivative(1, a + (b - a) * k as f64 / 16.0);
                        d.iter().map(|c| c * c).sum::<f64>().sqrt()
                    })
                    .fold(0.0, f64::max);
                1.25 * best
            })
            .collect();
        Ok(Self { curve, intervals, slopes, amplitude, gl: GaussLegendre::new(quad.order), quad })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn eval(&self, x: &[f64; 4], out: &mut [Complex64]) {
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        for ((&(a, b), &slope), o) in self.intervals.iter().zip(&self.slopes).zip(out.iter_mut()) {
            let cells = self.quad.cells(xn * slope * (b - a));
            let h = (b - a) / cells as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..cells {
                let left = a + h * c as f64;
                for (u, w) in self.gl.nodes.iter().zip(&self.gl.weights) {
                    let t = left + h * u;
                    let v = self.curve.value(t);
                    let z = x[0] * v[0] + x[1] * v[1] + x[2] * v[2] + x[3] * v[3];
                    let amp = self.amplitude.as_ref().map_or(Complex64::new(1.0, 0.0), |f| f(t));
                    acc += amp * e(z) * (h * w);
                }
            }
            *o = acc;
        }
    }

    pub fn total(&self, x: &[f64; 4]) -> Complex64 {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len()];
        self.eval(x, &mut buf);
        buf.iter().sum()
    }
}

/// Intervals of length `2^-level` inside `[a, b]`.
fn dyadic_intervals(a: f64, b: f64, level: u32) -> Vec<(f64, f64)> {
    let side = (-(level as f64)).exp2();
    let k = DyadicSquare::per_axis(level);
    (0..k)
        .map(|i| (i as f64 * side, (i + 1) as f64 * side))
        .filter(|&(lo, hi)| lo >= a - 1e-15 && hi <= b + 1e-15)
        .collect()
}

/// The parabola `t -> (t, t^2)`: `l^2` and `l^p` ratios of `h = 1` on
/// `support`, intervals of length about `N^{-1/2}`, planar ball of radius `N`.
pub fn parabola_reference(n: f64, p: f64, support: (f64, f64), measure: &Measure) -> Result<DecouplingReport> {
    let start = Instant::now();
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::InvalidParameter(format!("N = {n} must be at least 1")));
    }
    let level = cap_level_for(n);
    let intervals = dyadic_intervals(support.0, support.1, level);
    let covered: f64 = intervals.iter().map(|(a, b)| b - a).sum();
    if intervals.is_empty() || (covered - (support.1 - support.0)).abs() > 1e-12 {
        return Err(Error::SupportViolation(format!(
            "support [{}, {}] is not a union of caps of length 2^-{level}",
            support.0, support.1
        )));
    }
    let parabola = CurveEvaluator::Polynomial([vec![0.0, 1.0], vec![0.0, 0.0, 1.0], vec![0.0], vec![0.0]]);
    let ev = IntervalEvaluator::new(parabola, intervals, None, QuadratureSpec::default())?;
    let ball = measure.ball.ball(2, n)?;
    let caps = ev.len();
    let moments = sample_moments(&ball, &measure.sampler, p, caps + 1, |x, mags| {
        let mut buf = vec![Complex64::new(0.0, 0.0); caps];
        ev.eval(&pad4(x), &mut buf);
        mags[0] = buf.iter().sum::<Complex64>().norm();
        for (m, v) in mags[1..].iter_mut().zip(&buf) {
            *m = v.norm();
        }
        Ok(())
    })?;
    let parts = super::linear_parts("parabola-2d", n, p, level, &moments);
    let mut report = assemble(parts, measure, start);
    // Gate: refine the rule at far-out points.
    let fine = IntervalEvaluator { quad: refine(&ev.quad), ..ev.clone() };
    let mut gate: f64 = 0.0;
    for x in gate_points(&ball, measure.sampler.seed)? {
        let (a, b) = (ev.total(&x), fine.total(&x));
        let scale = a.norm().max(b.norm());
        if scale > 0.0 {
            gate = gate.max((a - b).norm() / scale);
        }
    }
    super::set_gate(&mut report, Some(gate));
    report.runtime_ms = measure.elapsed(start);
    Ok(report)
}

fn refine(q: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec {
        cycles_per_cell: q.cycles_per_cell / 2.0,
        min_cells: q.min_cells * 2,
        max_cells: q.max_cells * 2,
        ..*q
    }
}

/// Geometric-mean `L^12` norm over the unweighted ball `B_N` of the two
/// interval extensions, against the product of per-interval `l^6` sums of
/// `L^6(w_{B_N})` norms at scale `N^{-1/2}`.
///
/// `pair` is the square `I1 x I2`. The left side is evaluated as the
/// extension of `h1 (x) h2` over the sum lift `Phi(t) + Phi(s)`.
pub fn curve_bilinear(
    curve: &CurveEvaluator,
    pair: &DyadicSquare,
    h1: Option<Amp1>,
    h2: Option<Amp1>,
    n: f64,
    measure: &Measure,
) -> Result<DecouplingReport> {
    let start = Instant::now();
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::InvalidParameter(format!("N = {n} must be at least 1")));
    }
    let r = pair.rect();
    let (i1, i2) = ((r.t0, r.t1), (r.s0, r.s1));
    let gap = interval_gap(i1, i2);
    if gap < MIN_INTERVAL_GAP {
        return Err(Error::InvalidParameter(format!("intervals are {gap} apart; need at least {MIN_INTERVAL_GAP}")));
    }
    let mut det_min = f64::INFINITY;
    for a in 0..=32 {
        for b in 0..=32 {
            let t = i1.0 + (i1.1 - i1.0) * a as f64 / 32.0;
            let s = i2.0 + (i2.1 - i2.0) * b as f64 / 32.0;
            det_min = det_min.min(lift_det(curve, t, s).abs());
        }
    }
    if !(det_min > 0.0) {
        return Err(Error::InvalidParameter("lift determinant vanishes on I1 x I2".into()));
    }
    let surface = curve_lift(curve.clone(), i1, i2)?;
    let one = Complex64::new(1.0, 0.0);
    let field = match (&h1, &h2) {
        (None, None) => AmplitudeField::constant(one, vec![*pair])?,
        _ => {
            let (a, b) = (h1.clone(), h2.clone());
            AmplitudeField::function(
                move |t, s| a.as_ref().map_or(one, |f| f(t)) * b.as_ref().map_or(one, |f| f(s)),
                vec![*pair],
            )?
        }
    };
    let lift = CapEvaluator::new(&surface, &field, pair.level)?;

    // Left side over the unweighted ball.
    let ball_lhs = measure.ball.indicator(4, n)?;
    let lhs_moments = sample_moments(&ball_lhs, &measure.sampler, 12.0, 1, |x, mags| {
        mags[0] = lift.total(&pad4(x))?.norm().sqrt();
        Ok(())
    })?;
    let lhs = lhs_moments.estimate(0);

    // Right side: per-interval L^6(w_{B_N}) norms.
    let level = cap_level_for(n).max(pair.level);
    let parts1 = dyadic_intervals(i1.0, i1.1, level);
    let parts2 = dyadic_intervals(i2.0, i2.1, level);
    let c1 = parts1.len();
    let quad = QuadratureSpec::default();
    let ev1 = IntervalEvaluator::new(curve.clone(), parts1, h1.clone(), quad)?;
    let ev2 = IntervalEvaluator::new(curve.clone(), parts2, h2.clone(), quad)?;
    let c2 = ev2.len();
    let ball = measure.ball.ball(4, n)?;
    let rhs_moments = sample_moments(&ball, &measure.sampler, 6.0, c1 + c2, |x, mags| {
        let x = pad4(x);
        let mut b1 = vec![Complex64::new(0.0, 0.0); c1];
        let mut b2 = vec![Complex64::new(0.0, 0.0); c2];
        ev1.eval(&x, &mut b1);
        ev2.eval(&x, &mut b2);
        for (m, v) in mags.iter_mut().zip(b1.iter().chain(&b2)) {
            *m = v.norm();
        }
        Ok(())
    })?;
    let per_cap: Vec<f64> = (0..c1 + c2).map(|c| rhs_moments.estimate(c).value).collect();
    let (v1, v2) = per_cap.split_at(c1);
    let rhs_lp = (lp_sum(v1, 6.0) * lp_sum(v2, 6.0)).sqrt();
    let rhs_l2 = (l2_sum(v1) * l2_sum(v2)).sqrt();
    let z = rhs_moments.mass;
    let rhs_se = rhs_moments.jackknife(|m| {
        let (a, b) = m.split_at(c1);
        (z * a.iter().sum::<f64>() * z * b.iter().sum::<f64>()).powf(1.0 / 12.0)
    });
    let combine = |rhs: f64, rhs_se: Option<f64>| {
        let rel_l = lhs.relative_stderr();
        let rel_r = rhs_se.map_or(0.0, |s| s / rhs);
        Some(lhs.value / rhs * (rel_l * rel_l + rel_r * rel_r).sqrt())
    };
    let parts = Parts {
        kind: "curve-bilinear",
        n,
        p: 6.0,
        cap_level: level,
        lhs: lhs.clone(),
        per_cap: per_cap.clone(),
        rhs_lp,
        rhs_l2,
        ratio_lp_se: combine(rhs_lp, rhs_se),
        ratio_l2_se: None,
    };
    let mut report = assemble(parts, measure, start);
    report.flags.retain(|f| !f.starts_with("Hoelder"));
    report.extra.insert("lift_det_min".into(), det_min);
    report.extra.insert("interval_gap".into(), gap);
    report.extra.insert("caps_i1".into(), c1 as f64);
    report.extra.insert(
        "identity_residual".into(),
        product_identity_residual(curve, pair, h1, h2, &ball_lhs, measure.sampler.seed)?,
    );
    report.runtime_ms = measure.elapsed(start);
    Ok(report)
}

/// Max relative gap between `prod_i int_{I_i} h_i e(x . Phi)` and the lift
/// extension of `h1 (x) h2`, both on a fine rule, at far-out points.
fn product_identity_residual(
    curve: &CurveEvaluator,
    pair: &DyadicSquare,
    h1: Option<Amp1>,
    h2: Option<Amp1>,
    ball: &BallSpec,
    seed: u64,
) -> Result<f64> {
    let r = pair.rect();
    let fine = QuadratureSpec { cycles_per_cell: 0.125, ..QuadratureSpec::default() };
    let surface = curve_lift(curve.clone(), (r.t0, r.t1), (r.s0, r.s1))?;
    // A function-valued amplitude keeps the lift on the two-dimensional
    // tensor rule instead of the factored one.
    let one = Complex64::new(1.0, 0.0);
    let (a, b) = (h1.clone(), h2.clone());
    let field = AmplitudeField::function(
        move |t, s| a.as_ref().map_or(one, |f| f(t)) * b.as_ref().map_or(one, |f| f(s)),
        vec![*pair],
    )?
    .with_quadrature(fine)?;
    let lift = CapEvaluator::new(&surface, &field, pair.level)?;
    let e1 = IntervalEvaluator::new(curve.clone(), vec![(r.t0, r.t1)], h1, fine)?;
    let e2 = IntervalEvaluator::new(curve.clone(), vec![(r.s0, r.s1)], h2, fine)?;
    let mut worst: f64 = 0.0;
    for x in gate_points(ball, seed)? {
        let prod = e1.total(&x) * e2.total(&x);
        let direct = lift.total(&x)?;
        let scale = prod.norm().max(direct.norm());
        if scale > 0.0 {
            worst = worst.max((prod - direct).norm() / scale);
        }
    }
    Ok(worst)
}

/// Density of the `x_2` marginal of the weight at offset `y` from the
/// center: `int_{R^3} w(sqrt(y^2 + |z|^2)) dz` over the truncated ball.
fn marginal(ball: &BallSpec, y: f64, gl: &GaussLegendre) -> f64 {
    let r = ball.radius;
    let eta = (y / r).abs();
    match ball.profile {
        Profile::Indicator => {
            if eta >= 1.0 {
                0.0
            } else {
                4.0 * PI / 3.0 * r.powi(3) * (1.0 - eta * eta).powf(1.5)
            }
        }
        Profile::Decay => {
            let t = ball.truncation;
            if eta >= t {
                return 0.0;
            }
            // rho = |x| / R = eta + u^2 removes the square-root endpoint.
            let e = ball.exponent;
            let f = |u: f64| {
                let rho = eta + u * u;
                let root = u * (2.0 * eta + u * u).sqrt();
                2.0 * u * root * rho * (1.0 + rho).powf(-e)
            };
            4.0 * PI * r.powi(3) * gl.integrate(f, 0.0, (t - eta).sqrt(), 64)
        }
    }
}

/// `(int |sum_n e(x_2 s_n)|^p w_B(x) dx)^{1/p}` for frequencies that are
/// multiples of `1 / period`, by periodizing the `x_2` marginal.
pub fn dirichlet_lp(freqs: &[f64], period: f64, p: f64, ball: &BallSpec) -> Result<f64> {
    if ball.dim() != 4 {
        return Err(Error::InvalidParameter("the flat-line oracle integrates over R^4".into()));
    }
    if !(period > 0.0) || !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!("period {period} and p {p} must be positive and finite")));
    }
    let top = freqs.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1.0);
    let table = PeriodizedWeight::new(ball, period, p, top);
    Ok(table.lp(freqs, ball.center[1], p))
}

/// Nodes on one period with the weight marginal summed over all periods.
struct PeriodizedWeight {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    omega: Vec<f64>,
}

impl PeriodizedWeight {
    fn new(ball: &BallSpec, period: f64, p: f64, top: f64) -> Self {
        let gl = GaussLegendre::new(8);
        let reach = ball.outer() * ball.radius;
        let cells = ((period * 2.0 * p * top).ceil() as usize).max(4);
        let (nodes, weights) = gl.composite(0.0, period, cells);
        // Beyond this offset the marginal is below 1e-30 of its peak.
        let cut = match ball.profile {
            Profile::Decay => ball.radius * ((1e30f64).powf(1.0 / (ball.exponent - 3.0)) - 1.0),
            Profile::Indicator => ball.radius,
        }
        .min(reach);
        let omega = nodes
            .iter()
            .map(|&u| {
                let kmin = ((-cut - u) / period).floor() as i64;
                let kmax = ((cut - u) / period).ceil() as i64;
                (kmin..=kmax).map(|k| marginal(ball, u + k as f64 * period, &gl)).sum()
            })
            .collect();
        Self { nodes, weights, omega }
    }

    fn lp(&self, freqs: &[f64], shift: f64, p: f64) -> f64 {
        let mut total = 0.0;
        for ((u, w), omega) in self.nodes.iter().zip(&self.weights).zip(&self.omega) {
            let d: Complex64 = freqs.iter().map(|s| e((shift + u) * s)).sum();
            total += w * d.norm().powf(p) * omega;
        }
        total.powf(1.0 / p)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlatLineOracle {
    pub lhs: f64,
    pub per_cap: Vec<f64>,
    pub ratio_lp: f64,
    pub ratio_l2: f64,
    pub extra: BTreeMap<String, f64>,
}

/// Flat-line ratios from one-dimensional quadrature of the Dirichlet kernel.
pub fn flat_line_oracle(n: f64, p: f64, ball: &BallSpec) -> Result<FlatLineOracle> {
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::InvalidParameter(format!("N = {n} must be at least 1")));
    }
    let m = n.sqrt().ceil() as usize;
    let period = m as f64;
    let freqs: Vec<f64> = (1..=m).map(|k| k as f64 / period).collect();
    let level = cap_level_for(n);
    let mut groups: BTreeMap<DyadicSquare, Vec<f64>> = BTreeMap::new();
    for &s in &freqs {
        let cap = DyadicSquare::containing(level, 0.0, s).expect("point in the unit square");
        groups.entry(cap).or_default().push(s);
    }
    if ball.dim() != 4 || !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!("need a 4-D ball and finite p >= 1, got p = {p}")));
    }
    // Every frequency lies in [0, 1], so one table serves all groups.
    let table = PeriodizedWeight::new(ball, period, p, 1.0);
    let shift = ball.center[1];
    let lhs = table.lp(&freqs, shift, p);
    let per_cap: Vec<f64> = groups.values().map(|g| table.lp(g, shift, p)).collect();
    let ratio_lp = lhs / lp_sum(&per_cap, p);
    let ratio_l2 = lhs / l2_sum(&per_cap);
    Ok(FlatLineOracle { lhs, per_cap, ratio_lp, ratio_l2, extra: BTreeMap::new() })
}
