//! Amplitude fields and cap-by-cap evaluation of extension operators
//! `E g(x) = int g(t, s) e(x . Psi(t, s)) dt ds`.
//!
//! Continuous fields are integrated with composite Gauss-Legendre rules whose
//! cell count is chosen per evaluation point: every column and row of blocks
//! is split into a power-of-two number of cells so that the phase turns by at
//! most `cycles_per_cell` cycles across a cell. For quadratic surfaces the
//! phase splits as `a(t) + b(s) + gamma t s`, and for curve lifts as
//! `a(t) + b(s)`, which makes a block a product of column and row sums (or a
//! short matrix product when `gamma != 0`).

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::geometry::{CurveEvaluator, QuadCoeffs, SurfaceEvaluator, SurfaceKind};
use crate::grid::{CapPartition, DyadicSquare};
use crate::phase::e;
use crate::quadrature::GaussLegendre;

/// Per-evaluation quadrature policy for continuous fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss-Legendre points per cell and axis.
    pub order: usize,
    /// Maximum phase change (in cycles) across one cell.
    pub cycles_per_cell: f64,
    /// Minimum cells per block side.
    pub min_cells: u32,
    /// Hard cap on cells per block side.
    pub max_cells: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { order: 8, cycles_per_cell: 1.0, min_cells: 1, max_cells: 1 << 14 }
    }
}

impl QuadratureSpec {
    pub(crate) fn cells(&self, phase_change: f64) -> usize {
        let need = (phase_change / self.cycles_per_cell).ceil();
        let need = if need.is_finite() && need > 1.0 { need as u64 } else { 1 };
        need.next_power_of_two().clamp(self.min_cells as u64, self.max_cells as u64) as usize
    }
}

pub type AmpFn = Arc<dyn Fn(f64, f64) -> Complex64 + Send + Sync>;

/// The amplitude `g` of a continuous field, in the coordinates of the
/// original (unrescaled) parameter square.
#[derive(Clone)]
pub enum Amplitude {
    Constant(Complex64),
    /// Unimodular, constant on each level-`level` dyadic square with an
    /// independent uniform phase drawn from `seed`.
    CapPhases {
        level: u32,
        seed: u64,
    },
    Function(AmpFn),
}

impl fmt::Debug for Amplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::CapPhases { level, seed } => write!(f, "CapPhases {{ level: {level}, seed: {seed} }}"),
            Self::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// The random phase attached to one square.
pub fn cap_phase(seed: u64, sq: &DyadicSquare) -> Complex64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((sq.level as u64) << 58) ^ ((sq.i as u64) << 29) ^ sq.j as u64);
    e(rng.random::<f64>())
}

impl Amplitude {
    pub fn at(&self, t: f64, s: f64) -> Complex64 {
        match self {
            Self::Constant(c) => *c,
            Self::CapPhases { level, seed } => match DyadicSquare::containing(*level, t, s) {
                Some(sq) => cap_phase(*seed, &sq),
                None => Complex64::new(0.0, 0.0),
            },
            Self::Function(f) => f(t, s),
        }
    }

    /// Value if `g` is constant on the square (original coordinates).
    fn on_square(&self, sq: &DyadicSquare) -> Option<Complex64> {
        match self {
            Self::Constant(c) => Some(*c),
            Self::CapPhases { level, seed } => sq.ancestor(*level).map(|a| cap_phase(*seed, &a)),
            Self::Function(_) => None,
        }
    }
}

/// A point mass `a` at `(t, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomicPoint {
    pub t: f64,
    pub s: f64,
    pub a: Complex64,
}

#[derive(Debug, Clone)]
pub enum FieldMode {
    /// `window` is the square of the original parameter domain that this
    /// field's unit square corresponds to (the unit square unless rescaled).
    Continuous {
        amplitude: Amplitude,
        quad: QuadratureSpec,
        window: DyadicSquare,
    },
    Atomic {
        points: Vec<AtomicPoint>,
    },
}

/// The input `g`: a continuous amplitude on a union of dyadic squares or a
/// finite list of point masses.
#[derive(Debug, Clone)]
pub struct AmplitudeField {
    pub mode: FieldMode,
    /// Disjoint support squares (continuous); the unit square for atomic
    /// fields.
    pub support: Vec<DyadicSquare>,
}

fn validate_support(support: &mut Vec<DyadicSquare>) -> Result<()> {
    support.sort();
    support.dedup();
    for (k, a) in support.iter().enumerate() {
        for b in &support[k + 1..] {
            if a.intersect(b).is_some() {
                return Err(Error::InvalidParameter(format!("support squares {a:?} and {b:?} overlap")));
            }
        }
    }
    Ok(())
}

impl AmplitudeField {
    pub fn continuous(amplitude: Amplitude, mut support: Vec<DyadicSquare>) -> Result<Self> {
        validate_support(&mut support)?;
        Ok(Self {
            mode: FieldMode::Continuous { amplitude, quad: QuadratureSpec::default(), window: DyadicSquare::unit() },
            support,
        })
    }

    /// `g = 1` on the unit square.
    pub fn indicator() -> Self {
        Self::constant(Complex64::new(1.0, 0.0), vec![DyadicSquare::unit()]).expect("unit support is valid")
    }

    pub fn constant(value: Complex64, support: Vec<DyadicSquare>) -> Result<Self> {
        ensure_finite("amplitude", &[value.re, value.im])?;
        Self::continuous(Amplitude::Constant(value), support)
    }

    pub fn random_phase(level: u32, seed: u64, support: Vec<DyadicSquare>) -> Result<Self> {
        Self::continuous(Amplitude::CapPhases { level, seed }, support)
    }

    pub fn function<F>(f: F, support: Vec<DyadicSquare>) -> Result<Self>
    where
        F: Fn(f64, f64) -> Complex64 + Send + Sync + 'static,
    {
        Self::continuous(Amplitude::Function(Arc::new(f)), support)
    }

    pub fn atomic(points: Vec<AtomicPoint>) -> Result<Self> {
        for p in &points {
            ensure_finite("atomic point", &[p.t, p.s, p.a.re, p.a.im])?;
            if !(0.0..=1.0).contains(&p.t) || !(0.0..=1.0).contains(&p.s) {
                return Err(Error::SupportViolation(format!("atomic point ({}, {}) outside [0,1]^2", p.t, p.s)));
            }
        }
        Ok(Self { mode: FieldMode::Atomic { points }, support: vec![DyadicSquare::unit()] })
    }

    /// Unit masses at `(0, n / M)`, `n = 1..M`, `M = ceil(sqrt(N))`.
    pub fn flat_line(n: f64) -> Result<Self> {
        if !(n >= 1.0) || !n.is_finite() {
            return Err(Error::InvalidParameter(format!("flat-line scale N = {n} must be at least 1")));
        }
        let m = n.sqrt().ceil() as usize;
        let one = Complex64::new(1.0, 0.0);
        Self::atomic((1..=m).map(|k| AtomicPoint { t: 0.0, s: k as f64 / m as f64, a: one }).collect())
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.mode, FieldMode::Atomic { .. })
    }

    pub fn quadrature(&self) -> Option<&QuadratureSpec> {
        match &self.mode {
            FieldMode::Continuous { quad, .. } => Some(quad),
            FieldMode::Atomic { .. } => None,
        }
    }

    pub fn with_quadrature(mut self, spec: QuadratureSpec) -> Result<Self> {
        if spec.order == 0 || !(spec.cycles_per_cell > 0.0) || spec.min_cells == 0 || spec.max_cells < spec.min_cells {
            return Err(Error::InvalidParameter(format!("bad quadrature spec {spec:?}")));
        }
        match &mut self.mode {
            FieldMode::Continuous { quad, .. } => *quad = spec,
            FieldMode::Atomic { .. } => return Err(Error::InvalidParameter("atomic fields have no quadrature".into())),
        }
        Ok(self)
    }

    /// Amplitude at a point of this field's unit square.
    pub fn amplitude_at(&self, t: f64, s: f64) -> Complex64 {
        match &self.mode {
            FieldMode::Continuous { amplitude, window, .. } => {
                if !self.support.iter().any(|sq| sq.contains(t, s)) {
                    return Complex64::new(0.0, 0.0);
                }
                let r = window.rect();
                amplitude.at(r.t0 + window.side() * t, r.s0 + window.side() * s)
            }
            FieldMode::Atomic { .. } => Complex64::new(0.0, 0.0),
        }
    }

    /// Explicit tensor rule with `cells` Gauss-Legendre cells per side of
    /// every support square: `(t, s, weight, g)`.
    pub fn quadrature_nodes(&self, cells: usize) -> Result<Vec<(f64, f64, f64, Complex64)>> {
        let FieldMode::Continuous { quad, .. } = &self.mode else {
            return Err(Error::InvalidParameter("atomic fields have no quadrature nodes".into()));
        };
        let gl = GaussLegendre::new(quad.order);
        let mut out = Vec::new();
        for sq in &self.support {
            let r = sq.rect();
            let (ts, wt) = gl.composite(r.t0, r.width(), cells);
            let (ss, ws) = gl.composite(r.s0, r.height(), cells);
            for (t, a) in ts.iter().zip(&wt) {
                for (s, b) in ss.iter().zip(&ws) {
                    out.push((*t, *s, a * b, self.amplitude_at(*t, *s)));
                }
            }
        }
        Ok(out)
    }

    /// `int g` (continuous) or `sum a_n` (atomic).
    pub fn mass(&self) -> Complex64 {
        match &self.mode {
            FieldMode::Atomic { points } => points.iter().map(|p| p.a).sum(),
            FieldMode::Continuous { .. } => {
                self.quadrature_nodes(1).map(|n| n.iter().map(|(_, _, w, g)| g * w).sum()).unwrap_or_default()
            }
        }
    }

    /// Total area of the support squares.
    pub fn support_area(&self) -> f64 {
        self.support.iter().map(|s| s.rect().area()).sum()
    }

    /// Finest level among the support squares.
    pub fn support_level(&self) -> u32 {
        self.support.iter().map(|s| s.level).max().unwrap_or(0)
    }
}

/// Restriction of a field to a cap, half-open convention.
pub fn cap_restrict(field: &AmplitudeField, cap: &DyadicSquare) -> AmplitudeField {
    match &field.mode {
        FieldMode::Atomic { points } => AmplitudeField {
            mode: FieldMode::Atomic { points: points.iter().filter(|p| cap.contains(p.t, p.s)).copied().collect() },
            support: field.support.clone(),
        },
        FieldMode::Continuous { .. } => AmplitudeField {
            mode: field.mode.clone(),
            support: field.support.iter().filter_map(|sq| sq.intersect(cap)).collect(),
        },
    }
}

/// Same field with `factor` times finer quadrature.
pub fn quadrature_refine(field: &AmplitudeField, factor: u32) -> Result<AmplitudeField> {
    let Some(q) = field.quadrature() else {
        return Err(Error::InvalidParameter("quadrature refinement needs a continuous field".into()));
    };
    if factor == 0 {
        return Err(Error::InvalidParameter("refinement factor must be positive".into()));
    }
    let spec = QuadratureSpec {
        cycles_per_cell: q.cycles_per_cell / factor as f64,
        min_cells: q.min_cells.saturating_mul(factor),
        max_cells: q.max_cells.saturating_mul(factor),
        ..*q
    };
    field.clone().with_quadrature(spec)
}

/// Max relative change of `E g(x)` under twofold refinement at the given
/// points.
pub fn quadrature_gate(surface: &SurfaceEvaluator, field: &AmplitudeField, points: &[[f64; 4]]) -> Result<f64> {
    let base = CapEvaluator::new(surface, field, field.support_level())?;
    let fine = CapEvaluator::new(surface, &quadrature_refine(field, 2)?, field.support_level())?;
    let mut worst: f64 = 0.0;
    for x in points {
        let (a, b) = (base.total(x)?, fine.total(x)?);
        let scale = a.norm().max(b.norm());
        if scale > 0.0 {
            worst = worst.max((a - b).norm() / scale);
        }
    }
    Ok(worst)
}

/// `E g(x)` for the whole field.
pub fn extension_eval(surface: &SurfaceEvaluator, field: &AmplitudeField, x: &[f64; 4]) -> Result<Complex64> {
    CapEvaluator::new(surface, field, 0)?.total(x)
}

#[derive(Debug, Clone, Copy)]
struct Band {
    start: f64,
    /// Bound on `|d/dt Psi|` over the band (lift and generic paths).
    slope: f64,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    col: usize,
    row: usize,
    cap: usize,
    amp: Option<Complex64>,
}

#[derive(Debug, Clone)]
enum Path {
    Quadratic(QuadCoeffs),
    Lift(CurveEvaluator),
    Generic,
}

#[derive(Debug, Clone)]
struct Plan {
    gl: GaussLegendre,
    quad: QuadratureSpec,
    side: f64,
    cols: Vec<Band>,
    rows: Vec<Band>,
    blocks: Vec<Block>,
    path: Path,
    amplitude: Amplitude,
    window: DyadicSquare,
    /// Extent of the block columns and rows.
    t_range: (f64, f64),
    s_range: (f64, f64),
}

#[derive(Debug, Clone)]
enum Kernel {
    Atomic { psi: Vec<[f64; 4]>, amp: Vec<Complex64>, cap: Vec<usize> },
    Continuous(Box<Plan>),
}

/// Evaluates `E_Delta g(x)` for every cap `Delta` of a partition at once.
#[derive(Debug, Clone)]
pub struct CapEvaluator {
    surface: SurfaceEvaluator,
    partition: CapPartition,
    kernel: Kernel,
}

fn slope_bound(surface: &SurfaceEvaluator, lo: f64, hi: f64, t_dir: bool) -> f64 {
    let mut best: f64 = 0.0;
    for k in 0..=16 {
        let u = lo + (hi - lo) * k as f64 / 16.0;
        for l in 0..=8 {
            let v = l as f64 / 8.0;
            let d = if t_dir { surface.d_t(u, v) } else { surface.d_s(v, u) };
            best = best.max(d.iter().map(|c| c * c).sum::<f64>().sqrt());
        }
    }
    best * 1.25
}

impl CapEvaluator {
    /// Evaluator for the caps of level `cap_level` covering the field.
    pub fn new(surface: &SurfaceEvaluator, field: &AmplitudeField, cap_level: u32) -> Result<Self> {
        match &field.mode {
            FieldMode::Atomic { points } => {
                let mut caps: Vec<DyadicSquare> =
                    points.iter().filter_map(|p| DyadicSquare::containing(cap_level, p.t, p.s)).collect();
                caps.sort();
                caps.dedup();
                let partition = CapPartition { level: cap_level, caps };
                let cap =
                    points.iter().map(|p| partition.index_of_point(p.t, p.s).expect("point lies in a cap")).collect();
                let psi = points.iter().map(|p| surface.value(p.t, p.s)).collect();
                let amp = points.iter().map(|p| p.a).collect();
                Ok(Self { surface: surface.clone(), partition, kernel: Kernel::Atomic { psi, amp, cap } })
            }
            FieldMode::Continuous { amplitude, quad, window } => {
                let mut level = cap_level.max(field.support_level());
                if let Amplitude::CapPhases { level: al, .. } = amplitude {
                    level = level.max(al.saturating_sub(window.level));
                }
                let partition = CapPartition::covering(&field.support, cap_level);
                let squares: Vec<DyadicSquare> = field.support.iter().flat_map(|sq| sq.descendants(level)).collect();
                let side = (-(level as f64)).exp2();
                let mut col_idx: Vec<u32> = squares.iter().map(|s| s.i).collect();
                let mut row_idx: Vec<u32> = squares.iter().map(|s| s.j).collect();
                col_idx.sort_unstable();
                col_idx.dedup();
                row_idx.sort_unstable();
                row_idx.dedup();
                let to_orig = |sq: &DyadicSquare| DyadicSquare {
                    level: window.level + sq.level,
                    i: (window.i << sq.level) + sq.i,
                    j: (window.j << sq.level) + sq.j,
                };
                let blocks: Vec<Block> = squares
                    .iter()
                    .map(|sq| Block {
                        col: col_idx.binary_search(&sq.i).expect("column present"),
                        row: row_idx.binary_search(&sq.j).expect("row present"),
                        cap: partition.index_of(sq).expect("block lies in a cap"),
                        amp: amplitude.on_square(&to_orig(sq)),
                    })
                    .collect();
                let constant_amp = blocks.iter().all(|b| b.amp.is_some());
                let path = match (&surface.kind, constant_amp) {
                    (SurfaceKind::Quadratic(a), true) => Path::Quadratic(*a),
                    (SurfaceKind::CurveLift { curve, .. }, true) => Path::Lift(curve.clone()),
                    _ => Path::Generic,
                };
                let band = |idx: u32, t_dir: bool| {
                    let start = idx as f64 * side;
                    let slope = match &path {
                        Path::Quadratic(_) => 0.0,
                        _ => slope_bound(surface, start, start + side, t_dir),
                    };
                    Band { start, slope }
                };
                let cols: Vec<Band> = col_idx.iter().map(|&i| band(i, true)).collect();
                let rows: Vec<Band> = row_idx.iter().map(|&j| band(j, false)).collect();
                let extent = |bands: &[Band]| {
                    let lo = bands.iter().map(|b| b.start).fold(f64::INFINITY, f64::min);
                    let hi = bands.iter().map(|b| b.start + side).fold(f64::NEG_INFINITY, f64::max);
                    (lo, hi)
                };
                let t_range = extent(&cols);
                let s_range = extent(&rows);
                let plan = Plan {
                    gl: GaussLegendre::new(quad.order),
                    quad: *quad,
                    side,
                    cols,
                    rows,
                    blocks,
                    path,
                    amplitude: amplitude.clone(),
                    window: *window,
                    t_range,
                    s_range,
                };
                Ok(Self { surface: surface.clone(), partition, kernel: Kernel::Continuous(Box::new(plan)) })
            }
        }
    }

    pub fn partition(&self) -> &CapPartition {
        &self.partition
    }

    pub fn caps(&self) -> usize {
        self.partition.len()
    }

    /// Per-cap values into `out` (length [`caps`](Self::caps)).
    pub fn eval(&self, x: &[f64; 4], out: &mut [Complex64]) -> Result<()> {
        ensure_finite("evaluation point", x)?;
        debug_assert_eq!(out.len(), self.partition.len());
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        match &self.kernel {
            Kernel::Atomic { psi, amp, cap } => {
                for ((p, a), &c) in psi.iter().zip(amp).zip(cap) {
                    let z = x[0] * p[0] + x[1] * p[1] + x[2] * p[2] + x[3] * p[3];
                    out[c] += a * e(z);
                }
            }
            Kernel::Continuous(plan) => plan.eval(&self.surface, x, out),
        }
        Ok(())
    }

    pub fn total(&self, x: &[f64; 4]) -> Result<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.partition.len()];
        self.eval(x, &mut buf)?;
        Ok(buf.iter().sum())
    }
}

/// Composite nodes on one band.
fn band_nodes(gl: &GaussLegendre, start: f64, side: f64, cells: usize, nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
    nodes.clear();
    weights.clear();
    let h = side / cells as f64;
    for c in 0..cells {
        let left = start + h * c as f64;
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            nodes.push(left + h * x);
            weights.push(h * w);
        }
    }
}

impl Plan {
    fn eval(&self, surface: &SurfaceEvaluator, x: &[f64; 4], out: &mut [Complex64]) {
        match &self.path {
            Path::Quadratic(a) => self.eval_quadratic(a, x, out),
            Path::Lift(curve) => self.eval_lift(curve, x, out),
            Path::Generic => self.eval_generic(surface, x, out),
        }
    }

    fn eval_quadratic(&self, a: &QuadCoeffs, x: &[f64; 4], out: &mut [Complex64]) {
        let c = &a.0;
        let alpha = x[2] * c[0] + x[3] * c[3];
        let beta = x[2] * c[2] + x[3] * c[5];
        let gamma = 2.0 * (x[2] * c[1] + x[3] * c[4]);
        let h = self.side;
        // The phase derivative along a band is affine in (t, s): its maximum
        // modulus over band x extent sits at a corner.
        let grad = |lin: f64, quad: f64, start: f64, other: (f64, f64)| {
            let mut m: f64 = 0.0;
            for u in [start, start + h] {
                for v in [other.0, other.1] {
                    m = m.max((lin + 2.0 * quad * u + gamma * v).abs());
                }
            }
            m
        };
        let (mut nodes, mut weights) = (Vec::new(), Vec::new());
        // Column and row tables: nodes and weighted phases.
        let mut col_t = Vec::with_capacity(self.cols.len());
        let mut col_v = Vec::with_capacity(self.cols.len());
        for b in &self.cols {
            let q = self.quad.cells(grad(x[0], alpha, b.start, self.s_range) * h);
            band_nodes(&self.gl, b.start, h, q, &mut nodes, &mut weights);
            col_v.push(nodes.iter().zip(&weights).map(|(&t, &w)| w * e(x[0] * t + alpha * t * t)).collect::<Vec<_>>());
            col_t.push(nodes.clone());
        }
        let mut row_q = Vec::with_capacity(self.rows.len());
        let mut row_v = Vec::with_capacity(self.rows.len());
        for b in &self.rows {
            let q = self.quad.cells(grad(x[1], beta, b.start, self.t_range) * h);
            band_nodes(&self.gl, b.start, h, q, &mut nodes, &mut weights);
            row_v.push(nodes.iter().zip(&weights).map(|(&s, &w)| w * e(x[1] * s + beta * s * s)).collect::<Vec<_>>());
            row_q.push(q);
        }
        if gamma == 0.0 {
            let col_sum: Vec<Complex64> = col_v.iter().map(|v| v.iter().sum()).collect();
            let row_sum: Vec<Complex64> = row_v.iter().map(|v| v.iter().sum()).collect();
            for blk in &self.blocks {
                out[blk.cap] += blk.amp.unwrap_or_default() * col_sum[blk.col] * row_sum[blk.row];
            }
            return;
        }
        // gamma t s = gamma t S_row + gamma t o_j with row offsets o_j shared by
        // every row with the same cell count.
        let mut offsets: Vec<(usize, Vec<f64>)> = Vec::new();
        for &q in &row_q {
            if !offsets.iter().any(|(k, _)| *k == q) {
                band_nodes(&self.gl, 0.0, h, q, &mut nodes, &mut weights);
                offsets.push((q, nodes.clone()));
            }
        }
        let mut by_col: Vec<Vec<&Block>> = vec![Vec::new(); self.cols.len()];
        for blk in &self.blocks {
            by_col[blk.col].push(blk);
        }
        let mut twiddle: Vec<Vec<Complex64>> = Vec::new();
        for (ci, blks) in by_col.iter().enumerate() {
            if blks.is_empty() {
                continue;
            }
            let ts = &col_t[ci];
            let ev = &col_v[ci];
            for (q, offs) in &offsets {
                if !blks.iter().any(|b| row_q[b.row] == *q) {
                    continue;
                }
                twiddle.clear();
                for &t in ts {
                    twiddle.push(offs.iter().map(|&o| e(gamma * t * o)).collect());
                }
                for blk in blks.iter().filter(|b| row_q[b.row] == *q) {
                    let rv = &row_v[blk.row];
                    let srow = self.rows[blk.row].start;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (k, &t) in ts.iter().enumerate() {
                        let inner: Complex64 = rv.iter().zip(&twiddle[k]).map(|(a, b)| a * b).sum();
                        acc += ev[k] * e(gamma * t * srow) * inner;
                    }
                    out[blk.cap] += blk.amp.unwrap_or_default() * acc;
                }
            }
        }
    }

    fn eval_lift(&self, curve: &CurveEvaluator, x: &[f64; 4], out: &mut [Complex64]) {
        let h = self.side;
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (mut nodes, mut weights) = (Vec::new(), Vec::new());
        let mut sums = |bands: &[Band]| -> Vec<Complex64> {
            bands
                .iter()
                .map(|b| {
                    band_nodes(&self.gl, b.start, h, self.quad.cells(xn * b.slope * h), &mut nodes, &mut weights);
                    nodes
                        .iter()
                        .zip(&weights)
                        .map(|(&t, &w)| {
                            let p = curve.value(t);
                            w * e(x[0] * p[0] + x[1] * p[1] + x[2] * p[2] + x[3] * p[3])
                        })
                        .sum()
                })
                .collect()
        };
        let col_sum = sums(&self.cols);
        let row_sum = sums(&self.rows);
        for blk in &self.blocks {
            out[blk.cap] += blk.amp.unwrap_or_default() * col_sum[blk.col] * row_sum[blk.row];
        }
    }

    fn eval_generic(&self, surface: &SurfaceEvaluator, x: &[f64; 4], out: &mut [Complex64]) {
        let h = self.side;
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (mut tn, mut tw, mut sn, mut sw) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let orig = self.window.rect();
        let scale = self.window.side();
        for blk in &self.blocks {
            let (cb, rb) = (self.cols[blk.col], self.rows[blk.row]);
            band_nodes(&self.gl, cb.start, h, self.quad.cells(xn * cb.slope * h), &mut tn, &mut tw);
            band_nodes(&self.gl, rb.start, h, self.quad.cells(xn * rb.slope * h), &mut sn, &mut sw);
            let mut acc = Complex64::new(0.0, 0.0);
            for (&t, &wt) in tn.iter().zip(&tw) {
                for (&s, &ws) in sn.iter().zip(&sw) {
                    let p = surface.value(t, s);
                    let g = match blk.amp {
                        Some(g) => g,
                        None => self.amplitude.at(orig.t0 + scale * t, orig.s0 + scale * s),
                    };
                    acc += g * (wt * ws) * e(x[0] * p[0] + x[1] * p[1] + x[2] * p[2] + x[3] * p[3]);
                }
            }
            out[blk.cap] += acc;
        }
    }
}
