//! Weighted `L^p` norms `(int |F|^p w_B)^{1/p}` over balls in `R^d` with
//! `w_B(x) = (1 + |x - c| / R)^{-E}`, truncated to `|x - c| <= T R`.
//!
//! Monte Carlo draws `x ~ w_B / Z` from a radial inverse-CDF table and a
//! uniform direction. Samples are produced in chunks of [`CHUNK`], each chunk
//! from its own ChaCha stream, and reduced in chunk order, so results depend
//! only on `(seed, budget)` and never on the thread count.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::GaussLegendre;

pub const CHUNK: usize = 4096;
/// Samples per jackknife group.
pub const GROUP: usize = 512;
pub const DEFAULT_EXPONENT: f64 = 100.0;
pub const DEFAULT_TRUNCATION: f64 = 4.0;
const TABLE_KNOTS: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Decay exponent `E` of the weight.
    pub exponent: f64,
    /// Truncation factor `T`: only `|x - c| <= T R` is integrated.
    pub truncation: f64,
    #[serde(default)]
    pub profile: Profile,
}

/// Radial profile of the weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `(1 + |x - c| / R)^{-E}` on `|x - c| <= T R`.
    #[default]
    Decay,
    /// Indicator of `|x - c| <= R`; `E` and `T` are ignored.
    Indicator,
}

impl BallSpec {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        let b = Self {
            center,
            radius,
            exponent: DEFAULT_EXPONENT,
            truncation: DEFAULT_TRUNCATION,
            profile: Profile::Decay,
        };
        b.validate()?;
        Ok(b)
    }

    /// Unweighted ball `1_{|x - c| <= R}`.
    pub fn indicator(center: Vec<f64>, radius: f64) -> Result<Self> {
        let b = Self { profile: Profile::Indicator, ..Self::new(center, radius)? };
        b.validate()?;
        Ok(b)
    }

    pub fn origin(dim: usize, radius: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], radius)
    }

    pub fn with_exponent(mut self, exponent: f64) -> Result<Self> {
        self.exponent = exponent;
        self.validate()?;
        Ok(self)
    }

    pub fn with_truncation(mut self, truncation: f64) -> Result<Self> {
        self.truncation = truncation;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("ball center", &self.center)?;
        ensure_finite("ball parameters", &[self.radius, self.exponent, self.truncation])?;
        if !(1..=4).contains(&self.dim()) {
            return Err(Error::InvalidParameter(format!("ball dimension {} not in 1..=4", self.dim())));
        }
        if !(self.radius > 0.0) || !(self.truncation > 0.0) {
            return Err(Error::InvalidParameter("ball radius and truncation must be positive".into()));
        }
        if self.profile == Profile::Decay && !(self.exponent > self.dim() as f64) {
            return Err(Error::InvalidParameter(format!(
                "weight exponent {} is not integrable in dimension {}",
                self.exponent,
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        let r: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
        match self.profile {
            Profile::Decay => (1.0 + r / self.radius).powf(-self.exponent),
            Profile::Indicator => f64::from(u8::from(r <= self.radius)),
        }
    }

    /// Integration radius in units of `R`.
    pub(crate) fn outer(&self) -> f64 {
        match self.profile {
            Profile::Decay => self.truncation,
            Profile::Indicator => 1.0,
        }
    }

    fn radial_density(&self, rho: f64) -> f64 {
        let jac = rho.powi(self.dim() as i32 - 1);
        match self.profile {
            Profile::Decay => jac * (1.0 + rho).powf(-self.exponent),
            Profile::Indicator => jac,
        }
    }

    /// Upper bound on the fraction of the untruncated mass beyond `T R`.
    pub fn tail_fraction(&self) -> f64 {
        if self.profile == Profile::Indicator {
            return 0.0;
        }
        let d = self.dim() as f64;
        let tail = (1.0 + self.truncation).powf(d - self.exponent) / (self.exponent - d);
        tail / radial_integral(self)
    }
}

/// Area of the unit sphere `S^{d-1}`.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        4 => 2.0 * PI * PI,
        _ => f64::NAN,
    }
}

fn radial_integral(ball: &BallSpec) -> f64 {
    GaussLegendre::new(8).integrate(|r| ball.radial_density(r), 0.0, ball.outer(), 4096)
}

/// `Z = int_{|x - c| <= T R} w_B`.
pub fn weight_mass(ball: &BallSpec) -> Result<f64> {
    ball.validate()?;
    Ok(sphere_area(ball.dim()) * ball.radius.powi(ball.dim() as i32) * radial_integral(ball))
}

/// Draws from the normalized weight on the truncated ball.
#[derive(Debug, Clone)]
pub struct WeightSampler {
    ball: BallSpec,
    cdf: Vec<f64>,
    dens: Vec<f64>,
    step: f64,
    mass: f64,
}

impl WeightSampler {
    pub fn new(ball: &BallSpec) -> Result<Self> {
        ball.validate()?;
        let step = ball.outer() / TABLE_KNOTS as f64;
        let gl = GaussLegendre::new(8);
        let mut cdf = Vec::with_capacity(TABLE_KNOTS + 1);
        let mut dens = Vec::with_capacity(TABLE_KNOTS + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        dens.push(ball.radial_density(0.0));
        for k in 0..TABLE_KNOTS {
            let a = k as f64 * step;
            acc += gl.integrate(|r| ball.radial_density(r), a, a + step, 1);
            cdf.push(acc);
            dens.push(ball.radial_density(a + step));
        }
        let mass = sphere_area(ball.dim()) * ball.radius.powi(ball.dim() as i32) * acc;
        Ok(Self { ball: ball.clone(), cdf, dens, step, mass })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn ball(&self) -> &BallSpec {
        &self.ball
    }

    /// Radius in units of `R`.
    fn radius<R: Rng>(&self, rng: &mut R) -> f64 {
        let total = *self.cdf.last().expect("table is non-empty");
        let u = rng.random::<f64>() * total;
        let k = self.cdf.partition_point(|&c| c <= u).clamp(1, TABLE_KNOTS) - 1;
        let r = u - self.cdf[k];
        // Linear density on the interval: m/2 tau^2 + f tau = r.
        let f = self.dens[k];
        let m = (self.dens[k + 1] - f) / self.step;
        let disc = (f * f + 2.0 * m * r).max(0.0);
        let denom = f + disc.sqrt();
        let tau = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        k as f64 * self.step + tau.clamp(0.0, self.step)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.ball.dim();
        let rho = self.radius(rng) * self.ball.radius;
        if d == 1 {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            out[0] = self.ball.center[0] + sign * rho;
            return;
        }
        let mut norm2 = 0.0;
        while norm2 == 0.0 {
            for v in out.iter_mut().take(d) {
                *v = rng.sample(StandardNormal);
                norm2 += *v * *v;
            }
        }
        let scale = rho / norm2.sqrt();
        for (v, c) in out.iter_mut().zip(&self.ball.center) {
            *v = c + *v * scale;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum Strategy {
    Mc,
    /// Fixed-spacing grid over the truncated ball.
    Lattice {
        spacing: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    #[serde(flatten)]
    pub strategy: Strategy,
    pub budget: usize,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn mc(budget: usize, seed: u64) -> Self {
        Self { strategy: Strategy::Mc, budget, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    /// Monte Carlo standard error (delta method); `None` for lattice sums.
    pub stderr: Option<f64>,
    /// Grid spacing of lattice sums.
    pub spacing: Option<f64>,
    pub samples: usize,
    pub strategy: String,
    pub seed: u64,
    pub p: f64,
    /// Set for `p = inf`, estimated by the sample maximum.
    pub approximate: bool,
}

impl NormEstimate {
    pub fn relative_stderr(&self) -> f64 {
        match self.stderr {
            Some(se) if self.value > 0.0 => se / self.value,
            _ => 0.0,
        }
    }
}

/// Per-component moments of `m_k(x)^p` under `x ~ w_B / Z`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub p: f64,
    pub mass: f64,
    pub samples: usize,
    pub strategy: Strategy,
    pub seed: u64,
    /// Mean of `m_k^p` (for `p = inf`: the sample maximum of `m_k`).
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Group sums of `m_k^p`, `group_sums[g * k + c]`, with group sizes.
    pub group_sums: Vec<f64>,
    pub group_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
struct ChunkAcc {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    max: Vec<f64>,
    group_sums: Vec<f64>,
    group_counts: Vec<usize>,
}

impl ChunkAcc {
    fn new(k: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; k],
            m2: vec![0.0; k],
            max: vec![0.0; k],
            group_sums: Vec::new(),
            group_counts: Vec::new(),
        }
    }

    /// Chan et al. pairwise merge, fixed order.
    fn merge(&mut self, other: ChunkAcc) {
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        if other.n > 0 {
            for c in 0..self.mean.len() {
                let delta = other.mean[c] - self.mean[c];
                self.mean[c] += delta * nb / n;
                self.m2[c] += other.m2[c] + delta * delta * na * nb / n;
                self.max[c] = self.max[c].max(other.max[c]);
            }
        }
        self.n += other.n;
        self.group_sums.extend(other.group_sums);
        self.group_counts.extend(other.group_counts);
    }
}

/// Sample `budget` points and accumulate `m_k(x)^p` for the `k` magnitudes
/// written by `f`. A non-finite magnitude poisons the run.
pub fn sample_moments<F>(ball: &BallSpec, spec: &SamplerSpec, p: f64, k: usize, f: F) -> Result<Moments>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must be at least 1")));
    }
    match spec.strategy {
        Strategy::Mc => mc_moments(ball, spec, p, k, f),
        Strategy::Lattice { spacing } => lattice_moments(ball, spec, spacing, p, k, f),
    }
}

fn accumulate(acc: &mut ChunkAcc, p: f64, mags: &[f64], group_sum: &mut [f64]) {
    acc.n += 1;
    let n = acc.n as f64;
    for (c, &m) in mags.iter().enumerate() {
        acc.max[c] = acc.max[c].max(m);
        let v = if p.is_infinite() { m } else { m.powf(p) };
        let delta = v - acc.mean[c];
        acc.mean[c] += delta / n;
        acc.m2[c] += delta * (v - acc.mean[c]);
        group_sum[c] += v;
    }
}

fn mc_moments<F>(ball: &BallSpec, spec: &SamplerSpec, p: f64, k: usize, f: F) -> Result<Moments>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    if spec.budget < 1000 {
        return Err(Error::InvalidParameter(format!("budget {} below the minimum of 1000", spec.budget)));
    }
    let sampler = WeightSampler::new(ball)?;
    let chunks = spec.budget.div_ceil(CHUNK);
    let dim = ball.dim();
    let results: Vec<Result<ChunkAcc>> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(ci as u64);
            let n = CHUNK.min(spec.budget - ci * CHUNK);
            let mut acc = ChunkAcc::new(k);
            let mut x = vec![0.0; dim];
            let mut mags = vec![0.0; k];
            let mut gsum = vec![0.0; k];
            let mut gcount = 0;
            for _ in 0..n {
                sampler.sample(&mut rng, &mut x);
                f(&x, &mut mags)?;
                if mags.iter().any(|m| !m.is_finite()) {
                    return Err(Error::Poisoned { x: x.clone() });
                }
                accumulate(&mut acc, p, &mags, &mut gsum);
                gcount += 1;
                if gcount == GROUP {
                    acc.group_sums.extend_from_slice(&gsum);
                    acc.group_counts.push(gcount);
                    gsum.iter_mut().for_each(|v| *v = 0.0);
                    gcount = 0;
                }
            }
            if gcount > 0 {
                acc.group_sums.extend_from_slice(&gsum);
                acc.group_counts.push(gcount);
            }
            Ok(acc)
        })
        .collect();
    let mut total = ChunkAcc::new(k);
    for r in results {
        total.merge(r?);
    }
    let n = total.n;
    let variance = total.m2.iter().map(|m| if n > 1 { m / (n - 1) as f64 } else { 0.0 }).collect();
    Ok(Moments {
        p,
        mass: sampler.mass(),
        samples: n,
        strategy: spec.strategy,
        seed: spec.seed,
        mean: if p.is_infinite() { total.max } else { total.mean },
        variance,
        group_sums: total.group_sums,
        group_counts: total.group_counts,
    })
}

fn lattice_moments<F>(ball: &BallSpec, spec: &SamplerSpec, spacing: f64, p: f64, k: usize, f: F) -> Result<Moments>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::InvalidParameter(format!("lattice spacing {spacing} must be positive")));
    }
    let dim = ball.dim();
    let reach = ball.outer() * ball.radius;
    let half = (reach / spacing).floor() as i64;
    let side = (2 * half + 1) as u128;
    let count = side.pow(dim as u32);
    if count > spec.budget as u128 * 16 {
        return Err(Error::InvalidParameter(format!("lattice of {count} points exceeds the budget {}", spec.budget)));
    }
    let mass = weight_mass(ball)?;
    let cell = spacing.powi(dim as i32);
    let rows: Vec<i64> = (-half..=half).collect();
    let results: Vec<Result<(Vec<f64>, Vec<f64>, usize)>> = rows
        .par_iter()
        .map(|&first| {
            let mut sums = vec![0.0; k];
            let mut max = vec![0.0f64; k];
            let mut used = 0;
            let mut idx = vec![-half; dim];
            idx[0] = first;
            let mut x = vec![0.0; dim];
            let mut mags = vec![0.0; k];
            loop {
                let r2: f64 = idx.iter().map(|&z| (z as f64 * spacing).powi(2)).sum();
                if r2 <= reach * reach {
                    for d in 0..dim {
                        x[d] = ball.center[d] + idx[d] as f64 * spacing;
                    }
                    f(&x, &mut mags)?;
                    if mags.iter().any(|m| !m.is_finite()) {
                        return Err(Error::Poisoned { x: x.clone() });
                    }
                    let w = ball.weight(&x) * cell;
                    for c in 0..k {
                        max[c] = max[c].max(mags[c]);
                        sums[c] += w * if p.is_infinite() { mags[c] } else { mags[c].powf(p) };
                    }
                    used += 1;
                }
                // odometer over the remaining coordinates
                let mut d = 1;
                while d < dim {
                    idx[d] += 1;
                    if idx[d] <= half {
                        break;
                    }
                    idx[d] = -half;
                    d += 1;
                }
                if d == dim {
                    break;
                }
            }
            Ok((sums, max, used))
        })
        .collect();
    let mut sums = vec![0.0; k];
    let mut max = vec![0.0f64; k];
    let mut used = 0;
    for r in results {
        let (s, m, u) = r?;
        for c in 0..k {
            sums[c] += s[c];
            max[c] = max[c].max(m[c]);
        }
        used += u;
    }
    Ok(Moments {
        p,
        mass,
        samples: used,
        strategy: spec.strategy,
        seed: spec.seed,
        mean: if p.is_infinite() { max } else { sums.iter().map(|s| s / mass).collect() },
        variance: vec![0.0; k],
        group_sums: Vec::new(),
        group_counts: Vec::new(),
    })
}

impl Moments {
    pub fn components(&self) -> usize {
        self.mean.len()
    }

    /// `(Z mean_k)^{1/p}` with its delta-method standard error.
    pub fn estimate(&self, c: usize) -> NormEstimate {
        let (value, stderr) = if self.p.is_infinite() {
            (self.mean[c], Some(0.0))
        } else {
            let value = (self.mass * self.mean[c]).powf(1.0 / self.p);
            let se_mean = (self.variance[c] / self.samples as f64).sqrt();
            let se = if self.mean[c] > 0.0 { value / self.p * se_mean / self.mean[c] } else { 0.0 };
            (value, Some(se))
        };
        let (stderr, spacing, strategy) = match self.strategy {
            Strategy::Mc => (stderr, None, "mc"),
            Strategy::Lattice { spacing } => (None, Some(spacing), "lattice"),
        };
        NormEstimate {
            value,
            stderr,
            spacing,
            samples: self.samples,
            strategy: strategy.into(),
            seed: self.seed,
            p: self.p,
            approximate: self.p.is_infinite(),
        }
    }

    /// Jackknife standard error over sample groups of a statistic of the
    /// component means. `None` with fewer than two groups.
    pub fn jackknife<S>(&self, stat: S) -> Option<f64>
    where
        S: Fn(&[f64]) -> f64,
    {
        let g = self.group_counts.len();
        if g < 2 {
            return None;
        }
        let k = self.components();
        let mut total = vec![0.0; k];
        for grp in 0..g {
            for c in 0..k {
                total[c] += self.group_sums[grp * k + c];
            }
        }
        let n: usize = self.group_counts.iter().sum();
        let mut thetas = Vec::with_capacity(g);
        let mut means = vec![0.0; k];
        for grp in 0..g {
            let m = (n - self.group_counts[grp]) as f64;
            for c in 0..k {
                means[c] = (total[c] - self.group_sums[grp * k + c]) / m;
            }
            thetas.push(stat(&means));
        }
        let avg = thetas.iter().sum::<f64>() / g as f64;
        let ss: f64 = thetas.iter().map(|t| (t - avg) * (t - avg)).sum();
        Some(((g - 1) as f64 / g as f64 * ss).sqrt())
    }
}

/// Weighted `L^p` norm of one function.
pub fn lp_norm<F>(f: F, ball: &BallSpec, p: f64, spec: &SamplerSpec) -> Result<NormEstimate>
where
    F: Fn(&[f64]) -> Result<Complex64> + Sync,
{
    let mut out = lp_norm_batch(
        |x: &[f64], vals: &mut [Complex64]| {
            vals[0] = f(x)?;
            Ok(())
        },
        1,
        ball,
        p,
        spec,
    )?;
    Ok(out.remove(0))
}

/// Norms of `count` functions evaluated together on one shared sample set.
pub fn lp_norm_batch<F>(f: F, count: usize, ball: &BallSpec, p: f64, spec: &SamplerSpec) -> Result<Vec<NormEstimate>>
where
    F: Fn(&[f64], &mut [Complex64]) -> Result<()> + Sync,
{
    let moments = sample_moments(ball, spec, p, count, |x, mags| {
        let mut vals = vec![Complex64::new(0.0, 0.0); count];
        f(x, &mut vals)?;
        for (m, v) in mags.iter_mut().zip(&vals) {
            *m = v.norm();
        }
        Ok(())
    })?;
    Ok((0..count).map(|c| moments.estimate(c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::e;

    /// `int_0^T rho^{d-1} (1 + rho)^{-E}` by binomial expansion of
    /// `(u - 1)^{d-1} u^{-E}` on `[1, 1 + T]`.
    fn radial_closed_form(d: usize, big_e: f64, t: f64) -> f64 {
        let n = d - 1;
        let mut acc = 0.0;
        for k in 0..=n {
            let binom = (0..k).fold(1.0, |b, i| b * (n - i) as f64 / (i + 1) as f64);
            let sign = if (n - k).is_multiple_of(2) { 1.0 } else { -1.0 };
            let ex = k as f64 - big_e + 1.0;
            acc += binom * sign * ((1.0 + t).powf(ex) - 1.0) / ex;
        }
        acc
    }

    #[test]
    fn mass_matches_closed_form() {
        for d in 1..=4 {
            let ball = BallSpec::origin(d, 1.0).unwrap();
            let z = weight_mass(&ball).unwrap();
            let exact = sphere_area(d) * radial_closed_form(d, 100.0, 4.0);
            assert!((z - exact).abs() < 1e-10 * exact, "d = {d}: {z} vs {exact}");
        }
    }

    #[test]
    fn mass_scales_with_dilation() {
        let z1 = weight_mass(&BallSpec::origin(4, 1.0).unwrap()).unwrap();
        let z7 = weight_mass(&BallSpec::origin(4, 7.0).unwrap()).unwrap();
        assert!((z7 - 7f64.powi(4) * z1).abs() < 1e-10 * z7);
    }

    #[test]
    fn mass_decreases_in_exponent() {
        let mut last = f64::INFINITY;
        for ex in [10.0, 20.0, 50.0, 100.0, 200.0] {
            let z = weight_mass(&BallSpec::origin(4, 1.0).unwrap().with_exponent(ex).unwrap()).unwrap();
            assert!(z < last);
            last = z;
        }
    }

    #[test]
    fn indicator_ball_volume_and_radius() {
        let ball = BallSpec::indicator(vec![0.0; 4], 2.0).unwrap();
        let vol = PI * PI / 2.0 * 16.0;
        assert!((weight_mass(&ball).unwrap() - vol).abs() < 1e-10 * vol);
        let sampler = WeightSampler::new(&ball).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = [0.0; 4];
        let mut mean_r4 = 0.0;
        for _ in 0..20000 {
            sampler.sample(&mut rng, &mut x);
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(r <= 2.0 + 1e-12);
            mean_r4 += (r / 2.0).powi(4) / 20000.0;
        }
        // (r/R)^4 is uniform on [0, 1].
        assert!((mean_r4 - 0.5).abs() < 0.01);
        assert_eq!(ball.weight(&[2.5, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn non_integrable_exponent_is_rejected() {
        assert!(BallSpec::origin(4, 1.0).unwrap().with_exponent(4.0).is_err());
    }

    #[test]
    fn constant_modulus_gives_mass_root() {
        let ball = BallSpec::origin(4, 3.0).unwrap();
        let z = weight_mass(&ball).unwrap();
        let est = lp_norm(|_| Ok(Complex64::new(1.0, 0.0)), &ball, 6.0, &SamplerSpec::mc(5000, 1)).unwrap();
        assert!((est.value - z.powf(1.0 / 6.0)).abs() < 1e-6 * est.value);
        assert_eq!(est.stderr, Some(0.0));
        let zero = lp_norm(|_| Ok(Complex64::new(0.0, 0.0)), &ball, 6.0, &SamplerSpec::mc(5000, 1)).unwrap();
        assert_eq!(zero.value, 0.0);
        let wave = lp_norm(|x| Ok(e(x[0] * 0.3 - x[2])), &ball, 6.0, &SamplerSpec::mc(5000, 1)).unwrap();
        assert!((wave.value - est.value).abs() < 1e-9 * est.value);
    }

    #[test]
    fn poisoned_samples_report_the_point() {
        let ball = BallSpec::origin(2, 1.0).unwrap();
        let r = lp_norm(
            |x| Ok(Complex64::new(if x[0] > 0.0 { f64::NAN } else { 1.0 }, 0.0)),
            &ball,
            2.0,
            &SamplerSpec::mc(2000, 3),
        );
        match r {
            Err(Error::Poisoned { x }) => assert!(x[0] > 0.0),
            other => panic!("expected poison, got {other:?}"),
        }
    }

    #[test]
    fn sampler_radii_follow_the_weight() {
        // Mean of rho under the radial law, against quadrature.
        let ball = BallSpec::origin(4, 1.0).unwrap();
        let s = WeightSampler::new(&ball).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut x = [0.0; 4];
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            s.sample(&mut rng, &mut x);
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            acc += r;
            acc2 += r * r;
        }
        let mean = acc / n as f64;
        let sd = (acc2 / n as f64 - mean * mean).sqrt();
        let gl = GaussLegendre::new(8);
        let num = gl.integrate(|r| r * ball.radial_density(r), 0.0, 4.0, 4096);
        let den = gl.integrate(|r| ball.radial_density(r), 0.0, 4.0, 4096);
        assert!((mean - num / den).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn lattice_reports_spacing() {
        let ball = BallSpec::origin(1, 2.0).unwrap();
        let spec = SamplerSpec { strategy: Strategy::Lattice { spacing: 0.0005 }, budget: 10_000, seed: 0 };
        let est = lp_norm(|_| Ok(Complex64::new(1.0, 0.0)), &ball, 2.0, &spec).unwrap();
        assert_eq!(est.stderr, None);
        assert_eq!(est.spacing, Some(0.0005));
        let z = weight_mass(&ball).unwrap();
        assert!((est.value - z.sqrt()).abs() < 1e-3 * est.value);
    }
}
