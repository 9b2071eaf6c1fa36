//! Exponent bookkeeping for the induction on scales: `kappa_p`, the candidate
//! exponent, the iterated bound, the contradiction search, the quadratic
//! reduction recursion and the linear-from-bilinear bound.

use num::rational::BigRational;
use num::{BigInt, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BIG_O: f64 = 10.0;
pub const DEFAULT_MARGIN: f64 = 0.01;
/// Largest iteration depth `s` tried by [`contradiction_check`]; `2^-s` stays
/// a normal double.
pub const MAX_DEPTH: u32 = 1000;

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Exact rational for a finite double.
pub fn to_rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::NonFinite(format!("{x}")))
}

pub fn kappa_exact(p: &BigRational) -> BigRational {
    (p - rat(4)) / (p - rat(2))
}

/// `(p - 6)/(2p - 8) + 1/2 - 1/p`.
pub fn gamma_candidate_exact(p: &BigRational) -> BigRational {
    (p - rat(6)) / (rat(2) * p - rat(8)) + BigRational::new(BigInt::one(), BigInt::from(2)) - p.recip()
}

pub fn kappa(p: f64) -> f64 {
    (p - 4.0) / (p - 2.0)
}

pub fn gamma_candidate(p: f64) -> f64 {
    (p - 6.0) / (2.0 * p - 8.0) + 0.5 - 1.0 / p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentConstants {
    pub p: f64,
    pub kappa: f64,
    /// Only meaningful for `p > 6`.
    pub gamma_candidate: Option<f64>,
    pub flags: Vec<String>,
}

pub fn exponent_constants(p: f64) -> Result<ExponentConstants> {
    let pr = to_rational(p)?;
    if p == 2.0 {
        return Err(Error::DivisionGuard("kappa has a pole at p = 2".into()));
    }
    let mut flags = Vec::new();
    if p <= 4.0 {
        flags.push(format!("p = {p} <= 4: kappa is not in [0, 1)"));
    }
    let kappa = kappa_exact(&pr).to_f64().unwrap_or(f64::NAN);
    let gamma_candidate = if p > 6.0 {
        gamma_candidate_exact(&pr).to_f64()
    } else {
        flags.push(format!("p = {p} <= 6: no candidate exponent"));
        None
    };
    Ok(ExponentConstants { p, kappa, gamma_candidate, flags })
}

fn check_iteration_p(p: f64) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::NonFinite(format!("p = {p}")));
    }
    if p == 6.0 {
        return Err(Error::DivisionGuard(
            "2 kappa_p - 1 vanishes at p = 6; evaluate at p slightly above 6 and take the limit".into(),
        ));
    }
    if p < 6.0 {
        return Err(Error::InvalidParameter(format!("the iteration needs p > 6, got {p}")));
    }
    Ok(())
}

/// The iterated exponent `gamma_{p, eps, s}`, evaluated term by term.
pub fn gamma_iterate(p: f64, eps: f64, s: u32, gamma_in: f64, big_o: f64) -> Result<f64> {
    check_iteration_p(p)?;
    if s < 2 {
        return Err(Error::InvalidParameter(format!("s = {s} must be at least 2")));
    }
    let k = kappa(p);
    let a = 1.0 - k;
    let b = 2.0 * a;
    let h = (-(s as f64)).exp2();
    let si = s as i32;
    let g = gamma_in + eps;
    let middle = (1.0 - a.powi(si)) / k - 2.0 * h * (1.0 - b.powi(si)) / (2.0 * k - 1.0);
    let tail = k * h * (1.0 - 2.0 / p) * (1.0 - b.powi(si - 1)) / (2.0 * k - 1.0);
    Ok(h + k * g * middle + tail + big_o * a.powi(si))
}

/// `(gamma_{p,eps,s} - (gamma_in + eps)) / 2^-s` rewritten without the
/// cancelling `1 - x^s` differences, so it stays accurate for large `s`.
fn scaled_excess(p: f64, s: u32, g: f64, big_o: f64) -> f64 {
    let k = kappa(p);
    let b = 2.0 * (1.0 - k);
    let d = 2.0 * k - 1.0;
    let si = s as i32;
    2.0 * k * (gamma_candidate(p) - g) / d + b.powi(si) * (2.0 * k * g / d + big_o - g)
        - b.powi(si - 1) * k * (1.0 - 2.0 / p) / d
}

/// A model for the loss `eps(nu, p)` of the linear-from-bilinear step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum EpsModel {
    /// `eps = nu`.
    Linear,
    /// `eps = log(C_p) / (4 p log(1/nu))`.
    Log { c_p: f64 },
    /// `eps = c` for every `nu`.
    Constant { value: f64 },
}

impl Default for EpsModel {
    fn default() -> Self {
        Self::Log { c_p: 10.0 }
    }
}

impl EpsModel {
    /// `eps(nu)` given `log(1/nu)`.
    pub fn eps(&self, p: f64, log_inv_nu: f64) -> f64 {
        match *self {
            Self::Linear => (-log_inv_nu).exp(),
            Self::Log { c_p } => c_p.ln() / (4.0 * p * log_inv_nu),
            Self::Constant { value } => value,
        }
    }

    /// Some `log(1/nu) >= log 10` with `eps(nu) <= target`, if one exists.
    pub fn solve(&self, p: f64, target: f64) -> Option<f64> {
        let floor = 10f64.ln();
        let lin = match *self {
            Self::Linear => -target.ln(),
            Self::Log { c_p } if c_p <= 1.0 => floor,
            Self::Log { c_p } => c_p.ln() / (4.0 * p * target),
            Self::Constant { value } => {
                return (value <= target).then_some(floor);
            }
        };
        (lin.is_finite() && target > 0.0).then(|| lin.max(floor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub s: u32,
    /// `eps = 10^eps_log10`.
    pub eps_log10: i32,
    /// `nu = exp(-log_inv_nu)`.
    pub log_inv_nu: f64,
    pub eps_nu: f64,
    /// `(gamma_{p,eps,s} + eps(nu)) - gamma_hyp`, negative for a witness.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contradiction {
    pub p: f64,
    pub big_o: f64,
    pub margin: f64,
    pub gamma_hyp: f64,
    pub closes: bool,
    pub witness: Option<Witness>,
    /// Constraint that could not be met: `"eps-nu"` (the loss condition
    /// `1/2 - 1/p + eps(nu) < 1 - 4/p`) or `"iteration"`.
    pub binding: Option<String>,
}

/// Search `(s, eps, nu)` showing that `gamma_p = gamma_candidate + margin`
/// is inconsistent with the iteration: the iterated bound plus `eps(nu)` is
/// strictly smaller than the assumed exponent.
pub fn contradiction_check(p: f64, big_o: f64, model: &EpsModel, margin: f64) -> Result<Contradiction> {
    check_iteration_p(p)?;
    if !(margin > 0.0) {
        return Err(Error::InvalidParameter(format!("margin {margin} must be positive")));
    }
    let gamma_hyp = gamma_candidate(p) + margin;
    let loss_room = 0.5 - 3.0 / p;
    let mut result = Contradiction { p, big_o, margin, gamma_hyp, closes: false, witness: None, binding: None };
    let mut iteration_ok = false;
    for s in 2..=MAX_DEPTH {
        let h = (-(s as f64)).exp2();
        let base = scaled_excess(p, s, gamma_hyp, big_o);
        if base >= 0.0 {
            continue;
        }
        iteration_ok = true;
        // Spend a quarter of the room on eps and half on eps(nu).
        let room = -base * h;
        let k = kappa(p);
        let d = 2.0 * k - 1.0;
        let coeff = 1.0 + (1.0 - k).powi(s as i32) * (2.0 * k / d - 1.0);
        let eps_cap = room / (4.0 * coeff.max(1.0));
        let eps_log10 = eps_cap.log10().floor() as i32;
        let eps = 10f64.powi(eps_log10);
        let target = (room / 2.0).min(loss_room * 0.5);
        let Some(log_inv_nu) = model.solve(p, target) else { continue };
        let eps_nu = model.eps(p, log_inv_nu);
        if !(0.5 - 1.0 / p + eps_nu < 1.0 - 4.0 / p) {
            continue;
        }
        let excess = h * scaled_excess(p, s, gamma_hyp + eps, big_o) + eps;
        let gap = excess + eps_nu;
        if gap < 0.0 {
            result.closes = true;
            result.witness = Some(Witness { s, eps_log10, log_inv_nu, eps_nu, gap });
            return Ok(result);
        }
    }
    result.binding = Some(if iteration_ok { "eps-nu" } else { "iteration" }.into());
    Ok(result)
}

/// Running bounds `gamma_quad (1/3) sum_{j < d} (2/3)^j`, `d = 1..=depth`.
pub fn scale_recursion(gamma_quad: f64, depth: usize) -> Result<Vec<f64>> {
    if !(gamma_quad >= 0.0) || depth == 0 {
        return Err(Error::InvalidParameter("need gamma_quad >= 0 and depth >= 1".into()));
    }
    let mut out = Vec::with_capacity(depth);
    let mut term = gamma_quad / 3.0;
    let mut acc = 0.0;
    for _ in 0..depth {
        acc += term;
        out.push(acc);
        term *= 2.0 / 3.0;
    }
    Ok(out)
}

/// Exact partial sums of [`scale_recursion`].
pub fn scale_recursion_exact(gamma_quad: &BigRational, depth: usize) -> Vec<BigRational> {
    let ratio = BigRational::new(BigInt::from(2), BigInt::from(3));
    let mut term = gamma_quad / rat(3);
    let mut acc = BigRational::zero();
    let mut out = Vec::with_capacity(depth);
    for _ in 0..depth {
        acc += &term;
        out.push(acc.clone());
        term *= &ratio;
    }
    out
}

/// `C_nu N^eps sup_{1 <= M <= N} (M/N)^{1/p - 1/2} D_multi(M)` over a table.
pub fn bg_bound(table: &[(f64, f64)], n: f64, p: f64, eps_nu: f64, c_nu: f64) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::Empty("bilinear constant table".into()));
    }
    let sup = table
        .iter()
        .filter(|(m, _)| *m >= 1.0 && *m <= n)
        .map(|(m, d)| (m / n).powf(1.0 / p - 0.5) * d)
        .fold(f64::NEG_INFINITY, f64::max);
    if !sup.is_finite() {
        return Err(Error::Empty(format!("no table entries with 1 <= M <= {n}")));
    }
    Ok(c_nu * n.powf(eps_nu) * sup)
}

/// Unrolled one-step recursion
/// `D(N)^p <= C_p (K^{p-2} D(N/K^2)^p + K^{4p} D_multi(N)^p)` over `steps`
/// steps with `K^steps = N^{1/2}` and `D(1) = 1`. `d_multi` is interpolated
/// log-log from the table and held constant outside it.
pub fn bg_simulate(table: &[(f64, f64)], n: f64, p: f64, c_p: f64, steps: u32) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::Empty("bilinear constant table".into()));
    }
    if steps == 0 || !(n >= 1.0) {
        return Err(Error::InvalidParameter("need steps >= 1 and N >= 1".into()));
    }
    let mut pts: Vec<(f64, f64)> = table.iter().map(|(m, d)| (m.ln(), d.ln())).collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let interp = |m: f64| -> f64 {
        let x = m.ln();
        if x <= pts[0].0 {
            return pts[0].1.exp();
        }
        for w in pts.windows(2) {
            if x <= w[1].0 {
                let t = (x - w[0].0) / (w[1].0 - w[0].0);
                return (w[0].1 + t * (w[1].1 - w[0].1)).exp();
            }
        }
        pts[pts.len() - 1].1.exp()
    };
    let k = n.powf(0.5 / steps as f64);
    let step = c_p * k.powf(p - 2.0);
    let mut total = step.powi(steps as i32);
    let mut factor = 1.0;
    for j in 0..steps {
        total += c_p * k.powf(4.0 * p) * factor * interp(n / k.powi(2 * j as i32)).powf(p);
        factor *= step;
    }
    Ok(total.powf(1.0 / p))
}

/// `2/p = (1 - kappa)/2 + kappa/p`, exactly.
pub fn kappa_interpolation_holds(p: &BigRational) -> bool {
    let k = kappa_exact(p);
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    (rat(2) / p) == (BigRational::one() - &k) * half + &k / p
}

/// `2(1 - kappa) < 1`, exactly.
pub fn contraction_holds(p: &BigRational) -> bool {
    (rat(2) * (BigRational::one() - kappa_exact(p))) < BigRational::one()
}

/// `|x|` of a rational as a double, for reporting.
pub fn rational_abs_f64(x: &BigRational) -> f64 {
    x.abs().to_f64().unwrap_or(f64::NAN)
}
