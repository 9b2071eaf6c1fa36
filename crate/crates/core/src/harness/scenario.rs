//! Canonical scenarios, their predicted scaling exponents, and multi-`N`
//! scaling studies with least-squares slope fits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::curves::{curve_bilinear, parabola_reference};
use super::{measure_bilinear, measure_linear, measure_square_function, measure_trivial, DecouplingReport, Measure};
use crate::error::{Error, Result};
use crate::fields::AmplitudeField;
use crate::geometry::{quad_surface, CurveEvaluator, QuadCoeffs, SurfaceEvaluator};
use crate::grid::{cap_level_for, DyadicSquare};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Indicator,
    FlatLine,
    Strip,
    RandomPhase,
    BilinearPair,
    CurveBilinear,
    #[serde(rename = "parabola-2d")]
    Parabola2d,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        Self::Indicator,
        Self::FlatLine,
        Self::Strip,
        Self::RandomPhase,
        Self::BilinearPair,
        Self::CurveBilinear,
        Self::Parabola2d,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Indicator => "indicator",
            Self::FlatLine => "flat-line",
            Self::Strip => "strip",
            Self::RandomPhase => "random-phase",
            Self::BilinearPair => "bilinear-pair",
            Self::CurveBilinear => "curve-bilinear",
            Self::Parabola2d => "parabola-2d",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

/// Which ratio a prediction or fit refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RatioLp,
    RatioL2,
    /// Trivial-decoupling ratio without the `K^{1-2/p}` normalization.
    RawRatio,
}

/// Where a predicted exponent comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    /// Lower bound from an explicit extremal example.
    SharpExample,
    /// Asymptotics of an explicit one-dimensional oracle.
    Oracle,
    /// Upper bound known to be attained up to `N^eps`.
    Theorem,
    /// Square-root cancellation heuristic.
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub exponent: f64,
    pub metric: Metric,
    pub basis: Basis,
}

/// Predicted slope of `log(metric)` against `log N`.
pub fn predicted_exponent(kind: ScenarioKind, p: f64) -> Prediction {
    let (exponent, metric, basis) = match kind {
        ScenarioKind::Indicator => {
            let e = if p <= 6.0 { 0.5 - 1.0 / p } else { 1.0 - 4.0 / p };
            (e, Metric::RatioLp, Basis::SharpExample)
        }
        ScenarioKind::FlatLine => (0.25 - 0.5 / p, Metric::RatioL2, Basis::Oracle),
        ScenarioKind::Strip => (1.0 - 2.0 / p, Metric::RawRatio, Basis::SharpExample),
        ScenarioKind::RandomPhase => (0.5 - 1.0 / p, Metric::RatioLp, Basis::Heuristic),
        ScenarioKind::BilinearPair => (0.0, Metric::RatioLp, Basis::Theorem),
        ScenarioKind::CurveBilinear => (-1.0 / 6.0, Metric::RatioLp, Basis::Theorem),
        ScenarioKind::Parabola2d => (0.0, Metric::RatioL2, Basis::Theorem),
    };
    Prediction { exponent, metric, basis }
}

fn default_n() -> Vec<f64> {
    vec![16.0, 64.0, 256.0]
}

fn default_p() -> Vec<f64> {
    vec![6.0]
}

/// A scenario and the grid of `(N, p)` cells to run it on. For `strip`
/// the `N` values are the square counts `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    #[serde(rename = "N", default = "default_n")]
    pub n: Vec<f64>,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    /// Quadratic coefficients overriding the scenario's default surface.
    #[serde(default)]
    pub coeffs: Option<[f64; 6]>,
    /// Transversality threshold of a bilinear pair; `1/4` or `1/16` pick the
    /// default squares.
    #[serde(default)]
    pub nu: Option<f64>,
    /// Explicit bilinear squares `[R1, R2]`.
    #[serde(default)]
    pub regions: Option<[DyadicSquare; 2]>,
    /// Curve-bilinear intervals, equal-length dyadic.
    #[serde(default)]
    pub intervals: Option<[(f64, f64); 2]>,
    /// Level of the random phase pattern; defaults to the cap level.
    #[serde(default)]
    pub phase_level: Option<u32>,
    #[serde(default)]
    pub phase_seed: u64,
    /// Measure the square-function form of a bilinear pair.
    #[serde(default)]
    pub square_function: bool,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, n: Vec<f64>, p: Vec<f64>) -> Self {
        Self {
            kind,
            n,
            p,
            coeffs: None,
            nu: None,
            regions: None,
            intervals: None,
            phase_level: None,
            phase_seed: 0,
            square_function: false,
        }
    }
}

/// A constructed scenario at one scale.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub surface: Option<SurfaceEvaluator>,
    pub fields: Vec<AmplitudeField>,
    /// Bilinear squares, trivial-decoupling squares, or the curve pair.
    pub regions: Vec<DyadicSquare>,
    pub predicted: Prediction,
}

const PARABOLIC: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
const TWISTED: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 0.5, 0.0];

fn surface_for(spec: &ScenarioSpec, default: [f64; 6]) -> Result<SurfaceEvaluator> {
    quad_surface(QuadCoeffs::new(spec.coeffs.unwrap_or(default))?)
}

fn bilinear_regions(spec: &ScenarioSpec) -> Result<[DyadicSquare; 2]> {
    if let Some(r) = spec.regions {
        return Ok(r);
    }
    let r1 = DyadicSquare::new(2, 0, 0)?;
    match spec.nu {
        None => Ok([r1, DyadicSquare::new(2, 3, 3)?]),
        Some(0.25) => Ok([r1, DyadicSquare::new(2, 3, 3)?]),
        Some(0.0625) => Ok([r1, DyadicSquare::new(2, 2, 2)?]),
        Some(nu) => Err(Error::InvalidParameter(format!("no default squares for nu = {nu}; give `regions`"))),
    }
}

fn curve_pair(spec: &ScenarioSpec) -> Result<DyadicSquare> {
    let [(a0, a1), (b0, b1)] = spec.intervals.unwrap_or([(0.0, 0.25), (0.75, 1.0)]);
    let len = a1 - a0;
    let level = (-len.log2()).round();
    let ok = len > 0.0 && (b1 - b0 - len).abs() < 1e-15 && (level.exp2() * len - 1.0).abs() < 1e-12;
    let (i, j) = ((a0 / len).round(), (b0 / len).round());
    if !ok || (i * len - a0).abs() > 1e-15 || (j * len - b0).abs() > 1e-15 {
        return Err(Error::InvalidParameter("curve intervals must be dyadic of equal length".into()));
    }
    DyadicSquare::new(level as u32, i as u32, j as u32)
}

/// Builds the surface and fields of `spec` at scale `n`.
pub fn scenario(spec: &ScenarioSpec, n: f64, p: f64) -> Result<Scenario> {
    let predicted = predicted_exponent(spec.kind, p);
    let one = Complex64::new(1.0, 0.0);
    let (surface, fields, regions) = match spec.kind {
        ScenarioKind::Indicator => (Some(surface_for(spec, PARABOLIC)?), vec![AmplitudeField::indicator()], vec![]),
        ScenarioKind::FlatLine => (Some(surface_for(spec, TWISTED)?), vec![AmplitudeField::flat_line(n)?], vec![]),
        ScenarioKind::Strip => {
            let k = n.round();
            if k < 1.0 || k != n || !(k as u64).is_power_of_two() {
                return Err(Error::InvalidParameter(format!("strip needs K a power of two, got {n}")));
            }
            let level = (k as u64).trailing_zeros();
            let squares = (0..k as u32).map(|j| DyadicSquare::new(level, 0, j)).collect::<Result<Vec<_>>>()?;
            let field = AmplitudeField::constant(one, squares.clone())?;
            (Some(surface_for(spec, TWISTED)?), vec![field], squares)
        }
        ScenarioKind::RandomPhase => {
            let level = spec.phase_level.unwrap_or_else(|| cap_level_for(n));
            let field = AmplitudeField::random_phase(level, spec.phase_seed, vec![DyadicSquare::unit()])?;
            (Some(surface_for(spec, PARABOLIC)?), vec![field], vec![])
        }
        ScenarioKind::BilinearPair => {
            let [r1, r2] = bilinear_regions(spec)?;
            let level = spec.phase_level.unwrap_or_else(|| cap_level_for(n).max(r1.level));
            let f1 = AmplitudeField::random_phase(level, spec.phase_seed, vec![r1])?;
            let f2 = AmplitudeField::random_phase(level, spec.phase_seed.wrapping_add(1), vec![r2])?;
            (Some(surface_for(spec, PARABOLIC)?), vec![f1, f2], vec![r1, r2])
        }
        ScenarioKind::CurveBilinear => (None, vec![], vec![curve_pair(spec)?]),
        ScenarioKind::Parabola2d => (None, vec![], vec![]),
    };
    Ok(Scenario { kind: spec.kind, surface, fields, regions, predicted })
}

/// Runs one `(N, p)` cell of a scenario.
pub fn run_scenario(spec: &ScenarioSpec, n: f64, p: f64, measure: &Measure) -> Result<DecouplingReport> {
    let sc = scenario(spec, n, p)?;
    let mut report = match spec.kind {
        ScenarioKind::Indicator | ScenarioKind::FlatLine | ScenarioKind::RandomPhase => {
            measure_linear(sc.surface.as_ref().expect("linear scenario has a surface"), &sc.fields[0], n, p, measure)?
        }
        ScenarioKind::Strip => {
            measure_trivial(sc.surface.as_ref().expect("strip has a surface"), &sc.fields[0], &sc.regions, p, measure)?
        }
        ScenarioKind::BilinearPair => {
            let s = sc.surface.as_ref().expect("bilinear scenario has a surface");
            let (r1, r2) = (&sc.regions[0], &sc.regions[1]);
            if spec.square_function {
                measure_square_function(s, &sc.fields[0], r1, &sc.fields[1], r2, n, p, spec.nu, measure)?
            } else {
                measure_bilinear(s, &sc.fields[0], r1, &sc.fields[1], r2, n, p, spec.nu, measure)?
            }
        }
        ScenarioKind::CurveBilinear => {
            curve_bilinear(&CurveEvaluator::moment(), &sc.regions[0], None, None, n, measure)?
        }
        ScenarioKind::Parabola2d => parabola_reference(n, p, (0.0, 1.0), measure)?,
    };
    report.kind = spec.kind.name().to_string();
    if spec.square_function {
        report.kind.push_str("/square-function");
    }
    Ok(report)
}

/// Least-squares slope of `log(ratio)` against `log N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub kind: String,
    pub p: f64,
    pub metric: Metric,
    pub slope: f64,
    /// Propagated from the per-point standard errors of the ratios.
    pub stderr: Option<f64>,
    pub ci95: Option<[f64; 2]>,
    pub points: usize,
    pub predicted: Option<f64>,
}

/// OLS slope through `(N, value, stderr)` in log-log coordinates.
pub fn fit_slope(points: &[(f64, f64, Option<f64>)]) -> Result<(f64, Option<f64>)> {
    let pts: Vec<_> = points.iter().filter(|(n, v, _)| *n > 0.0 && *v > 0.0 && v.is_finite()).collect();
    if pts.len() < 2 {
        return Err(Error::Empty("need two positive points for a slope".into()));
    }
    let xs: Vec<f64> = pts.iter().map(|(n, _, _)| n.ln()).collect();
    let mean_x = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all N values coincide".into()));
    }
    let mut slope = 0.0;
    let mut var = 0.0;
    let mut have_se = true;
    for (x, (_, v, se)) in xs.iter().zip(&pts) {
        let w = (x - mean_x) / sxx;
        slope += w * v.ln();
        match se {
            Some(s) => var += (w * s / v).powi(2),
            None => have_se = false,
        }
    }
    Ok((slope, have_se.then(|| var.sqrt())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub rows: Vec<DecouplingReport>,
    pub fits: Vec<SlopeFit>,
    pub warnings: Vec<String>,
}

/// Every `(N, p)` cell of `spec`, plus slopes per `p` for the predicted
/// metric and for both plain ratios.
pub fn scaling_study(spec: &ScenarioSpec, measure: &Measure) -> Result<Study> {
    let mut rows = Vec::new();
    for &p in &spec.p {
        for &n in &spec.n {
            rows.push(run_scenario(spec, n, p, measure)?);
        }
    }
    let (fits, warnings) = fit_rows(spec.kind, &rows);
    Ok(Study { rows, fits, warnings })
}

/// Slopes for each `p` present in `rows`; fewer than three `N` values omit
/// the slope with a warning.
pub fn fit_rows(kind: ScenarioKind, rows: &[DecouplingReport]) -> (Vec<SlopeFit>, Vec<String>) {
    let mut fits = Vec::new();
    let mut warnings = Vec::new();
    let mut ps: Vec<f64> = rows.iter().map(|r| r.p).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    for p in ps {
        let cell: Vec<&DecouplingReport> = rows.iter().filter(|r| r.p == p).collect();
        if cell.len() < 3 {
            warnings.push(format!("{} p = {p}: {} N values, slope omitted", kind.name(), cell.len()));
            continue;
        }
        let predicted = predicted_exponent(kind, p);
        let mut metrics = vec![Metric::RatioLp, Metric::RatioL2];
        if !metrics.contains(&predicted.metric) {
            metrics.push(predicted.metric);
        }
        for metric in metrics {
            let pts: Vec<_> = cell.iter().filter_map(|r| r.metric(metric).map(|(v, se)| (r.n, v, se))).collect();
            let skipped = cell.len() - pts.iter().filter(|(_, v, _)| *v > 0.0 && v.is_finite()).count();
            if skipped > 0 {
                warnings.push(format!("{} p = {p}: {skipped} rows without a finite {metric:?} skipped", kind.name()));
            }
            match fit_slope(&pts) {
                Ok((slope, stderr)) => fits.push(SlopeFit {
                    kind: kind.name().into(),
                    p,
                    metric,
                    slope,
                    stderr,
                    ci95: stderr.map(|s| [slope - 1.96 * s, slope + 1.96 * s]),
                    points: pts.len(),
                    predicted: (metric == predicted.metric).then_some(predicted.exponent),
                }),
                Err(e) => warnings.push(format!("{} p = {p}: {e}", kind.name())),
            }
        }
    }
    (fits, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicted_table() {
        assert!((predicted_exponent(ScenarioKind::Indicator, 6.0).exponent - 1.0 / 3.0).abs() < 1e-15);
        assert!((predicted_exponent(ScenarioKind::Indicator, 4.0).exponent - 0.25).abs() < 1e-15);
        assert!((predicted_exponent(ScenarioKind::FlatLine, 6.0).exponent - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(predicted_exponent(ScenarioKind::FlatLine, 6.0).metric, Metric::RatioL2);
    }

    #[test]
    fn kinds_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!(matches!("helix".parse::<ScenarioKind>(), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn flat_line_scenario_construction() {
        let sc = scenario(&ScenarioSpec::new(ScenarioKind::FlatLine, vec![64.0], vec![6.0]), 64.0, 6.0).unwrap();
        let crate::fields::FieldMode::Atomic { points } = &sc.fields[0].mode else { panic!("atomic") };
        assert_eq!(points.len(), 8);
        assert!(points.iter().all(|p| p.t == 0.0));
        assert_eq!(points[0].s, 0.125);
        assert_eq!(sc.surface.unwrap().quad_coeffs().unwrap().0, TWISTED);
    }

    #[test]
    fn strip_scenario_squares() {
        let sc = scenario(&ScenarioSpec::new(ScenarioKind::Strip, vec![8.0], vec![6.0]), 8.0, 6.0).unwrap();
        assert_eq!(sc.regions.len(), 8);
        assert!(sc.regions.iter().all(|s| s.i == 0 && s.level == 3));
        assert!(scenario(&ScenarioSpec::new(ScenarioKind::Strip, vec![6.0], vec![6.0]), 6.0, 6.0).is_err());
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<_> = [16.0f64, 64.0, 256.0].iter().map(|&n| (n, 2.0 * n.powf(0.3), Some(0.01))).collect();
        let (s, se) = fit_slope(&pts).unwrap();
        assert!((s - 0.3).abs() < 1e-12);
        assert!(se.unwrap() > 0.0);
    }

    #[test]
    fn curve_pair_parsing() {
        let mut spec = ScenarioSpec::new(ScenarioKind::CurveBilinear, vec![16.0], vec![6.0]);
        assert_eq!(curve_pair(&spec).unwrap(), DyadicSquare::new(2, 0, 3).unwrap());
        spec.intervals = Some([(0.0, 0.3), (0.7, 1.0)]);
        assert!(curve_pair(&spec).is_err());
    }
}
