use std::time::Instant;

use declab_core::exponents::{
    contradiction_check, gamma_candidate, gamma_iterate, kappa, kappa_interpolation_holds, scale_recursion_exact,
    EpsModel, Witness, DEFAULT_MARGIN,
};
use declab_core::geometry::{quad_surface, rank5_check, QuadCoeffs};
use declab_core::harness::{run_scenario, DecouplingReport, Measure, ScenarioKind, ScenarioSpec};
use declab_core::rescale::{random_atomic_in, rescaling_residual, ParamSquare, RescaleCheck};
use declab_core::transversality::{jacobian_residual, transverse_graph, StripPrediction};
use num::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Parse a comma-separated list of exactly `len` numbers.
pub fn parse_list(text: &str, len: usize, what: &str) -> CliResult<Vec<f64>> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|v| v.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == len && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(CliError::Schema(format!("{what} needs {len} comma-separated finite numbers, got `{text}`"))),
    }
}

pub fn parse_coeffs(text: &str) -> CliResult<QuadCoeffs> {
    let v = parse_list(text, 6, "--A")?;
    QuadCoeffs::new([v[0], v[1], v[2], v[3], v[4], v[5]]).map_err(|e| CliError::Schema(e.to_string()))
}

fn core(err: declab_core::Error) -> CliError {
    CliError::Other(err.into())
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    #[serde(rename = "K")]
    pub k: u32,
    pub nu: f64,
    pub counts: Vec<usize>,
    pub max_count: usize,
    pub strips: StripPrediction,
    /// Up to 32 offsets `(di, dj)` of non-transverse partners.
    pub pairs_sample: Vec<(i32, i32)>,
    pub eigen_agreement: f64,
    pub strip_cover: f64,
}

pub fn transversality(a: &QuadCoeffs, k: u32, nu: Option<f64>) -> CliResult<GraphSummary> {
    let g = transverse_graph(a, k, nu).map_err(|e| CliError::Schema(e.to_string()))?;
    Ok(GraphSummary {
        k: g.k,
        nu: g.nu,
        counts: g.counts,
        max_count: g.max_count,
        strips: g.strips,
        pairs_sample: g.nontransverse_offsets.into_iter().take(32).collect(),
        eigen_agreement: g.eigen_agreement,
        strip_cover: g.strip_cover,
    })
}

/// Rescaling identity on a random atomic field of `points` masses.
pub fn rescale_check(
    a: &QuadCoeffs,
    square: [f64; 3],
    points: usize,
    trials: usize,
    seed: u64,
) -> CliResult<RescaleCheck> {
    let sq = ParamSquare::new(square[0], square[1], square[2]).map_err(|e| CliError::Schema(e.to_string()))?;
    let field = random_atomic_in(&sq, points, seed).map_err(core)?;
    rescaling_residual(a, &field, &sq, trials, seed.wrapping_add(1)).map_err(core)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentSummary {
    pub p: f64,
    pub s: u32,
    pub eps: f64,
    #[serde(rename = "bigO")]
    pub big_o: f64,
    pub kappa: f64,
    pub gamma_candidate: f64,
    /// One pass of the iteration started at `gamma_in`.
    pub gamma_in: f64,
    pub gamma_iter: f64,
    pub closes: bool,
    pub witness: Option<Witness>,
    pub binding: Option<String>,
}

pub fn exponents(p: f64, s: u32, eps: f64, big_o: f64, gamma_in: Option<f64>) -> CliResult<ExponentSummary> {
    let gamma_in = gamma_in.unwrap_or_else(|| gamma_candidate(p));
    let gamma_iter = gamma_iterate(p, eps, s, gamma_in, big_o).map_err(|e| CliError::Schema(e.to_string()))?;
    let c = contradiction_check(p, big_o, &EpsModel::default(), DEFAULT_MARGIN).map_err(core)?;
    Ok(ExponentSummary {
        p,
        s,
        eps,
        big_o,
        kappa: kappa(p),
        gamma_candidate: gamma_candidate(p),
        gamma_in,
        gamma_iter,
        closes: c.closes,
        witness: c.witness,
        binding: c.binding,
    })
}

pub fn example(kind: ScenarioKind, n: f64, p: f64, budget: usize, seed: u64) -> CliResult<DecouplingReport> {
    let spec = ScenarioSpec::new(kind, vec![n], vec![p]);
    declab_core::harness::scenario(&spec, n, p).map_err(|e| CliError::Schema(e.to_string()))?;
    run_scenario(&spec, n, p, &Measure::mc(budget, seed))
        .map_err(|e| CliError::in_cell(&format!("{} N={n} p={p}", kind.name()), e))
}

#[derive(Debug, Clone, Serialize)]
pub struct SmokeCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub millis: u128,
}

fn check(name: &str, f: impl FnOnce() -> CliResult<(bool, String)>) -> SmokeCheck {
    let start = Instant::now();
    let (pass, detail) = f().unwrap_or_else(|e| (false, e.to_string()));
    SmokeCheck { name: name.into(), pass, detail, millis: start.elapsed().as_millis() }
}

fn random_coeffs(rng: &mut ChaCha8Rng) -> QuadCoeffs {
    QuadCoeffs(std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
}

/// The exact identities of every module, in a few seconds.
pub fn smoke() -> Vec<SmokeCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws: Vec<QuadCoeffs> = (0..50).map(|_| random_coeffs(&mut rng)).collect();
    vec![
        check("rescaling identity", || {
            let mut worst: f64 = 0.0;
            for (k, a) in draws.iter().take(20).enumerate() {
                let r = rescale_check(a, [0.25, 0.5, 0.25], 6, 50, k as u64)?;
                worst = worst.max(r.max_residual);
            }
            Ok((worst < 1e-9, format!("max residual {worst:.2e}")))
        }),
        check("bilinear Jacobian", || {
            let mut worst: f64 = 0.0;
            for (k, a) in draws.iter().take(20).enumerate() {
                worst = worst.max(jacobian_residual(a, 200, k as u64).map_err(core)?);
            }
            Ok((worst < 1e-5, format!("max relative residual {worst:.2e}")))
        }),
        check("rank equivalence", || {
            let mut disagree = 0;
            for a in &draws {
                let surface = quad_surface(*a).map_err(core)?;
                disagree += usize::from(rank5_check(&surface, 0.3, 0.7) != a.rank2());
            }
            Ok((disagree == 0, format!("{disagree} of {} draws disagree", draws.len())))
        }),
        check("kappa interpolation", || {
            let ok = (41..=200).all(|k| kappa_interpolation_holds(&BigRational::new(k.into(), 10.into())));
            Ok((ok, "exact on p = 4.1..20".into()))
        }),
        check("iteration recursion", || {
            let seq = scale_recursion_exact(&BigRational::new(1.into(), 3.into()), 40);
            let ok =
                seq.windows(2).all(|w| w[0] < w[1]) && seq.iter().all(|g| *g < BigRational::new(1.into(), 3.into()));
            Ok((ok, "monotone and below 1/3".into()))
        }),
    ]
}
