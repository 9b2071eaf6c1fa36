use declab_core::exponents::bg_simulate;
use declab_core::fields::AmplitudeField;
use declab_core::geometry::{quad_surface, QuadCoeffs, SurfaceEvaluator};
use declab_core::grid::DyadicSquare;
use declab_core::harness::{
    flat_line_oracle, measure_bilinear, measure_linear, measure_square_function, measure_trivial, run_scenario,
    scaling_study, BallShape, Measure, Metric, ScenarioKind, ScenarioSpec,
};
use proptest::prelude::*;

fn parabolic() -> SurfaceEvaluator {
    quad_surface(QuadCoeffs::new([1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap()).unwrap()
}

fn sq(level: u32, i: u32, j: u32) -> DyadicSquare {
    DyadicSquare::new(level, i, j).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reports_are_holder_consistent(a in prop::array::uniform6(-2.0f64..2.0), seed in 0u64..100, p in 2.0f64..10.0, n in prop::sample::select(vec![4.0, 16.0, 64.0])) {
        let surface = quad_surface(QuadCoeffs::new(a).unwrap()).unwrap();
        let field = AmplitudeField::random_phase(4, seed, vec![DyadicSquare::unit()]).unwrap();
        let r = measure_linear(&surface, &field, n, p, &Measure::mc(2000, seed)).unwrap();
        prop_assert!(r.holder_consistent());
        prop_assert!(r.ratio_l2 <= r.ratio_lp * (r.caps as f64).powf(0.5 - 1.0 / p) * (1.0 + 1e-12));
        prop_assert!(r.ratio_lp.is_finite() && r.ratio_l2.is_finite());
    }
}

#[test]
fn reseeding_moves_ratios_within_three_sigma() {
    let spec = ScenarioSpec::new(ScenarioKind::Indicator, vec![16.0], vec![6.0]);
    let base = run_scenario(&spec, 16.0, 6.0, &Measure::mc(10_000, 0)).unwrap();
    let mut inside = 0;
    for seed in 1..=40 {
        let r = run_scenario(&spec, 16.0, 6.0, &Measure::mc(10_000, seed)).unwrap();
        let se = (r.ratio_lp_se.unwrap().powi(2) + base.ratio_lp_se.unwrap().powi(2)).sqrt();
        inside += usize::from((r.ratio_lp - base.ratio_lp).abs() <= 3.0 * se);
    }
    assert!(inside >= 38, "{inside} of 40 reseeded runs within 3 sigma");
}

#[test]
fn same_seed_is_bit_identical() {
    let spec = ScenarioSpec::new(ScenarioKind::RandomPhase, vec![64.0], vec![4.0]);
    let m = Measure::mc(5000, 3);
    assert_eq!(run_scenario(&spec, 64.0, 4.0, &m).unwrap(), run_scenario(&spec, 64.0, 4.0, &m).unwrap());
}

#[test]
fn l2_ratios_approach_one_as_the_ball_grows() {
    // Caps decouple in L^2 only once the effective radius of the weight,
    // about N/25, exceeds the cap scale; the excess shrinks with N.
    let spec = ScenarioSpec::new(ScenarioKind::Indicator, vec![], vec![2.0]);
    let ratios: Vec<f64> = [16.0, 64.0, 256.0]
        .iter()
        .map(|&n| run_scenario(&spec, n, 2.0, &Measure::mc(20_000, 4)).unwrap().ratio_l2)
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
    assert!(ratios[2] < 2.0);
    let spec = ScenarioSpec::new(ScenarioKind::RandomPhase, vec![], vec![2.0]);
    for n in [16.0, 64.0] {
        let r = run_scenario(&spec, n, 2.0, &Measure::mc(20_000, 4)).unwrap();
        assert!((0.8..1.25).contains(&r.ratio_l2), "N = {n}: {}", r.ratio_l2);
    }
}

#[test]
fn bilinear_ratio_is_below_the_linear_ratios() {
    let s = parabolic();
    let (r1, r2) = (sq(2, 0, 0), sq(2, 3, 3));
    let f1 = AmplitudeField::random_phase(4, 1, vec![r1]).unwrap();
    let f2 = AmplitudeField::random_phase(4, 2, vec![r2]).unwrap();
    let m = Measure::mc(20_000, 6);
    for p in [4.0, 6.0] {
        let bi = measure_bilinear(&s, &f1, &r1, &f2, &r2, 64.0, p, None, &m).unwrap();
        let l1 = measure_linear(&s, &f1, 64.0, p, &m).unwrap();
        let l2 = measure_linear(&s, &f2, 64.0, p, &m).unwrap();
        let bound = (l1.ratio_lp * l2.ratio_lp).sqrt();
        let sigma = bi.ratio_lp_se.unwrap()
            + 0.5 * bound * (l1.ratio_lp_se.unwrap() / l1.ratio_lp + l2.ratio_lp_se.unwrap() / l2.ratio_lp);
        assert!(bi.ratio_lp <= bound + 5.0 * sigma, "p = {p}: {} vs {bound}", bi.ratio_lp);
    }
}

#[test]
fn square_function_with_single_caps_is_the_bilinear_term() {
    let s = parabolic();
    let (r1, r2) = (sq(2, 0, 0), sq(2, 3, 3));
    let f1 = AmplitudeField::random_phase(2, 1, vec![r1]).unwrap();
    let f2 = AmplitudeField::random_phase(2, 2, vec![r2]).unwrap();
    let m = Measure::mc(10_000, 2);
    let bi = measure_bilinear(&s, &f1, &r1, &f2, &r2, 16.0, 4.0, None, &m).unwrap();
    let sf = measure_square_function(&s, &f1, &r1, &f2, &r2, 16.0, 4.0, None, &m).unwrap();
    assert_eq!(bi.caps, 2);
    assert!((bi.lhs.value - sf.lhs.value).abs() <= 1e-12 * bi.lhs.value);
    assert!(measure_square_function(&s, &f1, &r1, &f2, &r2, 16.0, 3.0, None, &m).is_err());
}

#[test]
fn random_phase_strip_respects_the_trivial_bound() {
    let s = quad_surface(QuadCoeffs::new([1.0, 0.0, 0.0, 0.0, 0.5, 0.0]).unwrap()).unwrap();
    for k in [8u32, 16] {
        let level = k.trailing_zeros();
        let squares: Vec<DyadicSquare> = (0..k).map(|j| sq(level, 0, j)).collect();
        let field = AmplitudeField::random_phase(level, 17, squares.clone()).unwrap();
        let r = measure_trivial(&s, &field, &squares, 6.0, &Measure::mc(20_000, 8)).unwrap();
        assert!(r.ratio_lp <= 1.0 + 5.0 * r.ratio_lp_se.unwrap(), "K = {k}: {}", r.ratio_lp);
    }
}

#[test]
fn parabola_ratio_stays_small() {
    let spec = ScenarioSpec::new(ScenarioKind::Parabola2d, vec![64.0], vec![6.0]);
    let r = run_scenario(&spec, 64.0, 6.0, &Measure::mc(20_000, 1)).unwrap();
    assert!(r.ratio_l2 <= 3.0, "{}", r.ratio_l2);
    assert!(r.quadrature_gate.unwrap() < 1e-6);
}

#[test]
fn flat_line_oracle_is_periodic_in_the_center_and_matches_the_pipeline() {
    let n = 256.0;
    let base = Measure::mc(40_000, 12);
    let ball = base.ball.ball(4, n).unwrap();
    let oracle = flat_line_oracle(n, 6.0, &ball).unwrap();
    let mut shifted = ball.clone();
    shifted.center[1] = 16.0 * 3.0;
    let moved = flat_line_oracle(n, 6.0, &shifted).unwrap();
    assert!((oracle.ratio_l2 - moved.ratio_l2).abs() < 1e-9 * oracle.ratio_l2);

    let spec = ScenarioSpec::new(ScenarioKind::FlatLine, vec![n], vec![6.0]);
    let mut off_center = base.clone();
    off_center.ball = BallShape { center: Some(vec![0.0, 16.0, 0.0, 0.0]), ..BallShape::default() };
    for (label, m) in [("centered", &base), ("shifted", &off_center)] {
        let r = run_scenario(&spec, n, 6.0, m).unwrap();
        let se = r.ratio_l2_se.unwrap();
        assert!(
            (r.ratio_l2 - oracle.ratio_l2).abs() <= 3.0 * se,
            "{label}: {} +- {se} vs oracle {}",
            r.ratio_l2,
            oracle.ratio_l2
        );
    }
}

#[test]
fn study_fits_and_warns() {
    let spec = ScenarioSpec::new(ScenarioKind::Strip, vec![4.0, 8.0, 16.0], vec![6.0]);
    let study = scaling_study(&spec, &Measure::mc(5000, 3)).unwrap();
    assert_eq!(study.rows.len(), 3);
    let raw = study.fits.iter().find(|f| f.metric == Metric::RawRatio).unwrap();
    assert_eq!(raw.predicted, Some(1.0 - 2.0 / 6.0));
    assert!((raw.slope - 2.0 / 3.0).abs() < 0.2, "slope {}", raw.slope);
    let ci = raw.ci95.unwrap();
    assert!(ci[0] <= raw.slope && raw.slope <= ci[1]);

    let short = ScenarioSpec::new(ScenarioKind::Indicator, vec![4.0, 16.0], vec![6.0]);
    let study = scaling_study(&short, &Measure::mc(2000, 3)).unwrap();
    assert!(study.fits.is_empty());
    assert_eq!(study.warnings.len(), 1);
}

#[test]
fn simulated_linear_bound_dominates_the_measured_ratio() {
    let spec = ScenarioSpec::new(ScenarioKind::BilinearPair, vec![], vec![6.0]);
    let m = Measure::mc(10_000, 5);
    let table: Vec<(f64, f64)> =
        [16.0, 64.0].iter().map(|&n| (n, run_scenario(&spec, n, 6.0, &m).unwrap().ratio_lp)).collect();
    let linear = run_scenario(&ScenarioSpec::new(ScenarioKind::Indicator, vec![], vec![6.0]), 64.0, 6.0, &m).unwrap();
    let bound = bg_simulate(&table, 64.0, 6.0, 1.0, 3).unwrap();
    assert!(bound >= linear.ratio_lp, "{bound} < {}", linear.ratio_lp);
}
