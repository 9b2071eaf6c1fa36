use declab_core::exponents::{
    bg_bound, bg_simulate, contraction_holds, contradiction_check, exponent_constants, gamma_candidate,
    gamma_candidate_exact, gamma_iterate, kappa_exact, kappa_interpolation_holds, scale_recursion,
    scale_recursion_exact, EpsModel,
};
use declab_core::Error;
use num::rational::BigRational;
use num::{BigInt, Zero};
use proptest::prelude::*;

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

proptest! {
    #[test]
    fn kappa_interpolation_is_exact(n in 21i64..2000, d in 1i64..10) {
        let p = ratio(n, d);
        prop_assume!(p > ratio(2, 1));
        prop_assert!(kappa_interpolation_holds(&p));
    }

    #[test]
    fn contraction_iff_p_above_six(n in 21i64..2000, d in 1i64..10) {
        let p = ratio(n, d);
        prop_assume!(p > ratio(4, 1));
        prop_assert_eq!(contraction_holds(&p), p > ratio(6, 1));
    }

    #[test]
    fn iteration_increases_with_eps(p in 6.05f64..20.0, s in 2u32..40, g in 0.0f64..1.0, e1 in 0.0f64..0.1, de in 1e-6f64..0.1) {
        let lo = gamma_iterate(p, e1, s, g, 10.0).unwrap();
        let hi = gamma_iterate(p, e1 + de, s, g, 10.0).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn recursion_is_increasing_and_bounded(g in 0.0f64..2.0, depth in 1usize..200) {
        let seq = scale_recursion(g, depth).unwrap();
        prop_assert!((seq[0] - g / 3.0).abs() <= 1e-15);
        for w in seq.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        prop_assert!(seq.iter().all(|v| *v <= g * (1.0 + 1e-12)));
    }
}

#[test]
fn candidate_decreases_to_one_third() {
    let vals: Vec<f64> = [6.01, 6.1, 7.0, 8.0].iter().map(|&p| gamma_candidate(p)).collect();
    assert!(vals.windows(2).all(|w| w[1] > w[0]));
    assert!((gamma_candidate(6.0 + 1e-9) - 1.0 / 3.0).abs() < 1e-9);
    assert_eq!(gamma_candidate_exact(&ratio(8, 1)), ratio(5, 8));
    assert_eq!(kappa_exact(&ratio(8, 1)), ratio(2, 3));
    assert_eq!(kappa_exact(&ratio(6, 1)), ratio(1, 2));
}

#[test]
fn constants_and_guards() {
    let c = exponent_constants(8.0).unwrap();
    assert!((c.kappa - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(c.gamma_candidate, Some(0.625));
    assert!(!exponent_constants(3.0).unwrap().flags.is_empty());
    assert!(matches!(exponent_constants(2.0), Err(Error::DivisionGuard(_))));
    assert!(matches!(gamma_iterate(6.0, 0.0, 10, 0.5, 1.0), Err(Error::DivisionGuard(_))));
    assert!(gamma_iterate(7.0, 0.0, 1, 0.5, 1.0).is_err());
}

#[test]
fn large_depth_limit_and_order_stability() {
    let v = gamma_iterate(8.0, 1e-3, 60, 0.7, 1.0).unwrap();
    assert!((v - 0.701).abs() < 1e-8);
    let a = gamma_iterate(8.0, 1e-3, 10, 0.7, 1.0).unwrap();
    let b = gamma_iterate(8.0, 1e-3, 10, 0.7, 1.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn contradiction_closes_for_the_reference_models() {
    for p in [6.1, 6.5, 7.0, 8.0, 12.0] {
        for big_o in [1.0, 10.0, 100.0] {
            let c = contradiction_check(p, big_o, &EpsModel::default(), 0.01).unwrap();
            assert!(c.closes, "p = {p}, O = {big_o}: {:?}", c.binding);
            let w = c.witness.unwrap();
            assert!(w.gap < 0.0);
            assert!(0.5 - 1.0 / p + w.eps_nu < 1.0 - 4.0 / p);
        }
    }
    assert!(contradiction_check(6.5, 10.0, &EpsModel::Linear, 0.01).unwrap().closes);
    let c = contradiction_check(8.0, 1.0, &EpsModel::Linear, 0.01).unwrap();
    assert!(c.witness.unwrap().s <= 20);
    let c = contradiction_check(6.1, 10.0, &EpsModel::Constant { value: 0.2 }, 0.01).unwrap();
    assert!(!c.closes);
    assert_eq!(c.binding.as_deref(), Some("eps-nu"));
}

#[test]
fn recursion_exact_sums() {
    let seq = scale_recursion_exact(&ratio(1, 3), 200);
    let gap = ratio(1, 3) - seq.last().unwrap();
    assert!(gap > BigRational::zero());
    assert!(gap < ratio(1, 1_000_000_000));
    assert_eq!(seq[0], ratio(1, 9));
}

#[test]
fn linear_from_bilinear_bound() {
    let n: f64 = 4096.0;
    let cube: Vec<(f64, f64)> = (0..=12).map(|k| (2f64.powi(k), 2f64.powi(k).powf(1.0 / 3.0))).collect();
    let b = bg_bound(&cube, n, 6.0, 0.0, 1.0).unwrap();
    assert!((b - n.powf(1.0 / 3.0)).abs() < 1e-9 * b);
    let flat = vec![(1.0, 1.0), (n, 1.0)];
    let b = bg_bound(&flat, n, 6.0, 0.0, 1.0).unwrap();
    assert!((b - n.powf(0.5 - 1.0 / 6.0)).abs() < 1e-9 * b);
    assert!(bg_bound(&[], n, 6.0, 0.0, 1.0).is_err());
    let sim = bg_simulate(&flat, 64.0, 6.0, 1.0, 3).unwrap();
    assert!(sim >= 1.0);
}
