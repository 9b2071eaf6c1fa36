//! The unimodular character `e(z) = exp(2 pi i z)`.

use num_complex::Complex64;
use std::f64::consts::TAU;

/// `e(z) = exp(2 pi i z)`.
///
/// The integer part of `z` is removed before the trigonometric call, so the
/// result stays accurate for phases of many thousands of cycles.
#[inline]
pub fn e(z: f64) -> Complex64 {
    let frac = z - z.round();
    let (s, c) = (TAU * frac).sin_cos();
    Complex64::new(c, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_phases_are_one() {
        for k in [-3.0, 0.0, 1.0, 1.0e6] {
            let v = e(k);
            assert!((v.re - 1.0).abs() < 1e-15 && v.im.abs() < 1e-15);
        }
    }

    #[test]
    fn quarter_turn() {
        let v = e(0.25);
        assert!(v.re.abs() < 1e-15);
        assert!((v.im - 1.0).abs() < 1e-15);
    }

    #[test]
    fn large_phase_matches_reduced_phase() {
        let z = 12_345.678_9;
        let a = e(z);
        let b = e(z - 12345.0);
        assert!((a - b).norm() < 1e-11);
    }
}
