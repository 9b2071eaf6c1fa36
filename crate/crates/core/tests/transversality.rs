use declab_core::geometry::{in_l, QuadCoeffs};
use declab_core::grid::{DyadicSquare, Rect};
use declab_core::transversality::{
    difference_rect, jacobian_point_residual, min_abs_form, min_abs_form_grid, trans_coeffs, transverse_graph,
};
use proptest::prelude::*;

fn coeffs() -> impl Strategy<Value = QuadCoeffs> {
    prop::array::uniform6(-2.0f64..2.0).prop_map(|a| QuadCoeffs::new(a).unwrap())
}

fn square(level: u32) -> impl Strategy<Value = DyadicSquare> {
    let k = 1u32 << level;
    (0..k, 0..k).prop_map(move |(i, j)| DyadicSquare::new(level, i, j).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn symmetric_in_the_squares(a in coeffs(), r1 in square(3), r2 in square(3)) {
        prop_assert_eq!(min_abs_form(&a, &r1, &r2), min_abs_form(&a, &r2, &r1));
    }

    #[test]
    fn enlarging_a_square_never_increases(a in coeffs(), r1 in square(4), r2 in square(4)) {
        let parent = r1.ancestor(3).unwrap();
        prop_assert!(min_abs_form(&a, &parent, &r2) <= min_abs_form(&a, &r1, &r2));
    }

    #[test]
    fn scales_quadratically_with_coefficients(a in coeffs(), r1 in square(3), r2 in square(3), k in -3.0f64..3.0) {
        let base = min_abs_form(&a, &r1, &r2);
        let scaled = min_abs_form(&a.scaled(k), &r1, &r2);
        prop_assert!((scaled - k * k * base).abs() <= 1e-12 * (1.0 + k * k * base));
    }

    #[test]
    fn analytic_minimum_matches_grid(a in coeffs(), r1 in square(3), r2 in square(3)) {
        let tc = trans_coeffs(&a);
        let d = difference_rect(&r1.rect(), &r2.rect());
        let exact = min_abs_form(&a, &r1, &r2);
        let grid = min_abs_form_grid(&tc, &d, 1024);
        prop_assert!(exact <= grid + 1e-12);
        // One grid cell of slack: |grad Q| <= 2 |c| (|dt| + |ds|) <= 8 max|c|.
        let slack = 8.0 * tc.c.iter().fold(0.0f64, |m, v| m.max(v.abs())) * d.width() / 1024.0;
        prop_assert!(grid - exact <= slack, "{exact} vs {grid}");
    }

    #[test]
    fn eigenpairs_and_class_bound(a in coeffs()) {
        let tc = trans_coeffs(&a);
        let m = tc.matrix;
        for (l, v) in [(tc.lambda[0], tc.v1), (tc.lambda[1], tc.v2)] {
            prop_assert!((m[0][0] * v[0] + m[0][1] * v[1] - l * v[0]).abs() < 1e-10);
            prop_assert!((m[1][0] * v[0] + m[1][1] * v[1] - l * v[1]).abs() < 1e-10);
        }
        let c = 10.0;
        if in_l(&a, c).unwrap() {
            prop_assert!(tc.lambda[0].abs() >= 1.0 / (2.0 * c * c));
        }
    }

    #[test]
    fn jacobian_is_four_times_the_form(a in coeffs(), p in prop::array::uniform4(0.0f64..1.0)) {
        let tc = trans_coeffs(&a);
        let q = tc.form(p[0] - p[2], p[1] - p[3]);
        prop_assume!(q.abs() > 1e-6);
        prop_assert!(jacobian_point_residual(&a, &tc, p) < 1e-5);
    }
}

#[test]
fn worked_minima() {
    let twisted = QuadCoeffs::new([1.0, 0.0, 0.0, 0.0, 0.5, 0.0]).unwrap();
    let para = QuadCoeffs::new([1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let r = DyadicSquare::new(3, 0, 0).unwrap();
    assert_eq!(min_abs_form(&twisted, &r, &r), 0.0);
    let v = min_abs_form(&twisted, &r, &DyadicSquare::new(3, 2, 0).unwrap());
    assert!((v - 0.5 / 64.0).abs() < 1e-15);
    let v = min_abs_form(&para, &r, &DyadicSquare::new(3, 2, 2).unwrap());
    assert!((v - 1.0 / 64.0).abs() < 1e-15);
    let d = Rect::new(-0.25, 0.25, -0.25, 0.25);
    assert_eq!(min_abs_form_grid(&trans_coeffs(&para), &d, 64), 0.0);
}

#[test]
fn twisted_graph_partners_are_near_columns() {
    let a = QuadCoeffs::new([1.0, 0.0, 0.0, 0.0, 0.5, 0.0]).unwrap();
    let g = transverse_graph(&a, 8, None).unwrap();
    // Q = dt^2 / 2 < 1/64 needs a column gap below sqrt(2)/8, so the
    // column offset is at most two.
    for &(di, _) in &g.nontransverse_offsets {
        assert!(di.abs() <= 2);
    }
    assert!(g.nontransverse_offsets.contains(&(2, 0)));
    assert!(g.max_count <= 5 * 8);
    assert_eq!(g.strips.kind, "definite");
    assert_eq!(g.eigen_agreement, 1.0);
    assert_eq!(g.strip_cover, 1.0);
    for i in 0..8 {
        for j in 0..8 {
            assert!(g.counts[i * 8 + j] >= 1, "a square is never transverse to itself");
        }
    }

    let g = transverse_graph(&QuadCoeffs::new([1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap(), 8, None).unwrap();
    assert_eq!(g.strips.kind, "indefinite");
    assert_eq!(g.strips.normals.len(), 2);
    assert!(g.eigen_agreement >= 0.99);
    assert!(transverse_graph(&a, 6, None).is_err());
}
