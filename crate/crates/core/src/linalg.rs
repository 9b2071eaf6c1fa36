use nalgebra::{DMatrix, Matrix4};

/// Numerical rank from singular values, threshold `rel_tol * sigma_max`.
/// Also returns the smallest relevant singular value ratio so callers can
/// tell how close the verdict sits to the tolerance band.
pub(crate) fn rank_with_margin(m: &DMatrix<f64>, rel_tol: f64) -> (usize, Vec<f64>) {
    let sv = m.clone().svd(false, false).singular_values;
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (0, sv);
    }
    let rank = sv.iter().filter(|&&s| s > rel_tol * smax).count();
    (rank, sv)
}

pub(crate) fn det4(rows: [[f64; 4]; 4]) -> f64 {
    Matrix4::from_fn(|i, j| rows[i][j]).determinant()
}

pub(crate) fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64; 4]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64; 4], y: &mut [f64; 4]) {
    for k in 0..4 {
        y[k] += alpha * x[k];
    }
}

pub(crate) fn scale(alpha: f64, x: &[f64; 4]) -> [f64; 4] {
    [alpha * x[0], alpha * x[1], alpha * x[2], alpha * x[3]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det4_of_diagonal() {
        let d = det4([[1.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0], [0.0, 0.0, 6.0, 0.0], [0.0, 0.0, 0.0, 24.0]]);
        assert!((d - 288.0).abs() < 1e-9);
    }

    #[test]
    fn rank_of_dependent_rows() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert_eq!(rank_with_margin(&m, 1e-8).0, 1);
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(rank_with_margin(&m, 1e-8).0, 2);
    }
}
