//! Gauss–Legendre rules and composite tensor grids over dyadic intervals.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `order`-point rule on the unit interval, computed by Newton iteration
    /// on the Legendre polynomial.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Composite rule on `[a, a + len]` split into `cells` equal cells.
    /// Returns `(nodes, weights)`.
    pub fn composite(&self, a: f64, len: f64, cells: usize) -> (Vec<f64>, Vec<f64>) {
        let h = len / cells as f64;
        let mut xs = Vec::with_capacity(cells * self.order());
        let mut ws = Vec::with_capacity(cells * self.order());
        for k in 0..cells {
            let left = a + h * k as f64;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                xs.push(left + h * x);
                ws.push(h * w);
            }
        }
        (xs, ws)
    }

    /// Integrate `f` over `[a, b]` with `cells` panels.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, cells: usize) -> f64 {
        let h = (b - a) / cells as f64;
        let mut total = 0.0;
        for k in 0..cells {
            let left = a + h * k as f64;
            let mut panel = 0.0;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                panel += w * f(left + h * x);
            }
            total += h * panel;
        }
        total
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for n in 1..=16 {
            let gl = GaussLegendre::new(n);
            let s: f64 = gl.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "order {n}: {s}");
        }
    }

    #[test]
    fn exact_for_degree_2n_minus_1() {
        for n in 1..=10 {
            let gl = GaussLegendre::new(n);
            let deg = 2 * n - 1;
            let got: f64 = gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let want = 1.0 / (deg as f64 + 1.0);
            assert!((got - want).abs() < 1e-14, "order {n}");
        }
    }

    #[test]
    fn nodes_are_sorted_and_interior() {
        let gl = GaussLegendre::new(8);
        for w in gl.nodes.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(gl.nodes[0] > 0.0 && gl.nodes[7] < 1.0);
    }

    #[test]
    fn composite_integrates_oscillation() {
        let gl = GaussLegendre::new(8);
        // int_0^1 cos(2 pi 5 x) dx = 0
        let v = gl.integrate(|x| (2.0 * PI * 5.0 * x).cos(), 0.0, 1.0, 8);
        assert!(v.abs() < 1e-10);
    }
}
