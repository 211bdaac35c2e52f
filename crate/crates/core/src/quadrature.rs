//! Gauss–Legendre rules, used for the α-integral of the current vertex.

use std::f64::consts::PI;

/// Nodes and weights of an `n`-point Gauss–Legendre rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Rule on `[-1, 1]`, nodes ascending. Roots of `P_n` by Newton iteration
    /// from the Chebyshev-like initial guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Rule rescaled to `[a, b]`.
    pub fn on_interval(n: usize, a: f64, b: f64) -> Self {
        let base = Self::new(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        GaussLegendre {
            nodes: base.nodes.iter().map(|x| mid + half * x).collect(),
            weights: base.weights.iter().map(|w| half * w).collect(),
        }
    }

    /// Rule on `[0, 1]`, the α-domain.
    pub fn unit(n: usize) -> Self {
        Self::on_interval(n, 0.0, 1.0)
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
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
    fn integrates_polynomials_exactly() {
        for n in 1..=20 {
            let rule = GaussLegendre::new(n);
            assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got = rule.integrate(|x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn alpha_cross_moment_is_one_sixth() {
        for n in [2, 8, 16, 32] {
            let rule = GaussLegendre::unit(n);
            let m = rule.integrate(|a| (1.0 - a) * a);
            assert!((m - 1.0 / 6.0).abs() < 1e-12, "n={n}: {m}");
        }
    }

    #[test]
    fn known_three_point_rule() {
        let r = GaussLegendre::new(3);
        let x = (0.6f64).sqrt();
        assert!((r.nodes[0] + x).abs() < 1e-15 && r.nodes[1] == 0.0 && (r.nodes[2] - x).abs() < 1e-15);
        assert!((r.weights[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((r.weights[0] - 5.0 / 9.0).abs() < 1e-15);
    }
}
