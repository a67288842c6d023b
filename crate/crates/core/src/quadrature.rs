//! Tensor-product Gauss-Legendre quadrature on mesh elements.
//!
//! Nodes are computed by Newton iteration on the Legendre polynomial,
//! seeded with the Chebyshev-like initial guess; the iteration is driven to
//! a residual below 1e-15 so rules are reproducible to the last bit across
//! runs.  All nodes are strictly inside the element, which the singular
//! sector map relies on: integrands are evaluated only at points with
//! `zeta1 > 0` even on elements touching the collapsed edge.

use crate::{Error, Result};

/// Default number of Gauss points per parametric direction.
pub const DEFAULT_POINTS_PER_DIR: usize = 6;

/// One-dimensional Gauss-Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    points_per_dir: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Quadrature point of a two-dimensional element rule.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    /// Location in the parametric domain.
    pub zeta: [f64; 2],
    /// Parametric weight (includes the element area factor).
    pub weight: f64,
}

/// Evaluates the Legendre polynomial `P_n` and its derivative at `x`.
fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
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
    // Derivative from the standard relation (1 - x^2) P_n' = n (P_{n-1} - x P_n).
    let dp = n as f64 * (p0 - x * p1) / (1.0 - x * x);
    (p1, dp)
}

impl GaussRule {
    /// Builds the rule with `points_per_dir` nodes per direction.
    pub fn new(points_per_dir: usize) -> Result<Self> {
        if points_per_dir == 0 || points_per_dir > 64 {
            return Err(Error::InvalidArgument(format!(
                "Gauss rule needs 1..=64 points per direction, got {points_per_dir}"
            )));
        }
        let n = points_per_dir;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            // Chebyshev-flavoured seed, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut converged = false;
            for _ in 0..100 {
                let (p, d) = legendre_with_deriv(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    converged = true;
                }
                if converged && p.abs() <= 1e-15 * d.abs().max(1.0) {
                    break;
                }
            }
            let (p, dp) = legendre_with_deriv(n, x);
            if p.abs() > 1e-14 {
                return Err(Error::NoConvergence(format!(
                    "Legendre root {i} of degree {n}: residual {p:e}"
                )));
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x.abs();
            nodes[n - 1 - i] = x.abs();
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self {
            points_per_dir: n,
            nodes,
            weights,
        })
    }

    pub fn points_per_dir(&self) -> usize {
        self.points_per_dir
    }

    /// Reference nodes on [-1, 1], ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Reference weights, summing to 2.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Maps the rule to a one-dimensional interval `[a, b]`.
    pub fn mapped_1d(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    /// Tensor rule on the rectangle `[a1, b1] x [a2, b2]`.
    ///
    /// Points are ordered with the first direction fastest; all points are
    /// strictly inside the rectangle.
    pub fn element_rule(&self, rect: [[f64; 2]; 2]) -> Vec<QuadPoint> {
        let [x_range, y_range] = rect;
        let mut out = Vec::with_capacity(self.points_per_dir * self.points_per_dir);
        for (z2, w2) in self.mapped_1d(y_range[0], y_range[1]) {
            for (z1, w1) in self.mapped_1d(x_range[0], x_range[1]) {
                out.push(QuadPoint {
                    zeta: [z1, z2],
                    weight: w1 * w2,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_legendre_roots() {
        for q in 1..=16 {
            let rule = GaussRule::new(q).unwrap();
            for &x in rule.nodes() {
                let (p, _) = legendre_with_deriv(q, x);
                assert!(
                    p.abs() <= 1e-15 * 10.0,
                    "P_{q}({x}) = {p:e} exceeds the node residual bound"
                );
            }
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for q in 1..=12 {
            let rule = GaussRule::new(q).unwrap();
            let total: f64 = rule.weights().iter().sum();
            assert!((total - 2.0).abs() < 1e-14, "q={q}: weight sum {total}");
        }
    }

    #[test]
    fn element_rule_weights_sum_to_area() {
        let rule = GaussRule::new(DEFAULT_POINTS_PER_DIR).unwrap();
        let rect = [[0.25, 0.75], [0.1, 0.2]];
        let area: f64 = rule.element_rule(rect).iter().map(|p| p.weight).sum();
        assert!((area - 0.05).abs() < 1e-14, "area {area}");
    }

    #[test]
    fn exactness_up_to_degree_2q_minus_1() {
        // Monomial integrals over [0, 1] are 1/(k+1); a q-point rule must
        // reproduce them exactly for k <= 2q - 1.
        for q in [2usize, 4, 6, 8] {
            let rule = GaussRule::new(q).unwrap();
            for k in 0..=(2 * q - 1) {
                let approx: f64 = rule
                    .mapped_1d(0.0, 1.0)
                    .map(|(x, w)| w * x.powi(k as i32))
                    .sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!(
                    (approx - exact).abs() <= 1e-14,
                    "q={q} monomial degree {k}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn degree_2q_is_not_integrated_exactly() {
        // Sanity check that the exactness bound is sharp.
        let q = 3;
        let rule = GaussRule::new(q).unwrap();
        let approx: f64 = rule
            .mapped_1d(0.0, 1.0)
            .map(|(x, w)| w * x.powi(2 * q as i32))
            .sum();
        let exact = 1.0 / (2.0 * q as f64 + 1.0);
        assert!((approx - exact).abs() > 1e-8, "unexpectedly exact: {approx}");
    }

    #[test]
    fn points_strictly_inside_element() {
        let rule = GaussRule::new(DEFAULT_POINTS_PER_DIR).unwrap();
        // Element touching the collapsed edge zeta1 = 0.
        let rect = [[0.0, 1e-9], [0.0, 0.0625]];
        for p in rule.element_rule(rect) {
            assert!(p.zeta[0] > 0.0, "node touches the singular edge");
            assert!(p.zeta[0] < 1e-9 && p.zeta[1] > 0.0 && p.zeta[1] < 0.0625);
        }
    }
}
