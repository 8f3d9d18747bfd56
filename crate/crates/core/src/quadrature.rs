//! Gauss–Legendre rules on the unit interval.

use std::f64::consts::PI;

/// Nodes and weights of a quadrature rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `n`-point Gauss–Legendre rule mapped to `[0, 1]`.
///
/// Roots are found by Newton iteration on the three-term recurrence, starting
/// from the Tricomi approximation.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
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
    Rule { nodes, weights }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Composite rule: `panels` equal panels of `order`-point Gauss–Legendre each.
pub fn composite(panels: usize, order: usize) -> Rule {
    let base = gauss_legendre(order);
    let h = 1.0 / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let a = p as f64 * h;
        for (&x, &w) in base.nodes.iter().zip(&base.weights) {
            nodes.push(a + h * x);
            weights.push(h * w);
        }
    }
    Rule { nodes, weights }
}

/// Composite Gauss–Legendre with roughly `nodes` points in total.
///
/// Uses 10-point panels once `nodes` is large enough, a single rule otherwise.
pub fn composite_with_nodes(nodes: usize) -> Rule {
    const ORDER: usize = 10;
    if nodes < 2 * ORDER {
        return gauss_legendre(nodes.max(1));
    }
    composite(nodes / ORDER, ORDER)
}

/// Quintic smoothstep `t = u^3 (10 - 15u + 6u^2)` and its derivative.
///
/// Used as a change of variables that flattens endpoint singularities.
pub(crate) fn smoothstep(u: f64) -> (f64, f64) {
    let t = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
    let dt = 30.0 * u * u * (1.0 - u) * (1.0 - u);
    (t, dt)
}
