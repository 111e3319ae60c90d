//! Gauss quadrature rules against the univariate densities.

use crate::sampling::Density;
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Hermite rule for the standard normal weight (weights sum to 1),
/// by Golub-Welsch.
pub fn gauss_hermite_normal(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Nodes and probability weights integrating against `density`, or `None`
/// for families without a rule.
pub fn rule_for_density(density: &Density, order: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    match density {
        Density::Uniform { lo, hi } => {
            let (t, w) = gauss_legendre(order);
            let half = 0.5 * (hi - lo);
            Some((
                t.iter().map(|t| lo + half * (t + 1.0)).collect(),
                w.iter().map(|w| 0.5 * w).collect(),
            ))
        }
        Density::Triangular { lo, hi, mode } => {
            // The density is smooth on either side of the mode.
            let (t, w) = gauss_legendre(order);
            let mut nodes = Vec::with_capacity(2 * order);
            let mut weights = Vec::with_capacity(2 * order);
            for (a, b) in [(*lo, *mode), (*mode, *hi)] {
                if b <= a {
                    continue;
                }
                let half = 0.5 * (b - a);
                for (ti, wi) in t.iter().zip(&w) {
                    let x = a + half * (ti + 1.0);
                    nodes.push(x);
                    weights.push(half * wi * crate::sampling::triangular_pdf(*lo, *hi, *mode, x));
                }
            }
            Some((nodes, weights))
        }
        Density::Normal { mean, sd } => {
            let (z, w) = gauss_hermite_normal(order);
            Some((z.iter().map(|z| mean + sd * z).collect(), w))
        }
        Density::LogNormal { mu, sigma } => {
            let (z, w) = gauss_hermite_normal(order);
            Some((z.iter().map(|z| (mu + sigma * z).exp()).collect(), w))
        }
        _ => None,
    }
}

/// Tensor product of univariate rules: one node per combination, columns
/// in the order of `rules`.
pub fn tensor_rule(rules: &[(Vec<f64>, Vec<f64>)]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut nodes: Vec<Vec<f64>> = vec![Vec::new()];
    let mut weights = vec![1.0];
    for (xs, ws) in rules {
        let mut next_nodes = Vec::with_capacity(nodes.len() * xs.len());
        let mut next_weights = Vec::with_capacity(nodes.len() * xs.len());
        for (node, w) in nodes.iter().zip(&weights) {
            for (x, wx) in xs.iter().zip(ws) {
                let mut n = node.clone();
                n.push(*x);
                next_nodes.push(n);
                next_weights.push(w * wx);
            }
        }
        nodes = next_nodes;
        weights = next_weights;
    }
    (nodes, weights)
}
