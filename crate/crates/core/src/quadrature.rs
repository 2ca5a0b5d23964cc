//! Gauss-Legendre rules on intervals and polygons.

use crate::polytope::Polytope;

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if m == 1 { z } else { p1 };
            let pm = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if m == 1 {
            x[0] = 0.0;
            w[0] = 2.0;
            break;
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

/// A quadrature rule over P: points `y` (second coordinate unused in 1-D) and weights.
#[derive(Debug, Clone)]
pub struct PolyRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl PolyRule {
    pub fn integrate(&self, f: impl Fn(&[f64; 2]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}

/// Tensor Gauss rule on P: the interval in 1-D, a fan of collapsed squares in 2-D.
/// Exact for polynomials of degree `2m - 2` on each triangle.
pub fn polytope_rule(p: &Polytope, m: usize) -> PolyRule {
    let (x, w) = gauss_legendre(m);
    let vs = p.vertices_f64();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    if p.dim() == 1 {
        let (a, b) = (vs[0][0], vs[1][0]);
        for (xi, wi) in x.iter().zip(&w) {
            points.push([0.5 * (a + b) + 0.5 * (b - a) * xi, 0.0]);
            weights.push(0.5 * (b - a) * wi);
        }
        return PolyRule { points, weights };
    }
    let p0 = vs[0];
    for k in 1..vs.len() - 1 {
        let (p1, p2) = (vs[k], vs[k + 1]);
        let e1 = [p1[0] - p0[0], p1[1] - p0[1]];
        let e2 = [p2[0] - p0[0], p2[1] - p0[1]];
        let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        for (ui, wu) in x.iter().zip(&w) {
            let u = 0.5 * (ui + 1.0);
            for (vi, wv) in x.iter().zip(&w) {
                let v = 0.5 * (vi + 1.0);
                // Duffy map of the unit square onto the reference triangle.
                let (s, r) = (u, v * (1.0 - u));
                points.push([p0[0] + s * e1[0] + r * e2[0], p0[1] + s * e1[1] + r * e2[1]]);
                weights.push(0.25 * wu * wv * (1.0 - u) * jac);
            }
        }
    }
    PolyRule { points, weights }
}

/// Composite Simpson weights on `[0, 1]` with `m` (odd) nodes.
pub fn simpson_weights(m: usize) -> Vec<f64> {
    assert!(m >= 3 && m % 2 == 1, "Simpson needs an odd node count");
    let h = 1.0 / (m - 1) as f64;
    (0..m)
        .map(|i| {
            let c = if i == 0 || i == m - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}
