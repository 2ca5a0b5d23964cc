//! The weight function g on the moment polytope.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::Polytope;
use crate::quadrature::{polytope_rule, PolyRule};

const RULE_ORDER: usize = 24;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Constant,
    /// `g(y) = a + <c, y>`.
    Affine { a: f64, c: [f64; 2] },
    /// `g(y) = exp(<xi, y> - log_norm)`.
    Exponential { xi: [f64; 2], log_norm: f64 },
    /// `g(y) = a + <c, y> + y^T q y`.
    Quadratic { a: f64, c: [f64; 2], q: [[f64; 2]; 2] },
    /// Multilinear interpolation of samples on a tensor grid covering P, times `scale`.
    Tabulated {
        axes: Vec<Vec<f64>>,
        values: Vec<f64>,
        scale: f64,
    },
}

#[derive(Debug, Clone)]
pub struct WeightFunction {
    kind: WeightKind,
    dim: usize,
    polytope: Arc<Polytope>,
}

/// Result of [`WeightFunction::check_log_concavity`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogConcavity {
    pub concave: bool,
    /// Largest second difference of `log g` divided by the squared step.
    pub worst: f64,
    pub at: [f64; 2],
}

fn dot(n: usize, a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (0..n).map(|k| a[k] * b[k]).sum()
}

impl WeightFunction {
    pub fn make_constant(p: Arc<Polytope>) -> Self {
        Self {
            kind: WeightKind::Constant,
            dim: p.dim(),
            polytope: p,
        }
    }

    /// `g(y) = 1 - <c, y - b>` with `b` the barycenter.
    pub fn make_affine(p: Arc<Polytope>, c: [f64; 2]) -> Result<Self> {
        let n = p.dim();
        let b = p.barycenter();
        for v in p.vertices_f64() {
            let g = 1.0 - (0..n).map(|k| c[k] * (v[k] - b[k])).sum::<f64>();
            if g <= 0.0 {
                return Err(Error::WeightNotPositive {
                    at: v[..n].to_vec(),
                    value: g,
                });
            }
        }
        let a = 1.0 + dot(n, &c, &b);
        let mut neg = [0.0; 2];
        for k in 0..n {
            neg[k] = -c[k];
        }
        Ok(Self {
            kind: WeightKind::Affine { a, c: neg },
            dim: n,
            polytope: p,
        })
    }

    /// Quadratic weight rescaled so that `int_P (g - 1) = 0`.
    pub fn make_quadratic(p: Arc<Polytope>, a: f64, c: [f64; 2], q: [[f64; 2]; 2]) -> Result<Self> {
        let raw = Self {
            kind: WeightKind::Quadratic { a, c, q },
            dim: p.dim(),
            polytope: p.clone(),
        };
        let s = p.volume() / raw.integral();
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidWeight("quadratic weight has non-positive integral".into()));
        }
        let scaled = Self {
            kind: WeightKind::Quadratic {
                a: a * s,
                c: [c[0] * s, c[1] * s],
                q: [[q[0][0] * s, q[0][1] * s], [q[1][0] * s, q[1][1] * s]],
            },
            dim: p.dim(),
            polytope: p,
        };
        scaled.check_positive()?;
        Ok(scaled)
    }

    /// Kahler-Ricci soliton weight `V e^{<xi*,y>} / int_P e^{<xi*,y>}` where xi*
    /// minimizes `int_P e^{<xi,y>}`.
    pub fn make_kr(p: Arc<Polytope>) -> Result<Self> {
        let n = p.dim();
        let rule = polytope_rule(&p, RULE_ORDER);
        let mut xi = [0.0; 2];
        let mut converged = false;
        for _ in 0..60 {
            let (z, grad, hess) = exp_moments(n, &rule, &xi);
            let gn = (0..n).map(|k| grad[k] * grad[k]).sum::<f64>().sqrt();
            if gn <= 1e-12 * z || converged {
                let log_norm = (z / p.volume()).ln();
                return Ok(Self {
                    kind: WeightKind::Exponential { xi, log_norm },
                    dim: n,
                    polytope: p,
                });
            }
            let step = solve_sym(n, &hess, &grad);
            let size = (0..n).map(|k| step[k] * step[k]).sum::<f64>().sqrt();
            if size <= 1e-14 * (1.0 + (0..n).map(|k| xi[k] * xi[k]).sum::<f64>().sqrt()) {
                xi = [xi[0] - step[0], xi[1] - step[1]];
                converged = true;
                continue;
            }
            // The objective is strictly convex; damp only to stay in the region
            // of trust. Near the minimum the decrease is below rounding.
            let mut t = 1.0;
            let f0 = z * (1.0 + 1e-14);
            loop {
                let trial = [xi[0] - t * step[0], xi[1] - t * step[1]];
                let (zt, _, _) = exp_moments(n, &rule, &trial);
                if zt <= f0 || t < 1e-8 {
                    xi = trial;
                    break;
                }
                t *= 0.5;
            }
        }
        Err(Error::NoConvergence("soliton vector field minimization".into()))
    }

    /// Tabulated weight from samples on a tensor grid (1 or 2 axes), rescaled to
    /// satisfy the normalization.
    pub fn make_tabulated(p: Arc<Polytope>, axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let n = p.dim();
        if axes.len() != n {
            return Err(Error::InvalidWeight(format!("expected {n} axes, got {}", axes.len())));
        }
        let count: usize = axes.iter().map(|a| a.len()).product();
        if count != values.len() || axes.iter().any(|a| a.len() < 2) {
            return Err(Error::InvalidWeight("sample count does not match the axes".into()));
        }
        if axes.iter().any(|a| a.windows(2).any(|w| w[1] <= w[0])) {
            return Err(Error::InvalidWeight("axes must be strictly increasing".into()));
        }
        let vs = p.vertices_f64();
        for k in 0..n {
            let lo = vs.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min);
            let hi = vs.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
            if axes[k][0] > lo + 1e-12 || *axes[k].last().unwrap() < hi - 1e-12 {
                return Err(Error::InvalidWeight(format!("axis {k} does not cover P")));
            }
        }
        if values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidWeight("tabulated values must be positive".into()));
        }
        let raw = Self {
            kind: WeightKind::Tabulated {
                axes: axes.clone(),
                values: values.clone(),
                scale: 1.0,
            },
            dim: n,
            polytope: p.clone(),
        };
        let scale = p.volume() / raw.integral();
        Ok(Self {
            kind: WeightKind::Tabulated { axes, values, scale },
            dim: n,
            polytope: p,
        })
    }

    /// Parses a tabulated weight file. 1-D: `y g` rows. 2-D: a header line
    /// `grid n0 n1`, then `n0*n1` rows `y0 y1 g` with y1 varying fastest.
    pub fn from_table_text(p: Arc<Polytope>, text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty() && !l.starts_with("grid"))
            .map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| Error::InvalidWeight(format!("{e}: `{l}`"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        match p.dim() {
            1 => {
                if rows.iter().any(|r| r.len() != 2) {
                    return Err(Error::InvalidWeight("1-D table rows must be `y g`".into()));
                }
                let ys = rows.iter().map(|r| r[0]).collect();
                let gs = rows.iter().map(|r| r[1]).collect();
                Self::make_tabulated(p, vec![ys], gs)
            }
            _ => {
                let header = text
                    .lines()
                    .find(|l| l.trim_start().starts_with("grid"))
                    .ok_or_else(|| Error::InvalidWeight("2-D table needs a `grid n0 n1` header".into()))?;
                let dims: Vec<usize> = header
                    .split_whitespace()
                    .skip(1)
                    .map(|t| t.parse().map_err(|e| Error::InvalidWeight(format!("{e}"))))
                    .collect::<Result<_>>()?;
                if dims.len() != 2 || rows.len() != dims[0] * dims[1] || rows.iter().any(|r| r.len() != 3) {
                    return Err(Error::InvalidWeight("2-D table shape mismatch".into()));
                }
                let a0 = (0..dims[0]).map(|i| rows[i * dims[1]][0]).collect();
                let a1 = (0..dims[1]).map(|j| rows[j][1]).collect();
                let vals = rows.iter().map(|r| r[2]).collect();
                Self::make_tabulated(p, vec![a0, a1], vals)
            }
        }
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn polytope(&self) -> &Arc<Polytope> {
        &self.polytope
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, WeightKind::Constant)
    }

    pub fn eval(&self, y: &[f64; 2]) -> f64 {
        let n = self.dim;
        match &self.kind {
            WeightKind::Constant => 1.0,
            WeightKind::Affine { a, c } => a + dot(n, c, y),
            WeightKind::Exponential { xi, log_norm } => (dot(n, xi, y) - log_norm).exp(),
            WeightKind::Quadratic { a, c, q } => {
                let mut v = a + dot(n, c, y);
                for i in 0..n {
                    for j in 0..n {
                        v += q[i][j] * y[i] * y[j];
                    }
                }
                v
            }
            WeightKind::Tabulated { axes, values, scale } => scale * interp(axes, values, y).0,
        }
    }

    /// `(log g(y), grad_y log g(y))`.
    pub fn log_and_grad(&self, y: &[f64; 2]) -> (f64, [f64; 2]) {
        let n = self.dim;
        match &self.kind {
            WeightKind::Constant => (0.0, [0.0; 2]),
            WeightKind::Affine { c, .. } => {
                let g = self.eval(y);
                (g.ln(), [c[0] / g, if n > 1 { c[1] / g } else { 0.0 }])
            }
            WeightKind::Exponential { xi, log_norm } => (dot(n, xi, y) - log_norm, [xi[0], if n > 1 { xi[1] } else { 0.0 }]),
            WeightKind::Quadratic { c, q, .. } => {
                let g = self.eval(y);
                let mut gr = [0.0; 2];
                for i in 0..n {
                    gr[i] = c[i];
                    for j in 0..n {
                        gr[i] += (q[i][j] + q[j][i]) * y[j];
                    }
                    gr[i] /= g;
                }
                (g.ln(), gr)
            }
            WeightKind::Tabulated { axes, values, scale } => {
                let (v, d) = interp(axes, values, y);
                let g = scale * v;
                let mut gr = [0.0; 2];
                for i in 0..n {
                    gr[i] = scale * d[i] / g;
                }
                (g.ln(), gr)
            }
        }
    }

    /// `int_P g dy` by high-order quadrature (exact for polynomial kinds).
    pub fn integral(&self) -> f64 {
        let rule = polytope_rule(&self.polytope, RULE_ORDER);
        rule.integrate(|y| self.eval(y))
    }

    /// `int_P y g dy / int_P g dy`. It vanishes exactly when the g-twisted
    /// Futaki invariant does.
    pub fn weighted_barycenter(&self) -> [f64; 2] {
        let rule = polytope_rule(&self.polytope, RULE_ORDER);
        let z = rule.integrate(|y| self.eval(y));
        let mut b = [0.0; 2];
        for (a, v) in b.iter_mut().enumerate().take(self.dim) {
            *v = rule.integrate(|y| y[a] * self.eval(y)) / z;
        }
        b
    }

    /// `int_P (g - 1) dy`.
    pub fn normalization_defect(&self) -> f64 {
        match &self.kind {
            WeightKind::Constant => 0.0,
            _ => self.integral() - self.polytope.volume(),
        }
    }

    fn samples(&self, per_axis: usize) -> Vec<[f64; 2]> {
        let p = &self.polytope;
        let vs = p.vertices_f64();
        let mut pts: Vec<[f64; 2]> = vs.clone();
        let n = p.dim();
        let lo: Vec<f64> = (0..n).map(|k| vs.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min)).collect();
        let hi: Vec<f64> = (0..n).map(|k| vs.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
        let m = per_axis.max(2);
        let coord = |k: usize, i: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / (m - 1) as f64;
        if n == 1 {
            pts.extend((0..m).map(|i| [coord(0, i), 0.0]));
        } else {
            for i in 0..m {
                for j in 0..m {
                    let y = [coord(0, i), coord(1, j)];
                    if p.contains(&y, 1e-12) {
                        pts.push(y);
                    }
                }
            }
            // Edge samples so that boundary minima are seen for every kind.
            for k in 0..vs.len() {
                let (a, b) = (vs[k], vs[(k + 1) % vs.len()]);
                for i in 1..m {
                    let s = i as f64 / m as f64;
                    pts.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
                }
            }
        }
        pts
    }

    /// `inf_P g`: exact over vertices for affine weights, sampled otherwise.
    pub fn inf_on_p(&self) -> f64 {
        match &self.kind {
            WeightKind::Constant => 1.0,
            WeightKind::Affine { .. } | WeightKind::Exponential { .. } => self
                .polytope
                .vertices_f64()
                .iter()
                .map(|v| self.eval(v))
                .fold(f64::INFINITY, f64::min),
            _ => self.samples(201).iter().map(|y| self.eval(y)).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn sup_on_p(&self) -> f64 {
        match &self.kind {
            WeightKind::Constant => 1.0,
            WeightKind::Affine { .. } | WeightKind::Exponential { .. } => self
                .polytope
                .vertices_f64()
                .iter()
                .map(|v| self.eval(v))
                .fold(f64::NEG_INFINITY, f64::max),
            _ => self.samples(201).iter().map(|y| self.eval(y)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `sup_P (1 - g)`, the Mabuchi constant of this weight.
    pub fn mabuchi_constant(&self) -> f64 {
        1.0 - self.inf_on_p()
    }

    fn check_positive(&self) -> Result<()> {
        for y in self.samples(101) {
            let g = self.eval(&y);
            if !(g > 0.0) {
                return Err(Error::WeightNotPositive {
                    at: y[..self.dim].to_vec(),
                    value: g,
                });
            }
        }
        Ok(())
    }

    /// Axis second differences of `log g` on a sample grid inside P.
    pub fn check_log_concavity(&self, samples: usize) -> LogConcavity {
        let p = &self.polytope;
        let n = p.dim();
        let vs = p.vertices_f64();
        let m = samples.max(2);
        let lo: Vec<f64> = (0..n).map(|k| vs.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min)).collect();
        let hi: Vec<f64> = (0..n).map(|k| vs.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
        let step: Vec<f64> = (0..n).map(|k| (hi[k] - lo[k]) / (m - 1) as f64).collect();
        let lg = |y: &[f64; 2]| self.log_and_grad(y).0;
        let mut worst = f64::NEG_INFINITY;
        let mut at = [0.0; 2];
        let mut seen = false;
        let idx: Vec<[usize; 2]> = if n == 1 {
            (0..m).map(|i| [i, 0]).collect()
        } else {
            (0..m).flat_map(|i| (0..m).map(move |j| [i, j])).collect()
        };
        for ij in idx {
            let y = [lo[0] + ij[0] as f64 * step[0], if n > 1 { lo[1] + ij[1] as f64 * step[1] } else { 0.0 }];
            for k in 0..n {
                let mut a = y;
                let mut b = y;
                a[k] -= step[k];
                b[k] += step[k];
                if !(p.contains(&a, 1e-12) && p.contains(&b, 1e-12)) {
                    continue;
                }
                let d2 = (lg(&a) - 2.0 * lg(&y) + lg(&b)) / (step[k] * step[k]);
                seen = true;
                if d2 > worst {
                    worst = d2;
                    at = y;
                }
            }
        }
        if !seen {
            worst = 0.0;
        }
        if worst.abs() < 1e-10 {
            worst = 0.0;
        }
        LogConcavity {
            concave: worst <= 1e-10,
            worst,
            at,
        }
    }

    /// Compact description used in records.
    pub fn label(&self) -> String {
        match &self.kind {
            WeightKind::Constant => "constant".into(),
            WeightKind::Affine { .. } => "affine".into(),
            WeightKind::Exponential { .. } => "exponential".into(),
            WeightKind::Quadratic { .. } => "quadratic".into(),
            WeightKind::Tabulated { .. } => "tabulated".into(),
        }
    }

    /// Rebuilds a weight from its serialized kind.
    pub fn from_kind(p: Arc<Polytope>, kind: WeightKind) -> Self {
        Self {
            dim: p.dim(),
            kind,
            polytope: p,
        }
    }
}

fn exp_moments(n: usize, rule: &PolyRule, xi: &[f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let mut z = 0.0;
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for (y, w) in rule.points.iter().zip(&rule.weights) {
        let e = w * dot(n, xi, y).exp();
        z += e;
        for a in 0..n {
            g[a] += e * y[a];
            for b in 0..n {
                h[a][b] += e * y[a] * y[b];
            }
        }
    }
    (z, g, h)
}

fn solve_sym(n: usize, h: &[[f64; 2]; 2], g: &[f64; 2]) -> [f64; 2] {
    if n == 1 {
        return [g[0] / h[0][0], 0.0];
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    [
        (h[1][1] * g[0] - h[0][1] * g[1]) / det,
        (h[0][0] * g[1] - h[1][0] * g[0]) / det,
    ]
}

fn locate(axis: &[f64], y: f64) -> (usize, f64) {
    let k = axis.len();
    let y = y.clamp(axis[0], axis[k - 1]);
    let i = match axis.partition_point(|a| *a <= y) {
        0 => 0,
        j => (j - 1).min(k - 2),
    };
    (i, (y - axis[i]) / (axis[i + 1] - axis[i]))
}

/// Multilinear interpolant and its gradient (clamped outside the table).
fn interp(axes: &[Vec<f64>], values: &[f64], y: &[f64; 2]) -> (f64, [f64; 2]) {
    if axes.len() == 1 {
        let (i, s) = locate(&axes[0], y[0]);
        let (a, b) = (values[i], values[i + 1]);
        let d = (b - a) / (axes[0][i + 1] - axes[0][i]);
        return (a + s * (b - a), [d, 0.0]);
    }
    let n1 = axes[1].len();
    let (i, s) = locate(&axes[0], y[0]);
    let (j, r) = locate(&axes[1], y[1]);
    let v = |a: usize, b: usize| values[a * n1 + b];
    let (v00, v01, v10, v11) = (v(i, j), v(i, j + 1), v(i + 1, j), v(i + 1, j + 1));
    let val = (1.0 - s) * (1.0 - r) * v00 + (1.0 - s) * r * v01 + s * (1.0 - r) * v10 + s * r * v11;
    let h0 = axes[0][i + 1] - axes[0][i];
    let h1 = axes[1][j + 1] - axes[1][j];
    let d0 = ((1.0 - r) * (v10 - v00) + r * (v11 - v01)) / h0;
    let d1 = ((1.0 - s) * (v01 - v00) + s * (v11 - v10)) / h1;
    (val, [d0, d1])
}
