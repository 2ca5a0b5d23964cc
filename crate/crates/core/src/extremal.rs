//! Extremal vector field by L^2(MA) projection of `1 - e^rho` onto the
//! coordinate Hamiltonians, and the Mabuchi constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::Polytope;
use crate::toricfield::{Geometry, PotentialField};
use crate::weights::WeightFunction;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExtremalField {
    /// Coefficients of `l(y) = <eta, y - b>`.
    pub eta: Vec<f64>,
    /// Centre of the Hamiltonians: the discrete image barycenter for a field,
    /// the barycenter of P for the continuum value.
    pub barycenter: Vec<f64>,
    /// `l` at each vertex of P.
    pub vertex_values: Vec<f64>,
    /// `max_P l`.
    pub m_x: f64,
    /// `|| h - sum eta_a theta_a ||` in `L^2(MA)`, with `h = 1 - e^rho`.
    pub residual: f64,
}

impl ExtremalField {
    pub fn covector(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        c[..self.eta.len()].copy_from_slice(&self.eta);
        c
    }

    /// The Mabuchi weight `g = 1 - l`.
    pub fn mabuchi_weight(&self, p: std::sync::Arc<Polytope>) -> Result<WeightFunction> {
        WeightFunction::make_affine(p, self.covector())
    }
}

fn vertex_summary(p: &Polytope, eta: &[f64]) -> (Vec<f64>, f64) {
    let b = p.barycenter();
    let vals: Vec<f64> = p
        .vertices_f64()
        .iter()
        .map(|v| eta.iter().enumerate().map(|(k, e)| e * (v[k] - b[k])).sum())
        .collect();
    let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (vals, mx)
}

pub fn extremal_field(f: &PotentialField, geo: &Geometry) -> Result<ExtremalField> {
    let m = f.model();
    let n = m.n();
    let rho = f.ricci_potential(geo).rho;
    // Centre the coordinate Hamiltonians on the discrete measure so they are
    // orthogonal to constants, as `h = 1 - e^rho` is.
    let mut b = [0.0; 2];
    let mut mass = 0.0;
    for k in 0..m.grid.len() {
        let wgt = m.quad[k] * geo.det[k];
        mass += wgt;
        for (a, v) in b.iter_mut().enumerate().take(n) {
            *v += wgt * geo.grad[k][a];
        }
    }
    for v in b.iter_mut() {
        *v /= mass;
    }
    let mut gram = [[0.0; 2]; 2];
    let mut rhs = [0.0; 2];
    let mut hh = 0.0;
    for k in 0..m.grid.len() {
        let wgt = m.quad[k] * geo.det[k] / m.volume;
        let th = [geo.grad[k][0] - b[0], geo.grad[k][1] - b[1]];
        let h = 1.0 - rho[k].exp();
        hh += wgt * h * h;
        for a in 0..n {
            rhs[a] += wgt * th[a] * h;
            for c in 0..n {
                gram[a][c] += wgt * th[a] * th[c];
            }
        }
    }
    let eta: Vec<f64> = if n == 1 {
        if gram[0][0] <= 0.0 {
            return Err(Error::SingularGram);
        }
        vec![rhs[0] / gram[0][0]]
    } else {
        let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
        if det <= 1e-14 * (gram[0][0] * gram[1][1]).abs() || det <= 0.0 {
            return Err(Error::SingularGram);
        }
        vec![
            (gram[1][1] * rhs[0] - gram[0][1] * rhs[1]) / det,
            (gram[0][0] * rhs[1] - gram[1][0] * rhs[0]) / det,
        ]
    };
    // |h - P h|^2 = |h|^2 - <eta, m>.
    let proj: f64 = (0..n).map(|a| eta[a] * rhs[a]).sum();
    let (vertex_values, m_x) = vertex_summary(&m.polytope, &eta);
    Ok(ExtremalField {
        eta,
        barycenter: b[..n].to_vec(),
        vertex_values,
        m_x,
        residual: (hh - proj).max(0.0).sqrt(),
    })
}

/// Closed-form continuum value: the projection of `1 - e^rho` equals
/// `Cov(P)^{-1} b` for every metric.
pub fn continuum_extremal(p: &Polytope) -> ExtremalField {
    let n = p.dim();
    let cov = p.affine_moments().covariance();
    let b = p.barycenter();
    let eta = if n == 1 {
        vec![b[0] / cov[0]]
    } else {
        let det = cov[0] * cov[3] - cov[1] * cov[2];
        vec![(cov[3] * b[0] - cov[1] * b[1]) / det, (cov[0] * b[1] - cov[2] * b[0]) / det]
    };
    let (vertex_values, m_x) = vertex_summary(p, &eta);
    ExtremalField {
        eta,
        barycenter: b[..n].to_vec(),
        vertex_values,
        m_x,
        residual: f64::NAN,
    }
}

/// `sup_P (1 - g)`.
pub fn mabuchi_constant(g: &WeightFunction) -> f64 {
    g.mabuchi_constant()
}
