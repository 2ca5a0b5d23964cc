use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::operator::assemble_twisted_laplacian;
use crate::error::Result;
use crate::linalg::symmetric_eigen;
use crate::toricfield::{Geometry, PotentialField};
use crate::weights::WeightFunction;

const BLOCK: usize = 4;
const MAX_ITERS: usize = 300;
const TARGET: f64 = 1e-8;
const SHIFT: f64 = 0.1;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Lambda1 {
    /// Largest nonzero eigenvalue of the twisted Laplacian (negative).
    pub lambda1: f64,
    /// Relative eigen-residual `|K v - mu M v|_{M^-1} / (mu |v|_M)`.
    pub residual: f64,
    pub iterations: usize,
    pub reliable: bool,
}

fn m_dot(a: &[f64], b: &[f64], m: &[f64]) -> f64 {
    a.iter().zip(b).zip(m).map(|((x, y), w)| x * y * w).sum()
}

/// Orthonormalize `vecs` in the M inner product against the constants and each
/// other (two passes of modified Gram-Schmidt); drops dependent vectors.
fn orthonormalize(vecs: &mut Vec<Vec<f64>>, m: &[f64]) {
    let total: f64 = m.iter().sum();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vecs.drain(..) {
        for _ in 0..2 {
            let mean = m_dot(&v, &vec![1.0; v.len()], m) / total;
            v.iter_mut().for_each(|x| *x -= mean);
            for u in &out {
                let c = m_dot(&v, u, m);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nrm = m_dot(&v, &v, m).sqrt();
        if nrm > 1e-300 && nrm.is_finite() {
            v.iter_mut().for_each(|x| *x /= nrm);
            out.push(v);
        }
    }
    *vecs = out;
}

/// Largest nonzero eigenvalue of the weighted twisted Laplacian on the
/// mean-zero subspace, by shift-inverted block iteration with Rayleigh-Ritz.
pub fn lambda1_estimate(f: &PotentialField, geo: &Geometry, g: &WeightFunction) -> Result<Lambda1> {
    let model = f.model();
    let op = assemble_twisted_laplacian(model, geo, g)?;
    let len = model.grid.len();
    let m = &op.mass;
    let mut tb = op.stiffness.to_builder(len);
    for k in 0..len {
        tb.push(k, k, SHIFT * m[k]);
    }
    let shifted = tb.build()?;
    let lu = shifted.factor()?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = model.n();
    let mut block: Vec<Vec<f64>> = (0..n).map(|a| geo.grad.iter().map(|y| y[a]).collect()).collect();
    while block.len() < BLOCK {
        block.push((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    orthonormalize(&mut block, m);

    let mut best = Lambda1 {
        lambda1: f64::NAN,
        residual: f64::INFINITY,
        iterations: 0,
        reliable: false,
    };
    for it in 1..=MAX_ITERS {
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(block.len());
        for v in &block {
            let rhs: Vec<f64> = v.iter().zip(m).map(|(x, w)| x * w).collect();
            next.push(lu.solve(&rhs)?);
        }
        orthonormalize(&mut next, m);
        let k = next.len();
        if k == 0 {
            break;
        }
        let kv: Vec<Vec<f64>> = next.iter().map(|v| op.stiffness.apply(v)).collect();
        let mut small = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                small[a * k + b] = next[a].iter().zip(&kv[b]).map(|(x, y)| x * y).sum();
            }
        }
        for a in 0..k {
            for b in 0..a {
                let s = 0.5 * (small[a * k + b] + small[b * k + a]);
                small[a * k + b] = s;
                small[b * k + a] = s;
            }
        }
        let (vals, vecs) = symmetric_eigen(&small, k);
        let mut rotated: Vec<Vec<f64>> = (0..k)
            .map(|c| {
                let mut v = vec![0.0; len];
                for a in 0..k {
                    let coef = vecs[a * k + c];
                    v.iter_mut().zip(&next[a]).for_each(|(x, y)| *x += coef * y);
                }
                v
            })
            .collect();
        let mu = vals[0];
        let v0 = &rotated[0];
        let kv0 = op.stiffness.apply(v0);
        let res2: f64 = (0..len).map(|i| (kv0[i] - mu * m[i] * v0[i]).powi(2) / m[i]).sum();
        let rel = res2.sqrt() / mu.abs().max(1e-300);
        best = Lambda1 {
            lambda1: -mu,
            residual: rel,
            iterations: it,
            reliable: rel <= TARGET,
        };
        if rel <= TARGET {
            break;
        }
        block = std::mem::take(&mut rotated);
    }
    Ok(best)
}
