//! Discrete operators: the residual of the continuity equation, its exact
//! Jacobian, and the symmetric divergence-form twisted Laplacian.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Factorization, SparseMatrix, TripletBuilder};
use crate::toricfield::{Geometry, Model, PotentialField, Sym};
use crate::weights::WeightFunction;

/// Nodal masses `q_k g(grad w_k) det D^2 w_k` of the weighted Monge-Ampere
/// measure and their total `V_g`.
pub fn weighted_mass(model: &Model, geo: &Geometry, g: &WeightFunction) -> (Vec<f64>, f64) {
    let gd: Vec<f64> = (0..model.grid.len())
        .map(|k| model.quad[k] * g.eval(&geo.grad[k]) * geo.det[k])
        .collect();
    let total = gd.iter().sum();
    (gd, total)
}

/// `R_t = log g(grad w) + log det D^2 w + t phi + w_0 - c_0 - log(V_g / V)`.
///
/// The last term is the discrete mass of `MA_g(phi)` relative to the reference
/// mass; it vanishes for the continuum problem and keeps the discrete equation
/// compatible with its own integral, so the additive gauge of `phi` stays fixed
/// by `int e^{-t phi + rho_0} MA(0) = 1` as `t -> 0`.
pub fn residual(f: &PotentialField, geo: &Geometry, g: &WeightFunction, t: f64) -> Result<Vec<f64>> {
    let m = f.model();
    let (_, vg) = weighted_mass(m, geo, g);
    let shift = (vg / m.volume).ln();
    (0..m.grid.len())
        .into_par_iter()
        .map(|k| {
            let gv = g.eval(&geo.grad[k]);
            if !(gv > 0.0) {
                return Err(Error::WeightDomain { node: k });
            }
            Ok(gv.ln() + geo.det[k].ln() + t * f.phi(k) + m.w0[k] - m.c0 - shift)
        })
        .collect()
}

/// Exact Jacobian of [`residual`] with respect to the node values of `phi`:
/// `tr(H^{-1} D^2 u) + <grad_y log g, D u> + t u` on the same stencils.
pub fn jacobian(model: &Model, geo: &Geometry, g: &WeightFunction, t: f64) -> Result<SparseMatrix> {
    let grid = &model.grid;
    let n = grid.n;
    let h = grid.h;
    let h2 = h * h;
    let mut tb = TripletBuilder::with_capacity(grid.len(), grid.len() * if n == 1 { 3 } else { 9 });
    for k in 0..grid.len() {
        let hinv: Sym = geo.hess[k].inv(n);
        let gl = g.log_and_grad(&geo.grad[k]).1;
        let [i, j] = grid.ij(k);
        let (i, j) = (i as isize, j as isize);
        let at = |a: isize, b: isize| grid.index(grid.reflect(a), grid.reflect(b));
        tb.push(k, k, t);
        if n == 1 {
            let (l, r) = (at(i - 1, 0), at(i + 1, 0));
            tb.push(k, r, hinv.a / h2 + gl[0] / (2.0 * h));
            tb.push(k, l, hinv.a / h2 - gl[0] / (2.0 * h));
            tb.push(k, k, -2.0 * hinv.a / h2);
            continue;
        }
        let (p, r, s) = (hinv.a, hinv.b, hinv.c);
        tb.push(k, at(i + 1, j), p / h2 + gl[0] / (2.0 * h));
        tb.push(k, at(i - 1, j), p / h2 - gl[0] / (2.0 * h));
        tb.push(k, at(i, j + 1), s / h2 + gl[1] / (2.0 * h));
        tb.push(k, at(i, j - 1), s / h2 - gl[1] / (2.0 * h));
        tb.push(k, k, -2.0 * (p + s) / h2);
        let c = 2.0 * r / (4.0 * h2);
        tb.push(k, at(i + 1, j + 1), c);
        tb.push(k, at(i - 1, j - 1), c);
        tb.push(k, at(i + 1, j - 1), -c);
        tb.push(k, at(i - 1, j + 1), -c);
    }
    tb.build()
}

/// Newton system of [`residual`]: the sparse Jacobian plus its rank-one mass
/// term, `M = J_t + 1 v^T` with `v = -J_0^T m` and `m_k = q_k g_k det_k / V_g`.
/// The normalized `t = 0` problem adds the gradient of `E_g`,
/// `q_k g_k det_k / V`, to `v`.
///
/// `M` is factored as a rank-one update of a sparse matrix `P` (Sherman-Morrison):
/// `P = J_t` for `t > 0`, and `P = J_0 + 1 e_p^T` at `t = 0`, where the extra
/// column at the center node `p` removes the constant kernel of `J_0`.
pub struct NewtonSystem {
    base: SparseMatrix,
    lu: Factorization,
    /// `M = P + 1 a^T`.
    a: Vec<f64>,
    /// `P^{-1} 1` and `1 + a^T P^{-1} 1`.
    z: Vec<f64>,
    denom: f64,
}

impl NewtonSystem {
    pub fn new(model: &Model, geo: &Geometry, g: &WeightFunction, t: f64, normalized: bool) -> Result<Self> {
        let len = model.grid.len();
        let jt = jacobian(model, geo, g, t)?;
        let (gd, vg) = weighted_mass(model, geo, g);
        let mvec: Vec<f64> = gd.iter().map(|x| x / vg).collect();
        // J_0^T m = J_t^T m - t m.
        let jtm = jt.apply_transpose(&mvec);
        let mut a: Vec<f64> = (0..len)
            .map(|k| {
                let mut v = -(jtm[k] - t * mvec[k]);
                if normalized {
                    v += gd[k] / model.volume;
                }
                v
            })
            .collect();
        let base = if t == 0.0 {
            let p = len / 2;
            let mut tb = jt.to_builder(len);
            for k in 0..len {
                tb.push(k, p, 1.0);
            }
            a[p] -= 1.0;
            tb.build()?
        } else {
            jt
        };
        let lu = base.factor()?;
        let z = lu.solve(&vec![1.0; len])?;
        let denom = 1.0 + dot(&a, &z);
        if !(denom.abs() > 1e-14) || !denom.is_finite() {
            return Err(Error::Linear("singular rank-one update".into()));
        }
        Ok(Self { base, lu, a, z, denom })
    }

    /// `M x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let ax = dot(&self.a, x);
        self.base.apply(x).iter().map(|v| v + ax).collect()
    }

    fn raw_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let y = self.lu.solve(b)?;
        let c = dot(&self.a, &y) / self.denom;
        Ok(y.iter().zip(&self.z).map(|(yi, zi)| yi - c * zi).collect())
    }

    /// Solution of `M x = b` after one refinement step, with the relative
    /// residual `|M x - b| / |b|` in max norm.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut x = self.raw_solve(b)?;
        let r: Vec<f64> = b.iter().zip(self.apply(&x)).map(|(bi, ai)| bi - ai).collect();
        let dx = self.raw_solve(&r)?;
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let rn = b.iter().zip(self.apply(&x)).fold(0.0f64, |m, (bi, ai)| m.max((bi - ai).abs()));
        Ok((x, rn / bn))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Divergence-form twisted Laplacian `(1/(g det H)) div(g cof(H) grad u)`.
///
/// Returns the stiffness matrix `K` (symmetric positive semidefinite, constants
/// in its kernel) and lumped mass weights `M_k = quad_k g det_k`, so that the
/// operator is `-M^{-1} K`. Assembly: linear finite elements on both diagonal
/// splittings of every grid cell, averaged, with `g cof(H)` averaged per triangle.
pub struct TwistedLaplacian {
    pub stiffness: SparseMatrix,
    pub mass: Vec<f64>,
}

impl TwistedLaplacian {
    /// `Delta_g u` at every node.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let ku = self.stiffness.apply(u);
        ku.iter().zip(&self.mass).map(|(a, m)| -a / m).collect()
    }

    /// `<a, b>` in the lumped weighted inner product.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.mass).map(|((x, y), m)| x * y * m).sum()
    }
}

pub fn assemble_twisted_laplacian(model: &Model, geo: &Geometry, g: &WeightFunction) -> Result<TwistedLaplacian> {
    let grid = &model.grid;
    let n = grid.n;
    let h = grid.h;
    let gv: Vec<f64> = geo.grad.iter().map(|y| g.eval(y)).collect();
    let coef: Vec<Sym> = geo.hess.iter().zip(&gv).map(|(hs, gk)| hs.cof(n).scale(*gk)).collect();
    let mass: Vec<f64> = (0..grid.len()).map(|k| model.quad[k] * gv[k] * geo.det[k]).collect();
    let mut tb = TripletBuilder::with_capacity(grid.len(), grid.len() * 9);
    if n == 1 {
        for i in 0..grid.npts - 1 {
            let a = 0.5 * (coef[i].a + coef[i + 1].a);
            if !(a > 0.0) {
                return Err(Error::Convexity {
                    node: i,
                    x: vec![grid.coord(i)],
                    eig: a,
                });
            }
            let v = a / h;
            tb.push(i, i, v);
            tb.push(i + 1, i + 1, v);
            tb.push(i, i + 1, -v);
            tb.push(i + 1, i, -v);
        }
    } else {
        for i in 0..grid.npts - 1 {
            for j in 0..grid.npts - 1 {
                let c00 = grid.index(i, j);
                let c10 = grid.index(i + 1, j);
                let c01 = grid.index(i, j + 1);
                let c11 = grid.index(i + 1, j + 1);
                let tris = [
                    [c00, c10, c11],
                    [c00, c11, c01],
                    [c00, c10, c01],
                    [c10, c11, c01],
                ];
                for tri in tris {
                    add_triangle(&mut tb, grid, &coef, tri, 0.5)?;
                }
            }
        }
    }
    Ok(TwistedLaplacian {
        stiffness: tb.build()?,
        mass,
    })
}

fn add_triangle(
    tb: &mut TripletBuilder,
    grid: &crate::toricfield::Grid,
    coef: &[Sym],
    tri: [usize; 3],
    factor: f64,
) -> Result<()> {
    let pts: Vec<[f64; 2]> = tri.iter().map(|k| grid.point(*k)).collect();
    let a = Sym::new(
        tri.iter().map(|k| coef[*k].a).sum::<f64>() / 3.0,
        tri.iter().map(|k| coef[*k].b).sum::<f64>() / 3.0,
        tri.iter().map(|k| coef[*k].c).sum::<f64>() / 3.0,
    );
    if !(a.det(2) > 0.0 && a.a > 0.0) {
        return Err(Error::Convexity {
            node: tri[0],
            x: pts[0].to_vec(),
            eig: a.eigenvalues(2).0,
        });
    }
    let det = (pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1]) - (pts[2][0] - pts[0][0]) * (pts[1][1] - pts[0][1]);
    let area = 0.5 * det.abs();
    // Gradients of the barycentric coordinates.
    let grads: Vec<[f64; 2]> = (0..3)
        .map(|v| {
            let (p, q) = (pts[(v + 1) % 3], pts[(v + 2) % 3]);
            [(p[1] - q[1]) / det, (q[0] - p[0]) / det]
        })
        .collect();
    for r in 0..3 {
        let ag = a.apply(&grads[r], 2);
        for c in 0..3 {
            let v = factor * area * (ag[0] * grads[c][0] + ag[1] * grads[c][1]);
            tb.push(tri[r], tri[c], v);
        }
    }
    Ok(())
}
