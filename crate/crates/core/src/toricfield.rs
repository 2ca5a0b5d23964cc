//! Torus-invariant potentials sampled on a box in log coordinates.
//!
//! The total potential is `w = w_0 + phi`. `phi` is stored as an unevaluated
//! sum `hi + lo` so that second differences keep full relative accuracy where
//! the Hessian of `w` is exponentially small (near the corners of the box).
//! The truncation boundary carries a reflecting (zero normal derivative)
//! condition.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::Polytope;
use crate::weights::WeightFunction;

/// Tensor grid on `[-R, R]^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub r: f64,
    pub npts: usize,
    pub h: f64,
}

impl Grid {
    pub fn new(n: usize, r: f64, npts: usize) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::InvalidGrid(format!("dimension {n} not supported")));
        }
        if npts < 17 || npts % 2 == 0 {
            return Err(Error::InvalidGrid(format!("N = {npts} must be odd and at least 17")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidGrid(format!("box half-width {r} must be positive")));
        }
        Ok(Self {
            n,
            r,
            npts,
            h: 2.0 * r / (npts - 1) as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.npts.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.r + i as f64 * self.h
    }

    /// Axis indices of node `k` (second entry 0 in 1-D).
    pub fn ij(&self, k: usize) -> [usize; 2] {
        if self.n == 1 {
            [k, 0]
        } else {
            [k / self.npts, k % self.npts]
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.n == 1 {
            i
        } else {
            i * self.npts + j
        }
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        let [i, j] = self.ij(k);
        [self.coord(i), if self.n == 2 { self.coord(j) } else { 0.0 }]
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let last = self.npts - 1;
        let [i, j] = self.ij(k);
        i == 0 || i == last || (self.n == 2 && (j == 0 || j == last))
    }

    /// Distance (in nodes) to the nearest boundary node.
    pub fn depth(&self, k: usize) -> usize {
        let last = self.npts - 1;
        let [i, j] = self.ij(k);
        let d = i.min(last - i);
        if self.n == 2 {
            d.min(j.min(last - j))
        } else {
            d
        }
    }

    /// Trapezoid weights of the product rule.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let w1: Vec<f64> = (0..self.npts)
            .map(|i| if i == 0 || i == self.npts - 1 { 0.5 * self.h } else { self.h })
            .collect();
        (0..self.len())
            .map(|k| {
                let [i, j] = self.ij(k);
                if self.n == 1 {
                    w1[i]
                } else {
                    w1[i] * w1[j]
                }
            })
            .collect()
    }

    /// Reflected neighbour index along an axis.
    #[inline]
    pub fn reflect(&self, i: isize) -> usize {
        let last = (self.npts - 1) as isize;
        let r = if i < 0 {
            -i
        } else if i > last {
            2 * last - i
        } else {
            i
        };
        r as usize
    }
}

/// Symmetric `n x n` matrix (`n <= 2`); 1-D uses `a` only.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sym {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Sym {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn add(&self, o: &Sym) -> Sym {
        Sym::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }

    pub fn scale(&self, s: f64) -> Sym {
        Sym::new(self.a * s, self.b * s, self.c * s)
    }

    pub fn det(&self, n: usize) -> f64 {
        if n == 1 {
            self.a
        } else {
            self.a * self.c - self.b * self.b
        }
    }

    /// Cofactor (adjugate) matrix.
    pub fn cof(&self, n: usize) -> Sym {
        if n == 1 {
            Sym::new(1.0, 0.0, 0.0)
        } else {
            Sym::new(self.c, -self.b, self.a)
        }
    }

    pub fn inv(&self, n: usize) -> Sym {
        self.cof(n).scale(1.0 / self.det(n))
    }

    /// `tr(self * o)`.
    pub fn dot(&self, o: &Sym, n: usize) -> f64 {
        if n == 1 {
            self.a * o.a
        } else {
            self.a * o.a + 2.0 * self.b * o.b + self.c * o.c
        }
    }

    pub fn apply(&self, v: &[f64; 2], n: usize) -> [f64; 2] {
        if n == 1 {
            [self.a * v[0], 0.0]
        } else {
            [self.a * v[0] + self.b * v[1], self.b * v[0] + self.c * v[1]]
        }
    }

    pub fn eigenvalues(&self, n: usize) -> (f64, f64) {
        if n == 1 {
            return (self.a, self.a);
        }
        let m = 0.5 * (self.a + self.c);
        let d = (0.25 * (self.a - self.c).powi(2) + self.b * self.b).sqrt();
        (m - d, m + d)
    }

    /// Smallest eigenvalue of `self` relative to the positive definite `reference`,
    /// i.e. of `reference^{-1/2} self reference^{-1/2}`.
    pub fn relative_min_eig(&self, reference: &Sym, n: usize) -> f64 {
        if n == 1 {
            return self.a / reference.a;
        }
        // Generalized eigenvalues: det(S - l R) = 0.
        let dr = reference.det(2);
        let ds = self.det(2);
        let mid = self.a * reference.c + self.c * reference.a - 2.0 * self.b * reference.b;
        let disc = (mid * mid - 4.0 * dr * ds).max(0.0).sqrt();
        let l1 = (mid - disc) / (2.0 * dr);
        let l2 = (mid + disc) / (2.0 * dr);
        // Use the product for the small root when cancellation threatens it.
        if l2 > 0.0 && l1.abs() < 1e-6 * l2 {
            ds / dr / l2
        } else {
            l1
        }
    }
}

/// Choice of the reference potential `w_0 = log sum_m e^{<m, x>}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// All lattice points of P: the anticanonical Fubini-Study potential, a smooth metric.
    #[default]
    LatticePoints,
    /// Vertices of P only; its metric degenerates along the toric divisors.
    Vertices,
}

/// Log-sum-exp potential over a point set, with analytic derivatives.
#[derive(Debug, Clone)]
pub struct Reference {
    n: usize,
    points: Vec<[f64; 2]>,
}

impl Reference {
    pub fn new(p: &Polytope, kind: ReferenceKind) -> Self {
        let points = match kind {
            ReferenceKind::LatticePoints => p.lattice_points().iter().map(|m| [m[0] as f64, m[1] as f64]).collect(),
            ReferenceKind::Vertices => p.vertices_f64(),
        };
        Self { n: p.dim(), points }
    }

    /// `(w_0, grad w_0, Hess w_0)` at `x`.
    pub fn eval(&self, x: &[f64; 2]) -> (f64, [f64; 2], Sym) {
        let n = self.n;
        let dots: Vec<f64> = self.points.iter().map(|m| (0..n).map(|k| m[k] * x[k]).sum()).collect();
        let mx = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let mut mean = [0.0; 2];
        for (m, d) in self.points.iter().zip(&dots) {
            let e = (d - mx).exp();
            z += e;
            mean[0] += e * m[0];
            mean[1] += e * m[1];
        }
        mean[0] /= z;
        mean[1] /= z;
        // Covariance from centered points: no cancellation in the small eigenvalue.
        let mut cov = Sym::default();
        for (m, d) in self.points.iter().zip(&dots) {
            let p = (d - mx).exp() / z;
            let u = [m[0] - mean[0], m[1] - mean[1]];
            cov.a += p * u[0] * u[0];
            cov.b += p * u[0] * u[1];
            cov.c += p * u[1] * u[1];
        }
        if n == 1 {
            mean[1] = 0.0;
            cov.b = 0.0;
            cov.c = 0.0;
        }
        (mx + z.ln(), mean, cov)
    }

    pub fn value(&self, x: &[f64; 2]) -> f64 {
        let n = self.n;
        let dots: Vec<f64> = self.points.iter().map(|m| (0..n).map(|k| m[k] * x[k]).sum()).collect();
        let mx = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        mx + dots.iter().map(|d| (d - mx).exp()).sum::<f64>().ln()
    }
}

/// Grid, reference potential and the quantities derived from it alone.
#[derive(Debug)]
pub struct Model {
    pub polytope: Arc<Polytope>,
    pub grid: Grid,
    pub kind: ReferenceKind,
    pub reference: Reference,
    pub quad: Vec<f64>,
    pub w0: Vec<f64>,
    pub grad0: Vec<[f64; 2]>,
    pub hess0: Vec<Sym>,
    pub det0: Vec<f64>,
    /// `rho_0 = -log det D^2 w_0 - w_0 + c_0`.
    pub rho0: Vec<f64>,
    pub c0: f64,
    /// Discrete Monge-Ampere mass of the reference, the V of every normalized measure.
    pub volume: f64,
    /// Lebesgue volume of P (equals `volume` up to the truncation tail).
    pub polytope_volume: f64,
    /// Estimated fraction of `int e^{-w_0}` lying outside the box.
    pub tail0: f64,
    pub barycenter: [f64; 2],
}

impl Model {
    pub fn new(polytope: Arc<Polytope>, grid: Grid, kind: ReferenceKind) -> Result<Arc<Self>> {
        if polytope.dim() != grid.n {
            return Err(Error::InvalidGrid("grid and polytope dimensions differ".into()));
        }
        let reference = Reference::new(&polytope, kind);
        let quad = grid.quadrature_weights();
        let evals: Vec<(f64, [f64; 2], Sym)> = (0..grid.len())
            .into_par_iter()
            .map(|k| reference.eval(&grid.point(k)))
            .collect();
        let w0: Vec<f64> = evals.iter().map(|e| e.0).collect();
        let grad0: Vec<[f64; 2]> = evals.iter().map(|e| e.1).collect();
        let hess0: Vec<Sym> = evals.iter().map(|e| e.2).collect();
        let n = grid.n;
        let det0: Vec<f64> = hess0.iter().map(|h| h.det(n)).collect();
        let volume: f64 = det0.iter().zip(&quad).map(|(d, q)| d * q).sum();
        let ze: f64 = w0.iter().zip(&quad).map(|(w, q)| q * (-w).exp()).sum();
        let c0 = (volume / ze).ln();
        let rho0 = det0.iter().zip(&w0).map(|(d, w)| -d.ln() - w + c0).collect();
        let tail = tail_estimate(&grid, &w0, &grad0);
        Ok(Arc::new(Self {
            barycenter: polytope.barycenter(),
            polytope_volume: polytope.volume(),
            polytope,
            grid,
            kind,
            reference,
            quad,
            w0,
            grad0,
            hess0,
            det0,
            rho0,
            c0,
            volume,
            tail0: tail / ze,
        }))
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// `int f` by the product trapezoid rule.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.quad).map(|(a, b)| a * b).sum()
    }

    /// `(1/V) int f d`.
    pub fn average(&self, f: &[f64], density: &[f64]) -> f64 {
        f.iter()
            .zip(density)
            .zip(&self.quad)
            .map(|((a, d), q)| a * d * q)
            .sum::<f64>()
            / self.volume
    }

    /// `(sup rho_0, node)` over interior nodes.
    pub fn sup_rho0(&self) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (k, r) in self.rho0.iter().enumerate() {
            if !self.grid.is_boundary(k) && *r > best.0 {
                best = (*r, k);
            }
        }
        best
    }
}

/// Tail of `int e^{-w}` outside the box, extrapolating `w` linearly along the
/// outward normal from each face (support-function growth).
pub fn tail_estimate(grid: &Grid, w: &[f64], grad: &[[f64; 2]]) -> f64 {
    const SLOPE_FLOOR: f64 = 1e-2;
    let last = grid.npts - 1;
    let h = grid.h;
    if grid.n == 1 {
        return (-w[last]).exp() / grad[last][0].max(SLOPE_FLOOR) + (-w[0]).exp() / (-grad[0][0]).max(SLOPE_FLOOR);
    }
    let mut tail = 0.0;
    let w1 = |j: usize| if j == 0 || j == last { 0.5 * h } else { h };
    for j in 0..=last {
        for (i, sign) in [(0usize, -1.0), (last, 1.0)] {
            let k = grid.index(i, j);
            tail += w1(j) * (-w[k]).exp() / (sign * grad[k][0]).max(SLOPE_FLOOR);
            let k = grid.index(j, i);
            tail += w1(j) * (-w[k]).exp() / (sign * grad[k][1]).max(SLOPE_FLOOR);
        }
    }
    for (i, si) in [(0usize, -1.0), (last, 1.0)] {
        for (j, sj) in [(0usize, -1.0), (last, 1.0)] {
            let k = grid.index(i, j);
            tail += (-w[k]).exp() / ((si * grad[k][0]).max(SLOPE_FLOOR) * (sj * grad[k][1]).max(SLOPE_FLOOR));
        }
    }
    tail
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Relative potential `phi` on the grid of a [`Model`].
#[derive(Debug, Clone)]
pub struct PotentialField {
    model: Arc<Model>,
    hi: Vec<f64>,
    lo: Vec<f64>,
}

/// Derivatives of `w = w_0 + phi` at every node.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub n: usize,
    /// Moment map `grad w`.
    pub grad: Vec<[f64; 2]>,
    pub hess: Vec<Sym>,
    pub det: Vec<f64>,
    /// Discrete gradient and Hessian of `phi` alone.
    pub dphi: Vec<[f64; 2]>,
    pub d2phi: Vec<Sym>,
    /// Largest facet-inequality violation of `grad w` over interior nodes.
    pub moment_violation: f64,
}

impl Geometry {
    pub fn ma_density(&self, model: &Model) -> DensityField {
        let values: Vec<f64> = self.det.iter().map(|d| d / model.volume).collect();
        DensityField::new(model, values)
    }

    pub fn ma_g_density(&self, model: &Model, g: &WeightFunction) -> DensityField {
        let values: Vec<f64> = self
            .det
            .iter()
            .zip(&self.grad)
            .map(|(d, y)| g.eval(y) * d / model.volume)
            .collect();
        DensityField::new(model, values)
    }

    /// `g(grad w)` at every node.
    pub fn weight_values(&self, g: &WeightFunction) -> Vec<f64> {
        self.grad.iter().map(|y| g.eval(y)).collect()
    }
}

/// Nonnegative density per node against `dx`, normalized by V.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub mass: f64,
}

impl DensityField {
    fn new(model: &Model, values: Vec<f64>) -> Self {
        let mass = model.integrate(&values);
        Self { values, mass }
    }
}

/// Ricci potential with its normalizing constant and truncation audit.
#[derive(Debug, Clone)]
pub struct RicciPotential {
    pub rho: Vec<f64>,
    pub c: f64,
    /// `int_box e^{-w}`.
    pub partition: f64,
    /// Discrete Monge-Ampere mass `sum q det D^2 w`.
    pub mass: f64,
    /// Estimated tail fraction outside the box.
    pub tail: f64,
}

impl PotentialField {
    pub fn zero(model: Arc<Model>) -> Self {
        let len = model.grid.len();
        Self {
            model,
            hi: vec![0.0; len],
            lo: vec![0.0; len],
        }
    }

    pub fn from_values(model: Arc<Model>, phi: Vec<f64>) -> Result<Self> {
        if phi.len() != model.grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} nodes",
                phi.len(),
                model.grid.len()
            )));
        }
        let len = phi.len();
        Ok(Self {
            model,
            hi: phi,
            lo: vec![0.0; len],
        })
    }

    /// Field from a function of the log coordinates.
    pub fn from_fn(model: Arc<Model>, f: impl Fn(&[f64; 2]) -> f64) -> Self {
        let phi = (0..model.grid.len()).map(|k| f(&model.grid.point(k))).collect();
        let len = model.grid.len();
        Self {
            model,
            hi: phi,
            lo: vec![0.0; len],
        }
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn grid(&self) -> &Grid {
        &self.model.grid
    }

    #[inline]
    pub fn phi(&self, k: usize) -> f64 {
        self.hi[k] + self.lo[k]
    }

    pub fn values(&self) -> Vec<f64> {
        self.hi.iter().zip(&self.lo).map(|(a, b)| a + b).collect()
    }

    /// Both parts of the compensated representation.
    pub fn parts(&self) -> (&[f64], &[f64]) {
        (&self.hi, &self.lo)
    }

    pub fn from_parts(model: Arc<Model>, hi: Vec<f64>, lo: Vec<f64>) -> Result<Self> {
        if hi.len() != model.grid.len() || lo.len() != hi.len() {
            return Err(Error::InvalidGrid("field size does not match the grid".into()));
        }
        Ok(Self { model, hi, lo })
    }

    /// `phi += alpha * u` with compensated summation.
    pub fn add_scaled(&mut self, u: &[f64], alpha: f64) {
        for k in 0..self.hi.len() {
            let (s, e) = two_sum(self.hi[k], alpha * u[k]);
            let (s2, e2) = two_sum(s, self.lo[k] + e);
            self.hi[k] = s2;
            self.lo[k] = e2;
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        let u = vec![1.0; self.hi.len()];
        self.add_scaled(&u, c);
    }

    pub fn total(&self) -> Vec<f64> {
        (0..self.hi.len()).map(|k| self.model.w0[k] + self.phi(k)).collect()
    }

    #[inline]
    fn diff(&self, a: usize, b: usize) -> f64 {
        (self.hi[a] - self.hi[b]) + (self.lo[a] - self.lo[b])
    }

    /// Central-difference gradient and Hessian of `phi` at node `k`.
    pub fn derivatives(&self, k: usize) -> ([f64; 2], Sym) {
        let g = &self.model.grid;
        let h = g.h;
        let [i, j] = g.ij(k);
        let (i, j) = (i as isize, j as isize);
        let at = |a: isize, b: isize| g.index(g.reflect(a), g.reflect(b));
        if g.n == 1 {
            let (l, r) = (at(i - 1, 0), at(i + 1, 0));
            let d1 = self.diff(r, l) / (2.0 * h);
            let d2 = (self.diff(r, k) - self.diff(k, l)) / (h * h);
            return ([d1, 0.0], Sym::new(d2, 0.0, 0.0));
        }
        let (w, e, s, n) = (at(i - 1, j), at(i + 1, j), at(i, j - 1), at(i, j + 1));
        let dx = self.diff(e, w) / (2.0 * h);
        let dy = self.diff(n, s) / (2.0 * h);
        let dxx = (self.diff(e, k) - self.diff(k, w)) / (h * h);
        let dyy = (self.diff(n, k) - self.diff(k, s)) / (h * h);
        let dxy = (self.diff(at(i + 1, j + 1), at(i + 1, j - 1)) - self.diff(at(i - 1, j + 1), at(i - 1, j - 1))) / (4.0 * h * h);
        ([dx, dy], Sym::new(dxx, dxy, dyy))
    }

    /// Derivatives of `w`; fails on the first node where `D^2 w` is not positive
    /// definite relative to `D^2 w_0` by at least `floor`.
    pub fn geometry(&self, floor: f64) -> Result<Geometry> {
        let m = &self.model;
        let n = m.grid.n;
        let parts: Vec<([f64; 2], Sym)> = (0..m.grid.len()).into_par_iter().map(|k| self.derivatives(k)).collect();
        let mut grad = Vec::with_capacity(parts.len());
        let mut hess = Vec::with_capacity(parts.len());
        let mut det = Vec::with_capacity(parts.len());
        let mut violation: f64 = 0.0;
        for (k, (d1, d2)) in parts.iter().enumerate() {
            let hk = m.hess0[k].add(d2);
            let rel = hk.relative_min_eig(&m.hess0[k], n);
            if !(rel >= floor) {
                return Err(Error::Convexity {
                    node: k,
                    x: m.grid.point(k)[..n].to_vec(),
                    eig: rel,
                });
            }
            let y = [m.grad0[k][0] + d1[0], m.grad0[k][1] + d1[1]];
            if !m.grid.is_boundary(k) {
                violation = violation.max(m.polytope.facet_violation(&y[..n]));
            }
            grad.push(y);
            det.push(hk.det(n));
            hess.push(hk);
        }
        Ok(Geometry {
            n,
            grad,
            hess,
            det,
            dphi: parts.iter().map(|p| p.0).collect(),
            d2phi: parts.iter().map(|p| p.1).collect(),
            moment_violation: violation,
        })
    }

    pub fn moment_map(&self, geo: &Geometry) -> Vec<[f64; 2]> {
        geo.grad.clone()
    }

    /// `theta_xi = <xi, grad w - b>`.
    pub fn hamiltonian(&self, geo: &Geometry, xi: &[f64; 2]) -> Vec<f64> {
        let b = self.model.barycenter;
        let n = self.model.n();
        geo.grad.iter().map(|y| (0..n).map(|k| xi[k] * (y[k] - b[k])).sum()).collect()
    }

    /// `rho = -log det D^2 w - w + c`, normalized on the discrete measure:
    /// `c = log(sum q det D^2 w / int_box e^{-w})`, so `int (e^rho - 1) MA = 0`.
    pub fn ricci_potential(&self, geo: &Geometry) -> RicciPotential {
        let m = &self.model;
        let w = self.total();
        let ew: Vec<f64> = w.iter().map(|x| (-x).exp()).collect();
        let partition = m.integrate(&ew);
        let mass = m.integrate(&geo.det);
        let c = (mass / partition).ln();
        let rho = geo.det.iter().zip(&w).map(|(d, x)| -d.ln() - x + c).collect();
        let tail = tail_estimate(&m.grid, &w, &geo.grad) / partition;
        RicciPotential {
            rho,
            c,
            partition,
            mass,
            tail,
        }
    }

    /// Ricci potential with the truncation audit enforced.
    pub fn ricci_potential_checked(&self, geo: &Geometry, tail_tolerance: f64) -> Result<RicciPotential> {
        let r = self.ricci_potential(geo);
        if r.tail > tail_tolerance {
            return Err(Error::Truncation {
                tail: r.tail,
                tol: tail_tolerance,
            });
        }
        Ok(r)
    }

    /// Field of the translated potential `w(x + s xi)`; `phi` is continued past
    /// the box by even reflection and resampled with tensor cubic interpolation.
    pub fn translate(&self, xi: &[f64; 2], s: f64) -> Result<PotentialField> {
        let m = &self.model;
        let n = m.n();
        let norm = (0..n).map(|k| xi[k] * xi[k]).sum::<f64>().sqrt();
        let shift = s.abs() * norm;
        if shift > m.grid.r / 4.0 + 1e-12 {
            return Err(Error::TranslationRange {
                shift,
                limit: m.grid.r / 4.0,
            });
        }
        if s == 0.0 {
            return Ok(self.clone());
        }
        let phi = self.values();
        let out: Vec<f64> = (0..m.grid.len())
            .into_par_iter()
            .map(|k| {
                let x = m.grid.point(k);
                let mut xs = x;
                for a in 0..n {
                    xs[a] += s * xi[a];
                }
                m.reference.value(&xs) - m.w0[k] + cubic_sample(&m.grid, &phi, &xs)
            })
            .collect();
        PotentialField::from_values(m.clone(), out)
    }

    /// Same field on another model sharing the polytope (used for resampling
    /// onto refined or enlarged grids); `phi` is interpolated and continued as in
    /// [`PotentialField::translate`].
    pub fn resample(&self, target: Arc<Model>) -> PotentialField {
        let phi = self.values();
        let src = &self.model.grid;
        let vals = (0..target.grid.len())
            .map(|k| cubic_sample(src, &phi, &target.grid.point(k)))
            .collect();
        PotentialField {
            hi: vals,
            lo: vec![0.0; target.grid.len()],
            model: target,
        }
    }
}

/// Cubic Lagrange interpolation with even continuation across the box faces.
pub fn cubic_sample(grid: &Grid, f: &[f64], x: &[f64; 2]) -> f64 {
    let weights = |xc: f64| -> (isize, [f64; 4]) {
        let r = grid.r;
        // Even continuation: fold the coordinate back into the box.
        let mut u = xc;
        if u > r {
            u = 2.0 * r - u;
        }
        if u < -r {
            u = -2.0 * r - u;
        }
        let s = (u + r) / grid.h;
        let i = (s.floor() as isize).clamp(0, grid.npts as isize - 2);
        let t = s - i as f64;
        let w = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];
        (i, w)
    };
    let (i0, wx) = weights(x[0]);
    if grid.n == 1 {
        return (0..4)
            .map(|a| wx[a] * f[grid.reflect(i0 - 1 + a as isize)])
            .sum();
    }
    let (j0, wy) = weights(x[1]);
    let mut acc = 0.0;
    for a in 0..4 {
        let i = grid.reflect(i0 - 1 + a as isize);
        let mut row = 0.0;
        for b in 0..4 {
            let j = grid.reflect(j0 - 1 + b as isize);
            row += wy[b] * f[grid.index(i, j)];
        }
        acc += wx[a] * row;
    }
    acc
}
