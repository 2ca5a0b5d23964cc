//! Energy functionals of a potential field.
//!
//! Every measure is normalized by the reference mass `V` of the [`Model`], so
//! `MA(phi) = det D^2 w dx / V` and `MA_g(phi) = g(grad w) MA(phi)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::simpson_weights;
use crate::toricfield::{Geometry, Model, PotentialField, Sym};
use crate::weights::WeightFunction;

/// Nodes of the s-quadrature for E and E_g.
pub const S_NODES: usize = 17;
/// Allowed gap between the 17- and 9-node Simpson values.
pub const S_RICHARDSON_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnergyReport {
    pub e: f64,
    pub e_g: f64,
    pub i_g: f64,
    pub j_g: f64,
    pub l: f64,
    pub d: f64,
    pub d_g: f64,
    pub ent: f64,
    pub m: f64,
    pub m_g: f64,
    pub f_g: f64,
    /// `E` by mixed Hessian determinants.
    pub e_mixed: f64,
    /// `I_g - J_g` as `E_g - int phi MA_g(phi)`.
    pub i_minus_j: f64,
    /// `L` through `int e^{-phi + rho_0} MA(0)`.
    pub l_alt: f64,
    /// `int phi MA(phi)`.
    pub int_phi_ma: f64,
    /// `int phi MA_g(phi)`.
    pub int_phi_ma_g: f64,
    pub int_rho0_ma0: f64,
    pub int_rho_ma: f64,
    pub sup_rho0: f64,
    pub sup_rho0_at: Vec<f64>,
    pub inf_g: f64,
    pub sup_g: f64,
    /// Total masses of MA(phi) and MA_g(phi).
    pub mass: f64,
    pub mass_g: f64,
    /// Ricci potential normalization and truncation tail fraction of `int e^{-w}`.
    pub c_w: f64,
    pub tail: f64,
    /// Richardson gaps of the s-quadrature for E and E_g.
    pub err_e: f64,
    pub err_e_g: f64,
}

impl EnergyReport {
    /// Left side minus right side of `M_g - D_g = -int rho_phi MA(phi) + int rho_0 MA(0)`.
    pub fn md_identity_gap(&self) -> f64 {
        (self.m_g - self.d_g) - (-self.int_rho_ma + self.int_rho0_ma0)
    }

    pub fn i_minus_j_direct(&self) -> f64 {
        self.i_g - self.j_g
    }
}

/// Per-node data shared by the functionals.
struct Parts<'a> {
    model: &'a Model,
    phi: Vec<f64>,
    g0: Vec<f64>,
    gphi: Vec<f64>,
}

fn s_integral(
    model: &Model,
    phi: &[f64],
    geo: &Geometry,
    g: Option<&WeightFunction>,
    nodes: usize,
) -> f64 {
    let n = model.n();
    let ws = simpson_weights(nodes);
    let mut total = 0.0;
    for (a, wa) in ws.iter().enumerate() {
        let s = a as f64 / (nodes - 1) as f64;
        let mut acc = 0.0;
        for k in 0..phi.len() {
            if phi[k] == 0.0 {
                continue;
            }
            let hs: Sym = model.hess0[k].add(&geo.d2phi[k].scale(s));
            let mut v = phi[k] * hs.det(n);
            if let Some(g) = g {
                let y = [
                    model.grad0[k][0] + s * geo.dphi[k][0],
                    model.grad0[k][1] + s * geo.dphi[k][1],
                ];
                v *= g.eval(&y);
            }
            acc += model.quad[k] * v;
        }
        total += wa * acc;
    }
    total / model.volume
}

/// `E(phi) = int_0^1 int phi MA(s phi) ds` with its Richardson gap.
pub fn energy_e(f: &PotentialField, geo: &Geometry) -> Result<(f64, f64)> {
    let phi = f.values();
    let fine = s_integral(f.model(), &phi, geo, None, S_NODES);
    let coarse = s_integral(f.model(), &phi, geo, None, S_NODES.div_ceil(2));
    check_gap(fine, coarse)
}

/// `E_g(phi) = int_0^1 int phi MA_g(s phi) ds` with its Richardson gap.
pub fn energy_eg(f: &PotentialField, geo: &Geometry, g: &WeightFunction) -> Result<(f64, f64)> {
    if g.is_constant() {
        return energy_e(f, geo);
    }
    let phi = f.values();
    let fine = s_integral(f.model(), &phi, geo, Some(g), S_NODES);
    let coarse = s_integral(f.model(), &phi, geo, Some(g), S_NODES.div_ceil(2));
    check_gap(fine, coarse)
}

fn check_gap(fine: f64, coarse: f64) -> Result<(f64, f64)> {
    let gap = (fine - coarse).abs();
    if gap > S_RICHARDSON_TOL * fine.abs().max(1.0) {
        return Err(Error::Quadrature { gap });
    }
    Ok((fine, gap))
}

/// `E` by the closed form in mixed Hessian determinants (n <= 2).
pub fn energy_e_mixed(f: &PotentialField, geo: &Geometry) -> f64 {
    let m = f.model();
    let n = m.n();
    let mut acc = 0.0;
    for k in 0..m.grid.len() {
        let a = &m.hess0[k];
        let b = &geo.d2phi[k];
        let bracket = if n == 1 {
            a.a + 0.5 * b.a
        } else {
            let mixed = 0.5 * (a.add(b).det(2) - a.det(2) - b.det(2));
            a.det(2) + mixed + b.det(2) / 3.0
        };
        acc += m.quad[k] * f.phi(k) * bracket;
    }
    acc / m.volume
}

/// `(I_g, J_g)`.
pub fn aubin(f: &PotentialField, geo: &Geometry, g: &WeightFunction) -> Result<(f64, f64)> {
    let (e_g, _) = energy_eg(f, geo, g)?;
    let p = parts(f, geo, g);
    Ok(aubin_from(&p, geo, e_g))
}

fn aubin_from(p: &Parts, geo: &Geometry, e_g: f64) -> (f64, f64) {
    let m = p.model;
    let mut i_acc = 0.0;
    let mut j_acc = 0.0;
    for k in 0..p.phi.len() {
        let ref_term = p.g0[k] * m.det0[k];
        i_acc += m.quad[k] * p.phi[k] * (ref_term - p.gphi[k] * geo.det[k]);
        j_acc += m.quad[k] * p.phi[k] * ref_term;
    }
    (i_acc / m.volume, j_acc / m.volume - e_g)
}

fn parts<'a>(f: &'a PotentialField, geo: &Geometry, g: &WeightFunction) -> Parts<'a> {
    let m = f.model().as_ref();
    Parts {
        model: m,
        phi: f.values(),
        g0: m.grad0.iter().map(|y| g.eval(y)).collect(),
        gphi: geo.grad.iter().map(|y| g.eval(y)).collect(),
    }
}

/// `L(phi) = -log[(e^{c_0}/V) int e^{-w_0 - phi} dx]` and the truncation tail.
pub fn l_functional(f: &PotentialField) -> (f64, f64) {
    let m = f.model();
    let w = f.total();
    let z: f64 = w.iter().zip(&m.quad).map(|(x, q)| q * (-x).exp()).sum();
    let grads: Vec<[f64; 2]> = (0..m.grid.len())
        .map(|k| {
            let (d1, _) = f.derivatives(k);
            [m.grad0[k][0] + d1[0], m.grad0[k][1] + d1[1]]
        })
        .collect();
    let tail = crate::toricfield::tail_estimate(&m.grid, &w, &grads) / z;
    (-(m.c0 + (z / m.volume).ln()), tail)
}

/// `Ent(MA(phi) | MA(0))`.
pub fn entropy(f: &PotentialField, geo: &Geometry) -> f64 {
    let m = f.model();
    let mut acc = 0.0;
    for k in 0..m.grid.len() {
        acc += m.quad[k] * (geo.det[k] / m.det0[k]).ln() * geo.det[k];
    }
    acc / m.volume
}

/// Mabuchi functional `M(phi)`.
pub fn mabuchi_m(f: &PotentialField, geo: &Geometry) -> Result<f64> {
    let (e, _) = energy_e(f, geo)?;
    let m = f.model();
    let ent = entropy(f, geo);
    let mut acc = 0.0;
    for k in 0..m.grid.len() {
        acc += m.quad[k] * (f.phi(k) * geo.det[k] + m.rho0[k] * (m.det0[k] - geo.det[k]));
    }
    Ok(ent + acc / m.volume - e)
}

/// Every functional at once.
pub fn full_report(f: &PotentialField, geo: &Geometry, g: &WeightFunction) -> Result<EnergyReport> {
    let m = f.model().as_ref();
    let (e, err_e) = energy_e(f, geo)?;
    let (e_g, err_e_g) = energy_eg(f, geo, g)?;
    let p = parts(f, geo, g);
    let (i_g, j_g) = aubin_from(&p, geo, e_g);
    let ricci = f.ricci_potential(geo);
    let l = -(m.c0 + (ricci.partition / m.volume).ln());
    let vol = m.volume;

    let mut s = Sums::default();
    for k in 0..p.phi.len() {
        let q = m.quad[k];
        let phi = p.phi[k];
        let d = geo.det[k];
        let d0 = m.det0[k];
        let gd = p.gphi[k] * d;
        let gd0 = p.g0[k] * d0;
        s.phi_ma += q * phi * d;
        s.phi_ma_g += q * phi * gd;
        s.ent += q * (d / d0).ln() * d;
        s.ent_g += q * (gd / gd0).ln() * gd;
        s.rho0_ma0 += q * m.rho0[k] * d0;
        s.rho0_ma += q * m.rho0[k] * d;
        s.rho0_ma_g_diff += q * m.rho0[k] * (gd0 - gd);
        s.rho_ma += q * ricci.rho[k] * d;
        s.mass += q * d;
        s.mass_g += q * gd;
        s.l_alt += q * (-phi + m.rho0[k]).exp() * d0;
    }
    let int_phi_ma = s.phi_ma / vol;
    let int_phi_ma_g = s.phi_ma_g / vol;
    let ent = s.ent / vol;
    let int_rho0_ma0 = s.rho0_ma0 / vol;
    let m_val = ent + int_phi_ma - e + int_rho0_ma0 - s.rho0_ma / vol;
    let f_g = s.ent_g / vol + int_phi_ma_g - e_g + s.rho0_ma_g_diff / vol;
    let (sup_rho0, at) = m.sup_rho0();
    Ok(EnergyReport {
        e,
        e_g,
        i_g,
        j_g,
        l,
        d: l - e,
        d_g: l - e_g,
        ent,
        m: m_val,
        m_g: m_val + e - e_g,
        f_g,
        e_mixed: energy_e_mixed(f, geo),
        i_minus_j: e_g - int_phi_ma_g,
        l_alt: -(s.l_alt / vol).ln(),
        int_phi_ma,
        int_phi_ma_g,
        int_rho0_ma0,
        int_rho_ma: s.rho_ma / vol,
        sup_rho0,
        sup_rho0_at: m.grid.point(at)[..m.n()].to_vec(),
        inf_g: g.inf_on_p(),
        sup_g: g.sup_on_p(),
        mass: s.mass / vol,
        mass_g: s.mass_g / vol,
        c_w: ricci.c,
        tail: ricci.tail,
        err_e,
        err_e_g,
    })
}

#[derive(Default)]
struct Sums {
    phi_ma: f64,
    phi_ma_g: f64,
    ent: f64,
    ent_g: f64,
    rho0_ma0: f64,
    rho0_ma: f64,
    rho0_ma_g_diff: f64,
    rho_ma: f64,
    mass: f64,
    mass_g: f64,
    l_alt: f64,
}

/// Central-difference Hessian of a node function with reflected ghosts.
pub fn node_hessian(model: &Model, f: &[f64], k: usize) -> Sym {
    let g = &model.grid;
    let h = g.h;
    let [i, j] = g.ij(k);
    let (i, j) = (i as isize, j as isize);
    let at = |a: isize, b: isize| f[g.index(g.reflect(a), g.reflect(b))];
    if g.n == 1 {
        return Sym::new((at(i + 1, 0) - 2.0 * f[k] + at(i - 1, 0)) / (h * h), 0.0, 0.0);
    }
    let dxx = (at(i + 1, j) - 2.0 * f[k] + at(i - 1, j)) / (h * h);
    let dyy = (at(i, j + 1) - 2.0 * f[k] + at(i, j - 1)) / (h * h);
    let dxy = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1)) / (4.0 * h * h);
    Sym::new(dxx, dxy, dyy)
}

/// Scalar curvature `S = n + tr((D^2 w)^{-1} D^2 rho)` and the g-extremal
/// residual `S - n - (1 - g(grad w))`, both NaN within two nodes of the boundary.
#[derive(Debug, Clone)]
pub struct ScalarCurvature {
    pub s: Vec<f64>,
    pub extremal_residual: Vec<f64>,
}

pub fn scalar_curvature(f: &PotentialField, geo: &Geometry, g: &WeightFunction) -> ScalarCurvature {
    let m = f.model();
    let n = m.n();
    let rho = f.ricci_potential(geo).rho;
    let mut s = vec![f64::NAN; rho.len()];
    let mut res = vec![f64::NAN; rho.len()];
    for k in 0..rho.len() {
        if m.grid.depth(k) < 2 {
            continue;
        }
        let lap = geo.hess[k].inv(n).dot(&node_hessian(m, &rho, k), n);
        s[k] = n as f64 + lap;
        res[k] = lap - (1.0 - g.eval(&geo.grad[k]));
    }
    ScalarCurvature {
        s,
        extremal_residual: res,
    }
}
