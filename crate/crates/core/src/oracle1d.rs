//! Shooting solver for the one-dimensional continuity equation
//! `g(w') w'' = exp(c - t w - (1 - t) w_0)` on the real line with
//! `w'(+-inf) = +-1`, used as ground truth for the P^1 family.
//!
//! The additive gauge is fixed by `w(0) = 0`; the level `c` is found by
//! bisection on the forward limit `w'(+inf) = 1`. When `g` and `w_0` are both
//! even, `w'(0) = 0` and one bisection suffices. Otherwise the slope `b = w'(0)`
//! is scanned for a sign change of the backward defect and refined by nested
//! bisection; no sign change is reported as a bracket failure.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energies::full_report;
use crate::error::{Error, Result};
use crate::polytope::{catalog_example, Polytope};
use crate::toricfield::{PotentialField, Reference, ReferenceKind};
use crate::weights::WeightFunction;

#[derive(Debug, Clone)]
pub struct ShootingProblem {
    pub weight: WeightFunction,
    pub t: f64,
    pub reference: Reference,
    /// Local tolerance of the ODE integration.
    pub tol: f64,
    /// Force the two-parameter shooting even for even data.
    pub two_parameter: bool,
}

impl ShootingProblem {
    pub fn new(weight: WeightFunction, t: f64, kind: ReferenceKind) -> Result<Self> {
        let p = weight.polytope().clone();
        if p.dim() != 1 {
            return Err(Error::Config("the shooting oracle needs a one-dimensional polytope".into()));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("t = {t} outside [0, 1]")));
        }
        let inf = weight.inf_on_p();
        if !(inf > 0.0) {
            return Err(Error::Config(format!("weight not positive on P (inf {inf:.3e})")));
        }
        Ok(Self {
            reference: Reference::new(&p, kind),
            weight,
            t,
            tol: 1e-10,
            two_parameter: false,
        })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn w0(&self, x: f64) -> (f64, f64) {
        let (v, d, _) = self.reference.eval(&[x, 0.0]);
        (v, d[0])
    }

    fn g(&self, y: f64) -> f64 {
        self.weight.eval(&[y, 0.0])
    }

    /// Both `g` and `w_0` even.
    pub fn is_symmetric(&self) -> bool {
        let ys = [0.1, 0.37, 0.55, 0.8, 0.99];
        let xs = [0.3, 1.1, 2.7, 5.0];
        ys.iter().all(|&y| (self.g(y) - self.g(-y)).abs() <= 1e-14 * self.g(y).abs().max(1.0))
            && xs.iter().all(|&x| (self.w0(x).0 - self.w0(-x).0).abs() <= 1e-13 * self.w0(x).0.abs().max(1.0))
    }
}

/// Dense samples of one half-line of a trajectory, ordered by `|x|`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Branch {
    x: Vec<f64>,
    w: Vec<f64>,
    dw: Vec<f64>,
    d2w: Vec<f64>,
}

impl Branch {
    fn push(&mut self, x: f64, y: [f64; 2], d2: f64) {
        self.x.push(x);
        self.w.push(y[0]);
        self.dw.push(y[1]);
        self.d2w.push(d2);
    }

    fn reach(&self) -> f64 {
        self.x.last().map(|x| x.abs()).unwrap_or(0.0)
    }

    /// Quintic Hermite interpolation from `(w, w', w'')` at the step ends.
    fn eval(&self, x: f64) -> Option<(f64, f64)> {
        let s = x.abs();
        let n = self.x.len();
        if n < 2 || s > self.reach() {
            return None;
        }
        let i = self.x.partition_point(|&v| v.abs() <= s).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let u = (x - x0) / h;
        let (p0, p1) = (self.w[i], self.w[i + 1]);
        let (m0, m1) = (self.dw[i] * h, self.dw[i + 1] * h);
        let (a0, a1) = (self.d2w[i] * h * h, self.d2w[i + 1] * h * h);
        let (u2, u3) = (u * u, u * u * u);
        let (u4, u5) = (u3 * u, u3 * u2);
        let h00 = 1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5;
        let h10 = u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5;
        let h20 = 0.5 * (u2 - 3.0 * u3 + 3.0 * u4 - u5);
        let h21 = 0.5 * (u3 - 2.0 * u4 + u5);
        let h11 = -4.0 * u3 + 7.0 * u4 - 3.0 * u5;
        let h01 = 10.0 * u3 - 15.0 * u4 + 6.0 * u5;
        let w = h00 * p0 + h10 * m0 + h20 * a0 + h21 * a1 + h11 * m1 + h01 * p1;
        let d00 = -30.0 * u2 + 60.0 * u3 - 30.0 * u4;
        let d10 = 1.0 - 18.0 * u2 + 32.0 * u3 - 15.0 * u4;
        let d20 = 0.5 * (2.0 * u - 9.0 * u2 + 12.0 * u3 - 5.0 * u4);
        let d21 = 0.5 * (3.0 * u2 - 8.0 * u3 + 5.0 * u4);
        let d11 = -12.0 * u2 + 28.0 * u3 - 15.0 * u4;
        let d01 = -d00;
        let dw = (d00 * p0 + d10 * m0 + d20 * a0 + d21 * a1 + d11 * m1 + d01 * p1) / h;
        Some((w, dw))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shot {
    /// `dir * w'` crossed 1 at this distance from the origin.
    Overshoot(f64),
    /// Settled with extrapolated limit `dir * w'(inf)`.
    Settled(f64),
}

impl Shot {
    /// Positive when too much mass was collected.
    fn defect(&self) -> f64 {
        match *self {
            Shot::Overshoot(_) => f64::INFINITY,
            Shot::Settled(l) => l - 1.0,
        }
    }
}

const X_CAP: f64 = 200.0;

/// Dormand-Prince 5(4) on one half-line starting at `x = 0`.
fn integrate(pb: &ShootingProblem, c: f64, b: f64, dir: f64, mut out: Option<&mut Branch>) -> Shot {
    let t = pb.t;
    let rhs = |x: f64, y: [f64; 2]| -> [f64; 2] {
        let (w0, _) = pb.w0(x);
        let gv = pb.g(y[1]);
        [y[1], (c - t * y[0] - (1.0 - t) * w0).exp() / gv]
    };
    // Integrate in s = |x| so the step logic is direction-free.
    let f = |s: f64, y: [f64; 2]| -> [f64; 2] {
        let d = rhs(dir * s, y);
        [dir * d[0], dir * d[1]]
    };
    let tol = pb.tol;
    let mut s = 0.0;
    let mut y = [0.0, b];
    let mut k1 = f(s, y);
    if let Some(o) = out.as_deref_mut() {
        o.push(0.0, y, dir * k1[1]);
    }
    let mut h: f64 = 0.01;
    loop {
        if dir * y[1] >= 1.0 {
            return Shot::Overshoot(s);
        }
        // Decay rate of w'' from the logarithmic derivative of the right side.
        let (_, dw0) = pb.w0(dir * s);
        let d2 = dir * k1[1];
        let gp = (pb.g(y[1] + 1e-6) - pb.g(y[1] - 1e-6)) / 2e-6;
        let lambda = dir * (t * y[1] + (1.0 - t) * dw0) + gp / pb.g(y[1]) * d2 * dir;
        if s > 1.0 && lambda > 0.25 && d2.abs() / lambda < 1e-3 * tol {
            return Shot::Settled(dir * y[1] + d2.abs() / lambda);
        }
        if s > X_CAP {
            return Shot::Settled(dir * y[1]);
        }
        let (ynew, err, k7) = dp_step(&f, s, y, h, k1);
        let scale = |i: usize| tol + tol * y[i].abs().max(ynew[i].abs());
        let e = (0..2).map(|i| err[i] / scale(i)).fold(0.0_f64, f64::max);
        if e <= 1.0 || h < 1e-12 {
            s += h;
            y = ynew;
            k1 = k7;
            if let Some(o) = out.as_deref_mut() {
                o.push(dir * s, y, dir * k1[1]);
            }
        }
        let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * fac).min(0.25);
    }
}

fn dp_step(f: &impl Fn(f64, [f64; 2]) -> [f64; 2], s: f64, y: [f64; 2], h: f64, k1: [f64; 2]) -> ([f64; 2], [f64; 2], [f64; 2]) {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut k = [[0.0; 2]; 7];
    k[0] = k1;
    for st in 1..7 {
        let mut yi = y;
        for (j, kj) in k.iter().enumerate().take(st) {
            yi[0] += h * A[st][j] * kj[0];
            yi[1] += h * A[st][j] * kj[1];
        }
        k[st] = f(s + C[st] * h, yi);
    }
    // Stage 7 is evaluated at the fifth-order solution (FSAL).
    let mut y5 = y;
    for j in 0..6 {
        y5[0] += h * A[6][j] * k[j][0];
        y5[1] += h * A[6][j] * k[j][1];
    }
    let mut err = [0.0; 2];
    for i in 0..2 {
        err[i] = (h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>()).abs();
    }
    (y5, err, k[6])
}

/// Bisection on the level `c` for the forward limit at slope `b`. Returns `c`
/// and the number of trajectories integrated.
fn solve_level(pb: &ShootingProblem, b: f64) -> Result<(f64, usize)> {
    let mut shots = 0;
    let mut defect = |c: f64| {
        shots += 1;
        integrate(pb, c, b, 1.0, None).defect()
    };
    let (mut lo, mut hi) = (-2.0, 2.0);
    let mut grow = 0;
    while defect(lo) > 0.0 {
        lo -= 2.0 * (hi - lo);
        grow += 1;
        if grow > 40 {
            return Err(Error::Bracket("no level with a forward undershoot".into()));
        }
    }
    while defect(hi) < 0.0 {
        hi += 2.0 * (hi - lo);
        grow += 1;
        if grow > 40 {
            return Err(Error::Bracket("no level with a forward overshoot".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if defect(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((0.5 * (lo + hi), shots))
}

/// Backward defect at slope `b` with the forward-matched level.
fn backward_defect(pb: &ShootingProblem, b: f64) -> Result<(f64, f64, usize)> {
    let (c, n) = solve_level(pb, b)?;
    let d = integrate(pb, c, b, -1.0, None).defect();
    Ok((d, c, n + 1))
}

/// Converged shooting solution with `w(0) = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSolution {
    pub t: f64,
    pub c: f64,
    /// `w'(0)`.
    pub slope: f64,
    /// Extrapolated limits `w'(+inf) - 1` and `-w'(-inf) - 1`.
    pub forward_defect: f64,
    pub backward_defect: f64,
    /// `int exp(c - t w - (1 - t) w_0) dx` against `int_P g`.
    pub mass: f64,
    pub mass_target: f64,
    pub shots: usize,
    forward: Branch,
    backward: Branch,
}

impl OracleSolution {
    /// `(w, w')` at `x`; `None` outside the integrated range.
    pub fn eval(&self, x: f64) -> Option<(f64, f64)> {
        if x >= 0.0 {
            self.forward.eval(x)
        } else {
            self.backward.eval(x)
        }
    }

    /// `[-x_min, x_max]` covered by the dense output.
    pub fn range(&self) -> (f64, f64) {
        (-self.backward.reach(), self.forward.reach())
    }

    /// `(x, w)` on a uniform grid over `[-r, r]`.
    pub fn sample(&self, r: f64, npts: usize) -> Result<Vec<(f64, f64)>> {
        (0..npts)
            .map(|i| {
                let x = -r + 2.0 * r * i as f64 / (npts - 1) as f64;
                self.eval(x)
                    .map(|(w, _)| (x, w))
                    .ok_or_else(|| Error::Config(format!("x = {x} outside the oracle range")))
            })
            .collect()
    }
}

/// Solve the shooting problem to the problem tolerance.
pub fn shoot(pb: &ShootingProblem) -> Result<OracleSolution> {
    let (b, c, shots) = if pb.is_symmetric() && !pb.two_parameter {
        let (c, n) = solve_level(pb, 0.0)?;
        (0.0, c, n)
    } else {
        two_parameter(pb)?
    };
    let mut forward = Branch::default();
    let mut backward = Branch::default();
    let fwd = integrate(pb, c, b, 1.0, Some(&mut forward));
    let bwd = integrate(pb, c, b, -1.0, Some(&mut backward));
    let (fd, bd) = (fwd.defect(), bwd.defect());
    let accept = 1e3 * pb.tol;
    if !(fd.abs() <= accept && bd.abs() <= accept) {
        return Err(Error::Bracket(format!(
            "shooting residuals {fd:.3e} / {bd:.3e} above {accept:.1e}"
        )));
    }
    let mut sol = OracleSolution {
        t: pb.t,
        c,
        slope: b,
        forward_defect: fd,
        backward_defect: bd,
        mass: 0.0,
        mass_target: pb.weight.integral(),
        shots: shots + 2,
        forward,
        backward,
    };
    sol.mass = mass(pb, &sol);
    Ok(sol)
}

fn two_parameter(pb: &ShootingProblem) -> Result<(f64, f64, usize)> {
    let mut shots = 0;
    const SCAN: usize = 40;
    let bs: Vec<f64> = (1..SCAN).map(|i| -1.0 + 2.0 * i as f64 / SCAN as f64).collect();
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    let mut min_abs = f64::INFINITY;
    for &b in &bs {
        let (d, _, n) = backward_defect(pb, b)?;
        shots += n;
        if d.is_finite() {
            min_abs = min_abs.min(d.abs());
        }
        if let Some((pb_, pd)) = prev {
            if (pd > 0.0) != (d > 0.0) {
                bracket = Some((pb_, b, pd));
                break;
            }
        }
        prev = Some((b, d));
    }
    let Some((mut lo, mut hi, dlo)) = bracket else {
        return Err(Error::Bracket(format!(
            "backward defect keeps one sign over w'(0) in (-1, 1) (smallest finite |defect| {min_abs:.3e})"
        )));
    };
    let lo_positive = dlo > 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (d, _, n) = backward_defect(pb, mid)?;
        shots += n;
        if (d > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = 0.5 * (lo + hi);
    let (c, n) = solve_level(pb, b)?;
    Ok((b, c, shots + n))
}

/// Trapezoid over the dense samples of both branches plus exponential tails.
fn mass(pb: &ShootingProblem, sol: &OracleSolution) -> f64 {
    let dens = |x: f64, w: f64| (sol.c - pb.t * w - (1.0 - pb.t) * pb.w0(x).0).exp();
    let mut total = 0.0;
    for br in [&sol.forward, &sol.backward] {
        // Resample on a fine uniform grid; the dense steps are too coarse far out.
        let r = br.reach();
        let n = (r * 400.0).ceil() as usize;
        let sgn = br.x.last().map(|x| x.signum()).unwrap_or(1.0);
        let mut acc = 0.0;
        let mut last = 0.0;
        for i in 0..=n {
            let x = sgn * r * i as f64 / n as f64;
            let (w, _) = br.eval(x).unwrap_or((0.0, 0.0));
            let v = dens(x, w);
            let wt = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += wt * v;
            last = v;
        }
        total += acc * r / n as f64 + last;
    }
    total
}

/// Solver-versus-oracle deltas on the solver grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleComparison {
    pub sup_dw: f64,
    /// Grid point of the largest deviation.
    pub at: f64,
    /// Solver total potential `w` at `x = 0` used for gauge alignment.
    pub gauge: f64,
    pub nodes: usize,
    pub energy_deltas: Vec<(String, f64)>,
}

/// Align both potentials at `x = 0` and compare on the solver nodes.
pub fn compare(sol: &OracleSolution, field: &PotentialField, g: &WeightFunction, floor: f64) -> Result<OracleComparison> {
    let m = field.model();
    if m.n() != 1 {
        return Err(Error::Config("oracle comparison needs a one-dimensional field".into()));
    }
    let grid = &m.grid;
    let centre = (0..grid.len())
        .find(|&k| grid.point(k)[0].abs() < 1e-12)
        .ok_or_else(|| Error::Config("gauge mismatch: the solver grid has no node at x = 0".into()))?;
    let (xmin, xmax) = sol.range();
    if -grid.r < xmin || grid.r > xmax {
        return Err(Error::Config(format!(
            "oracle range [{xmin:.2}, {xmax:.2}] does not cover the box of half-width {}",
            grid.r
        )));
    }
    let w = field.total();
    let gauge = w[centre];
    let mut sup: f64 = 0.0;
    let mut at = 0.0;
    let mut oracle_phi = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let x = grid.point(k)[0];
        let (wo, _) = sol.eval(x).expect("inside range");
        let d = (w[k] - gauge - wo).abs();
        if d > sup {
            sup = d;
            at = x;
        }
        oracle_phi.push(wo + gauge - m.w0[k]);
    }
    let of = PotentialField::from_values(m.clone(), oracle_phi)?;
    let ra = full_report(field, &field.geometry(floor)?, g)?;
    let rb = full_report(&of, &of.geometry(floor)?, g)?;
    let energy_deltas = vec![
        ("E".to_string(), ra.e - rb.e),
        ("E_g".to_string(), ra.e_g - rb.e_g),
        ("I-J".to_string(), ra.i_minus_j - rb.i_minus_j),
        ("L".to_string(), ra.l - rb.l),
        ("Ent".to_string(), ra.ent - rb.ent),
        ("M".to_string(), ra.m - rb.m),
    ];
    Ok(OracleComparison {
        sup_dw: sup,
        at,
        gauge,
        nodes: grid.len(),
        energy_deltas,
    })
}

/// Parse a one-dimensional weight: `1`, `affine:s` (`g = 1 + s y`), `quadratic:a,c,q`
/// (`g` proportional to `a + c y + q y^2`), or `table:PATH`.
pub fn parse_weight_1d(spec: &str) -> Result<WeightFunction> {
    let p: Arc<Polytope> = Arc::new(catalog_example("p1")?);
    let nums = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {v:?}: {e}"))))
            .collect()
    };
    match spec.split_once(':') {
        None if spec.trim() == "1" || spec.trim() == "constant" => Ok(WeightFunction::make_constant(p)),
        Some(("affine", rest)) => {
            let v = nums(rest)?;
            if v.len() != 1 {
                return Err(Error::Config("affine weight takes one slope".into()));
            }
            WeightFunction::make_affine(p, [-v[0], 0.0])
        }
        Some(("quadratic", rest)) => {
            let v = nums(rest)?;
            if v.len() != 3 {
                return Err(Error::Config("quadratic weight takes a,c,q".into()));
            }
            WeightFunction::make_quadratic(p, v[0], [v[1], 0.0], [[v[2], 0.0], [0.0, 0.0]])
        }
        Some(("table", path)) => {
            let text = std::fs::read_to_string(path)?;
            WeightFunction::from_table_text(p, &text)
        }
        _ => Err(Error::Config(format!("unknown weight {spec:?}"))),
    }
}
