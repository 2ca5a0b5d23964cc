use serde::{Deserialize, Serialize};

use super::operator::{residual, NewtonSystem};
use super::SolveConfig;
use crate::energies::energy_eg;
use crate::error::{Error, Result};
use crate::toricfield::{Geometry, PotentialField};
use crate::weights::WeightFunction;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NewtonReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Sup residual before every iteration and at the end.
    pub history: Vec<f64>,
    pub step_sizes: Vec<f64>,
    /// Worst relative residual of the linear solves.
    pub linear_residual: f64,
    pub failure: Option<String>,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Residual evaluator for either form of the equation.
#[derive(Clone, Copy)]
enum Mode {
    AtT(f64),
    /// Normalized `t = 0` problem with the source `rho_0` scaled by the given
    /// factor (1 for the actual problem).
    Normalized(f64),
}

fn evaluate(f: &PotentialField, g: &WeightFunction, mode: Mode, cfg: &SolveConfig) -> Result<(Geometry, Vec<f64>)> {
    let geo = f.geometry(cfg.convexity_floor)?;
    let r = match mode {
        Mode::AtT(t) => residual(f, &geo, g, t)?,
        Mode::Normalized(source) => {
            let m = f.model();
            let (e_g, _) = energy_eg(f, &geo, g)?;
            let mut r = residual(f, &geo, g, 0.0)?;
            let shift = if source == 1.0 {
                e_g
            } else {
                let z: f64 = (0..m.grid.len())
                    .map(|k| m.quad[k] * (source * m.rho0[k]).exp() * m.det0[k])
                    .sum();
                e_g + (z / m.volume).ln()
            };
            for (k, v) in r.iter_mut().enumerate() {
                *v += shift + (1.0 - source) * m.rho0[k];
            }
            r
        }
    };
    Ok((geo, r))
}

fn newton(init: &PotentialField, g: &WeightFunction, mode: Mode, cfg: &SolveConfig) -> Result<(PotentialField, NewtonReport)> {
    cfg.validate()?;
    let mut f = init.clone();
    let (mut geo, mut r) = evaluate(&f, g, mode, cfg)?;
    let mut res = sup(&r);
    let mut report = NewtonReport {
        converged: false,
        iterations: 0,
        residual: res,
        history: vec![res],
        step_sizes: Vec::new(),
        linear_residual: 0.0,
        failure: None,
    };
    let model = f.model().clone();
    for it in 0..cfg.max_newton {
        if res <= cfg.tol {
            report.converged = true;
            break;
        }
        report.iterations = it + 1;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let sys = match mode {
            Mode::AtT(t) => NewtonSystem::new(&model, &geo, g, t, false),
            Mode::Normalized(_) => NewtonSystem::new(&model, &geo, g, 0.0, true),
        };
        let solved = sys.and_then(|s| s.solve(&rhs));
        let (du, lin) = match solved {
            Ok(v) => v,
            Err(e) => {
                report.failure = Some(format!("{e}"));
                break;
            }
        };
        report.linear_residual = report.linear_residual.max(lin);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtrack {
            let mut trial = f.clone();
            trial.add_scaled(&du, alpha);
            if let Ok((tg, tr)) = evaluate(&trial, g, mode, cfg) {
                let tres = sup(&tr);
                if tres.is_finite() && tres <= (1.0 - cfg.min_decrease) * res {
                    accepted = Some((trial, tg, tr, tres));
                    break;
                }
            }
            alpha *= cfg.backtrack;
        }
        match accepted {
            Some((nf, ng, nr, nres)) => {
                f = nf;
                geo = ng;
                r = nr;
                res = nres;
                report.step_sizes.push(alpha);
                report.history.push(res);
            }
            None => {
                report.failure = Some("line search stalled".into());
                break;
            }
        }
    }
    if res <= cfg.tol {
        report.converged = true;
        report.failure = None;
    } else if report.failure.is_none() {
        report.failure = Some(format!("no convergence in {} iterations", cfg.max_newton));
    }
    report.residual = res;
    Ok((f, report))
}

/// Damped Newton for `g(grad w) det D^2 w = e^{-t phi + rho_0} det D^2 w_0`
/// (with the discrete mass factor of [`residual`]).
///
/// Non-convergence is reported in the returned [`NewtonReport`]; errors are
/// reserved for an invalid starting field.
pub fn newton_solve_at_t(
    init: &PotentialField,
    g: &WeightFunction,
    t: f64,
    cfg: &SolveConfig,
) -> Result<(PotentialField, NewtonReport)> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Config(format!("t = {t} outside (0, 1]")));
    }
    newton(init, g, Mode::AtT(t), cfg)
}

/// Newton for the normalized `t = 0` equation
/// `log g + log det D^2 w - rho_0 - log det D^2 w_0 - log(V_g/V) + E_g(phi) = 0`,
/// linearized with the rank-one augmentation that removes the constant kernel.
/// The mass term makes the first part compatible for every `phi`, so a
/// solution has `E_g(phi) = 0` exactly.
///
/// When Newton fails from `init` directly, the source `rho_0` is switched on
/// gradually (`s rho_0`, `s: 0 -> 1`, adaptive steps) starting from `phi = 0`,
/// which solves the `s = 0` problem for `g = 1`.
pub fn solve_t0_normalized(
    init: &PotentialField,
    g: &WeightFunction,
    cfg: &SolveConfig,
) -> Result<(PotentialField, NewtonReport)> {
    let direct = newton(init, g, Mode::Normalized(1.0), cfg);
    if let Ok((_, rep)) = &direct {
        if rep.converged {
            return direct;
        }
    }
    let mut f = PotentialField::zero(init.model().clone());
    let mut s: f64 = 0.0;
    let mut ds = 0.25;
    let mut total_iters = 0;
    let mut last = None;
    if let Ok((f0, rep)) = newton(&f, g, Mode::Normalized(0.0), cfg) {
        total_iters += rep.iterations;
        if rep.converged {
            f = f0;
        }
    }
    while s < 1.0 {
        let s_try = (s + ds).min(1.0);
        match newton(&f, g, Mode::Normalized(s_try), cfg) {
            Ok((nf, rep)) if rep.converged => {
                total_iters += rep.iterations;
                f = nf;
                s = s_try;
                if rep.iterations <= cfg.fast_iters {
                    ds = (ds * cfg.dt_grow).min(0.5);
                }
                last = Some(rep);
            }
            _ => {
                ds *= 0.5;
                if ds < cfg.dt_min {
                    return direct;
                }
            }
        }
    }
    let mut rep = last.expect("homotopy reached s = 1");
    rep.iterations = total_iters;
    Ok((f, rep))
}
