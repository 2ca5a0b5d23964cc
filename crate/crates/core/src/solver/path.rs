use serde::{Deserialize, Serialize};

use super::eigen::{lambda1_estimate, Lambda1};
use super::newton::{newton_solve_at_t, solve_t0_normalized, NewtonReport};
use super::SolveConfig;
use crate::energies::{full_report, EnergyReport};
use crate::error::Result;
use crate::toricfield::{Geometry, PotentialField};
use crate::weights::WeightFunction;

/// Pointwise and integral diagnostics of one state, all recorded so that the
/// checks can be replayed from a run record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StateDiagnostics {
    /// `sup |rho + (1 - t) phi - log g_phi(grad w) - L|` with `g_phi = g e^{-kappa}`.
    pub rho_identity: f64,
    /// `kappa = log(int g MA / int MA)` on the discrete measure.
    pub kappa: f64,
    /// `int MA(phi) / int MA(0) - 1`.
    pub mass_defect: f64,
    /// `sup |e^rho - g(grad w)|`.
    pub soliton_residual: f64,
    /// `int (e^rho - 1) MA`.
    pub norm_ricci: f64,
    /// `int (g(grad w) - 1) MA`.
    pub norm_weight: f64,
    /// `int theta_a MA` for the coordinate covectors.
    pub norm_theta: Vec<f64>,
    /// Truncation tail fraction of `int e^{-w}` and its ratio to the reference value.
    pub tail: f64,
    pub tail_ratio: f64,
    pub moment_violation: f64,
    pub sup_phi: f64,
    pub inf_phi: f64,
}

#[derive(Debug, Clone)]
pub struct PathState {
    pub t: f64,
    pub field: PotentialField,
    pub newton: NewtonReport,
    pub energies: EnergyReport,
    pub lambda1: Option<Lambda1>,
    pub diagnostics: StateDiagnostics,
    /// Step growth frozen after this state (eigenvalue margin below threshold).
    pub near_degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    /// The step fell below the minimum; `t` is the last accepted parameter.
    StepUnderflow { t: f64, attempted: f64, cause: String },
    StartFailed { cause: String },
}

#[derive(Debug, Clone)]
pub struct PathRun {
    pub states: Vec<PathState>,
    pub stop: StopReason,
    /// Attempted steps that were rejected: `(t, reason)`.
    pub rejections: Vec<(f64, String)>,
}

impl PathRun {
    pub fn last_t(&self) -> f64 {
        self.states.last().map(|s| s.t).unwrap_or(0.0)
    }
}

pub fn state_diagnostics(f: &PotentialField, geo: &Geometry, g: &WeightFunction, t: f64, l: f64) -> StateDiagnostics {
    let m = f.model();
    let n = m.n();
    let ricci = f.ricci_potential(geo);
    let vphi = ricci.mass;
    let vg: f64 = (0..m.grid.len()).map(|k| m.quad[k] * g.eval(&geo.grad[k]) * geo.det[k]).sum();
    let kappa = (vg / vphi).ln();
    let mut rho_id: f64 = 0.0;
    let mut sol: f64 = 0.0;
    let mut nr = 0.0;
    let mut nw = 0.0;
    let mut nt = vec![0.0; n];
    let (mut sup_phi, mut inf_phi) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..m.grid.len() {
        let gv = g.eval(&geo.grad[k]);
        let phi = f.phi(k);
        let rho = ricci.rho[k];
        rho_id = rho_id.max((rho + (1.0 - t) * phi - (gv.ln() - kappa) - l).abs());
        sol = sol.max((rho.exp() - gv).abs());
        let wq = m.quad[k] * geo.det[k] / m.volume;
        nr += wq * (rho.exp() - 1.0);
        nw += wq * (gv - 1.0);
        for (a, v) in nt.iter_mut().enumerate() {
            *v += wq * (geo.grad[k][a] - m.barycenter[a]);
        }
        sup_phi = sup_phi.max(phi);
        inf_phi = inf_phi.min(phi);
    }
    StateDiagnostics {
        rho_identity: rho_id,
        kappa,
        mass_defect: vphi / m.volume - 1.0,
        soliton_residual: sol,
        norm_ricci: nr,
        norm_weight: nw,
        norm_theta: nt,
        tail: ricci.tail,
        tail_ratio: ricci.tail / m.tail0,
        moment_violation: geo.moment_violation,
        sup_phi,
        inf_phi,
    }
}

fn finish_state(
    f: PotentialField,
    newton: NewtonReport,
    g: &WeightFunction,
    t: f64,
    cfg: &SolveConfig,
) -> Result<PathState> {
    let geo = f.geometry(cfg.convexity_floor)?;
    let energies = full_report(&f, &geo, g)?;
    let diagnostics = state_diagnostics(&f, &geo, g, t, energies.l);
    let lambda1 = if cfg.eigen { Some(lambda1_estimate(&f, &geo, g)?) } else { None };
    let near_degenerate = lambda1.map(|l| l.lambda1 + t > -cfg.degeneracy_margin).unwrap_or(false);
    Ok(PathState {
        t,
        field: f,
        newton,
        energies,
        lambda1,
        diagnostics,
        near_degenerate,
    })
}

/// Adaptive continuation from the normalized `t = 0` solution up to `t_max`.
pub fn continue_path(start: &PotentialField, g: &WeightFunction, cfg: &SolveConfig, t_max: f64) -> Result<PathRun> {
    cfg.validate()?;
    let mut rejections = Vec::new();
    let (f0, rep0) = match solve_t0_normalized(start, g, cfg) {
        Ok(v) => v,
        Err(e) => {
            return Ok(PathRun {
                states: Vec::new(),
                stop: StopReason::StartFailed { cause: e.to_string() },
                rejections,
            })
        }
    };
    if !rep0.converged {
        return Ok(PathRun {
            states: Vec::new(),
            stop: StopReason::StartFailed {
                cause: rep0.failure.clone().unwrap_or_default(),
            },
            rejections,
        });
    }
    let mut states = vec![finish_state(f0, rep0, g, 0.0, cfg)?];
    let mut dt = cfg.dt0;
    let t_max = t_max.min(1.0);
    let stop = loop {
        let cur = states.last().expect("non-empty path");
        let t = cur.t;
        if t >= t_max - 1e-12 {
            break StopReason::Completed;
        }
        let t_try = (t + dt).min(t_max);
        let mut guess = cur.field.clone();
        if cfg.extrapolate && states.len() >= 2 && t > 0.0 {
            let prev = &states[states.len() - 2];
            let a = (t_try - t) / (t - prev.t);
            let diff: Vec<f64> = cur.field.values().iter().zip(prev.field.values()).map(|(x, y)| x - y).collect();
            let mut trial = guess.clone();
            trial.add_scaled(&diff, a);
            if trial.geometry(cfg.convexity_floor).is_ok() {
                guess = trial;
            }
        }
        let outcome = newton_solve_at_t(&guess, g, t_try, cfg).and_then(|(f, rep)| {
            if !rep.converged {
                return Ok(Err(rep.failure.clone().unwrap_or_else(|| "no convergence".into())));
            }
            let fast = rep.iterations <= cfg.fast_iters;
            let st = finish_state(f, rep, g, t_try, cfg)?;
            if st.diagnostics.tail_ratio > cfg.max_tail_growth {
                return Ok(Err(format!(
                    "truncation audit: tail ratio {:.3} exceeds {}",
                    st.diagnostics.tail_ratio, cfg.max_tail_growth
                )));
            }
            Ok(Ok((st, fast)))
        });
        match outcome {
            Ok(Ok((st, fast))) => {
                let frozen = st.near_degenerate;
                states.push(st);
                if fast && !frozen {
                    dt = (dt * cfg.dt_grow).min(cfg.dt_max);
                }
            }
            other => {
                let cause = match other {
                    Ok(Err(c)) => c,
                    Err(e) => e.to_string(),
                    Ok(Ok(_)) => unreachable!(),
                };
                rejections.push((t_try, cause.clone()));
                dt *= 0.5;
                if dt < cfg.dt_min {
                    break StopReason::StepUnderflow {
                        t,
                        attempted: t_try,
                        cause,
                    };
                }
            }
        }
    };
    Ok(PathRun {
        states,
        stop,
        rejections,
    })
}
