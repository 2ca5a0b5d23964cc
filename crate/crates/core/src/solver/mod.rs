//! Newton solves of the continuity equation, path continuation and the
//! eigenvalue estimate of the twisted linearization.

mod eigen;
mod newton;
mod operator;
mod path;

use serde::{Deserialize, Serialize};

pub use eigen::{lambda1_estimate, Lambda1};
pub use newton::{newton_solve_at_t, solve_t0_normalized, NewtonReport};
pub use operator::{assemble_twisted_laplacian, jacobian, residual, weighted_mass, NewtonSystem, TwistedLaplacian};
pub use path::{continue_path, state_diagnostics, PathRun, PathState, StateDiagnostics, StopReason};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Sup-norm residual tolerance.
    pub tol: f64,
    pub max_newton: usize,
    pub backtrack: f64,
    pub max_backtrack: usize,
    /// Required relative decrease of the sup residual for a damped step.
    pub min_decrease: f64,
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub dt_grow: f64,
    /// Newton iteration count at or below which the step grows.
    pub fast_iters: usize,
    /// Lower bound on the eigenvalues of `D^2 w` relative to `D^2 w_0`.
    pub convexity_floor: f64,
    pub linear_tol: f64,
    /// A state is rejected when its truncation tail exceeds this multiple of the
    /// reference tail.
    pub max_tail_growth: f64,
    /// Margin of `lambda_1 + t` below which step growth freezes.
    pub degeneracy_margin: f64,
    /// Linear extrapolation of the last two states as the initial guess.
    pub extrapolate: bool,
    /// Compute the eigenvalue estimate at every state.
    pub eigen: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_newton: 40,
            backtrack: 0.5,
            max_backtrack: 30,
            min_decrease: 1e-3,
            dt0: 0.05,
            dt_min: 1e-4,
            dt_max: 0.1,
            dt_grow: 1.5,
            fast_iters: 4,
            convexity_floor: 1e-10,
            linear_tol: 1e-12,
            max_tail_growth: 8.0,
            degeneracy_margin: 1e-3,
            extrapolate: true,
            eigen: true,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.tol,
            self.backtrack,
            self.min_decrease,
            self.dt0,
            self.dt_min,
            self.dt_max,
            self.convexity_floor,
            self.linear_tol,
            self.max_tail_growth,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("tolerances and steps must be positive".into()));
        }
        if self.linear_tol >= self.tol {
            return Err(Error::Config("linear tolerance must be below the Newton tolerance".into()));
        }
        if self.backtrack >= 1.0 || self.dt_grow < 1.0 || self.dt_min > self.dt0 {
            return Err(Error::Config("inconsistent step controls".into()));
        }
        if self.max_newton == 0 {
            return Err(Error::Config("max_newton must be positive".into()));
        }
        Ok(())
    }
}
