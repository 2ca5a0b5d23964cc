//! Pass/fail checks over a run record.
//!
//! Scalar checks read the per-state values stored in the record; the
//! translation and projection checks rebuild fields from the stored values and
//! evaluate functionals on them (no solve is repeated).

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::extremal_field;
use crate::record::RunRecord;
use crate::toricfield::{cubic_sample, Geometry, PotentialField, Sym};
use crate::weights::WeightFunction;

pub const CHECK_NAMES: [&str; 13] = [
    "rho_identity",
    "md_identity",
    "ij_monotone",
    "ev_formula",
    "eg_nonneg",
    "intphi_bound",
    "mg_bound",
    "eigen_margin",
    "translation_critical",
    "translation_convex",
    "projection_invariance",
    "m_monotone_g1",
    "normalization_suite",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

/// Direction of the comparison `value <= bound` or `value >= bound`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The statement being tested, in words.
    pub statement: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub outcome: Outcome,
    /// Parameter of the worst state, when the check runs over the path.
    pub worst_t: Option<f64>,
    /// Ratio of this value to the value on a refined grid, when attached.
    pub trend: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(name: &str, statement: &str, value: f64, relation: Relation, bound: f64) -> Self {
        let ok = match relation {
            Relation::AtMost => value <= bound,
            Relation::AtLeast => value >= bound,
        };
        Self {
            name: name.into(),
            statement: statement.into(),
            value,
            relation,
            bound,
            outcome: if ok { Outcome::Pass } else { Outcome::Fail },
            worst_t: None,
            trend: None,
            detail: String::new(),
        }
    }

    fn skipped(name: &str, statement: &str, why: &str) -> Self {
        Self {
            name: name.into(),
            statement: statement.into(),
            value: f64::NAN,
            relation: Relation::AtMost,
            bound: f64::NAN,
            outcome: Outcome::Skipped,
            worst_t: None,
            trend: None,
            detail: why.into(),
        }
    }

    fn failed(name: &str, statement: &str, why: String) -> Self {
        Self {
            outcome: Outcome::Fail,
            detail: why,
            ..Self::skipped(name, statement, "")
        }
    }

    fn at(mut self, t: Option<f64>) -> Self {
        self.worst_t = t;
        self
    }

    fn with_detail(mut self, d: String) -> Self {
        self.detail = d;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<Check>,
}

impl CheckReport {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.outcome != Outcome::Fail)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.outcome == Outcome::Fail)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Attach `value / finer.value` to every check present in both reports.
    pub fn attach_trend(&mut self, finer: &CheckReport) {
        for c in &mut self.checks {
            if let Some(f) = finer.get(&c.name) {
                if c.value.is_finite() && f.value.is_finite() && f.value != 0.0 {
                    c.trend = Some(c.value / f.value);
                }
            }
        }
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {:<7} {:>12} {:>3} {:>10} {:>8}  detail", "check", "result", "value", "", "bound", "worst t");
        for c in &self.checks {
            let res = match c.outcome {
                Outcome::Pass => "PASS",
                Outcome::Fail => "FAIL",
                Outcome::Skipped => "skip",
            };
            let rel = match c.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            let t = c.worst_t.map(|t| format!("{t:.4}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:<22} {:<7} {:>12.4e} {:>3} {:>10.1e} {:>8}  {}",
                c.name, res, c.value, rel, c.bound, t, c.detail
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Pointwise tolerance for the Ricci potential identity.
    pub rho_identity_tol: f64,
    pub md_identity_rel: f64,
    pub monotone_slack: f64,
    pub ev_rel: f64,
    pub eg_floor: f64,
    pub translation_rel: f64,
    pub translation_convexity: f64,
    /// Translation step as a fraction of `R`.
    pub translation_step: f64,
    pub projection_tol: f64,
    /// Fields sampled along the path for the projection check.
    pub projection_fields: usize,
    pub normalization_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            rho_identity_tol: 1e-8,
            md_identity_rel: 1e-5,
            monotone_slack: 1e-8,
            ev_rel: 1e-3,
            eg_floor: -1e-8,
            translation_rel: 1e-4,
            translation_convexity: -1e-6,
            translation_step: 0.01,
            projection_tol: 1e-3,
            projection_fields: 5,
            normalization_tol: 1e-6,
        }
    }
}

/// Largest (or smallest) value with its parameter; NaN counts as worst.
fn worst<I: Iterator<Item = (f64, f64)>>(it: I, larger_is_worse: bool) -> Option<(f64, f64)> {
    it.fold(None, |acc, (t, v)| match acc {
        None => Some((t, v)),
        Some((_, b)) if b.is_nan() => acc,
        Some((_, b)) if v.is_nan() || (larger_is_worse && v > b) || (!larger_is_worse && v < b) => Some((t, v)),
        _ => acc,
    })
}

/// Relative gap of the identity `M_g - D_g = -int rho MA + int rho_0 MA(0)`.
pub fn md_relative_gap(e: &crate::energies::EnergyReport) -> f64 {
    let scale = (e.m_g - e.d_g).abs().max(e.int_rho_ma.abs() + e.int_rho0_ma0.abs()).max(1e-300);
    e.md_identity_gap().abs() / scale
}

/// `(1/t) int_0^t (I_g - J_g) ds` by the trapezoid rule over the states up to
/// index `i` (state 0 must be at `t = 0`).
pub fn ev_average(ts: &[f64], ij: &[f64], i: usize) -> f64 {
    let mut acc = 0.0;
    for k in 1..=i {
        acc += 0.5 * (ts[k] - ts[k - 1]) * (ij[k] + ij[k - 1]);
    }
    acc / ts[i]
}

/// Right side of the upper bound on `M_g(phi_t)`: `e^{sup rho_0 - 1} / (inf g t) - log inf g + int rho_0 MA(0)`.
pub fn mg_bound(e: &crate::energies::EnergyReport, t: f64) -> f64 {
    (e.sup_rho0 - 1.0).exp() / (e.inf_g * t) - e.inf_g.ln() + e.int_rho0_ma0
}

/// Right side of the bound on the normalized `int phi MA(phi)`.
pub fn intphi_bound(e: &crate::energies::EnergyReport, t: f64) -> f64 {
    (e.sup_rho0 - 1.0).exp() / (e.inf_g * t)
}

/// `(I_g - J_g)` of the translate `w_s(x) = w(x + s xi)` against the fixed
/// reference. The translate is evaluated by change of variables: its values,
/// gradient and Hessian at a node are those of `w` interpolated at `x + s xi`,
/// so no derivative of the shifted grid function (which does not satisfy the
/// box boundary condition) is taken.
pub fn translated_i_minus_j(f: &PotentialField, geo: &Geometry, g: &WeightFunction, xi: &[f64; 2], s: f64) -> Result<f64> {
    let m = f.model();
    let n = m.n();
    let grid = &m.grid;
    let norm = (0..n).map(|k| xi[k] * xi[k]).sum::<f64>().sqrt();
    if s.abs() * norm > grid.r / 4.0 + 1e-12 {
        return Err(Error::TranslationRange {
            shift: s.abs() * norm,
            limit: grid.r / 4.0,
        });
    }
    let phi = f.values();
    let comp = |sel: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..grid.len()).map(sel).collect() };
    let d1: Vec<Vec<f64>> = (0..n).map(|a| comp(&|k| geo.dphi[k][a])).collect();
    let d2 = [comp(&|k| geo.d2phi[k].a), comp(&|k| geo.d2phi[k].b), comp(&|k| geo.d2phi[k].c)];
    // Per node: phi_s, grad w_s, Hess w_s.
    let shifted: Vec<(f64, [f64; 2], Sym)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.point(k);
            let mut y = x;
            for a in 0..n {
                y[a] += s * xi[a];
            }
            let (w0y, g0y, h0y) = m.reference.eval(&y);
            let mut grad = g0y;
            for a in 0..n {
                grad[a] += cubic_sample(grid, &d1[a], &y);
            }
            let hess = h0y.add(&Sym::new(
                cubic_sample(grid, &d2[0], &y),
                if n > 1 { cubic_sample(grid, &d2[1], &y) } else { 0.0 },
                if n > 1 { cubic_sample(grid, &d2[2], &y) } else { 0.0 },
            ));
            (w0y + cubic_sample(grid, &phi, &y) - m.w0[k], grad, hess)
        })
        .collect();
    // Shifted points past the box edge use the evenly continued derivatives;
    // the few corner nodes where this loses definiteness carry negligible
    // weight and contribute zero.
    let det = |h: &Sym| h.det(n).max(0.0);
    // E_g by Simpson in the interpolation parameter.
    const NODES: usize = 17;
    let mut e_g = 0.0;
    for i in 0..NODES {
        let r = i as f64 / (NODES - 1) as f64;
        let wr = if i == 0 || i == NODES - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        } / (3.0 * (NODES - 1) as f64);
        let acc: f64 = (0..grid.len())
            .map(|k| {
                let (p, gs, hs) = &shifted[k];
                let y = [(1.0 - r) * m.grad0[k][0] + r * gs[0], (1.0 - r) * m.grad0[k][1] + r * gs[1]];
                let h = m.hess0[k].scale(1.0 - r).add(&hs.scale(r));
                m.quad[k] * p * g.eval(&y) * det(&h)
            })
            .sum();
        e_g += wr * acc;
    }
    let phi_ma_g: f64 = (0..grid.len())
        .map(|k| {
            let (p, gs, hs) = &shifted[k];
            m.quad[k] * p * g.eval(gs) * det(hs)
        })
        .sum();
    Ok((e_g - phi_ma_g) / m.volume)
}

/// `f(s) = (I_g - J_g)(w(. + s xi))` on `s = k * step`, `k = -2..=2`.
pub fn check_translation(f: &PotentialField, g: &WeightFunction, xi: &[f64; 2], step: f64, floor: f64) -> Result<TranslationProfile> {
    let geo = f.geometry(floor)?;
    let ks: Vec<i32> = (-2..=2).collect();
    let values = ks
        .iter()
        .map(|&k| translated_i_minus_j(f, &geo, g, xi, k as f64 * step))
        .collect::<Result<Vec<f64>>>()?;
    let derivative = (values[3] - values[1]) / (2.0 * step);
    let second: Vec<f64> = (1..4).map(|k| values[k + 1] - 2.0 * values[k] + values[k - 1]).collect();
    Ok(TranslationProfile {
        s: ks.iter().map(|&k| k as f64 * step).collect(),
        values,
        derivative,
        second_differences: second,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationProfile {
    pub s: Vec<f64>,
    pub values: Vec<f64>,
    /// Central difference at `s = 0`.
    pub derivative: f64,
    pub second_differences: Vec<f64>,
}

impl TranslationProfile {
    pub fn relative_derivative(&self) -> f64 {
        self.derivative.abs() / (1.0 + self.values[2].abs())
    }

    pub fn min_second_difference(&self) -> f64 {
        self.second_differences.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Largest pairwise distance between the extremal covectors of `fields`.
pub fn check_projection_invariance(fields: &[PotentialField], floor: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    if fields.len() < 2 {
        return Err(Error::Config("projection invariance needs at least two fields".into()));
    }
    let etas = fields
        .par_iter()
        .map(|f| Ok(extremal_field(f, &f.geometry(floor)?)?.eta))
        .collect::<Result<Vec<_>>>()?;
    let mut d: f64 = 0.0;
    for i in 0..etas.len() {
        for j in i + 1..etas.len() {
            let dist = etas[i].iter().zip(&etas[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            d = d.max(dist);
        }
    }
    Ok((d, etas))
}

/// Evenly spaced indices `0..len`, at most `k` of them, always including the ends.
fn spread(len: usize, k: usize) -> Vec<usize> {
    if len <= k {
        return (0..len).collect();
    }
    let mut v: Vec<usize> = (0..k).map(|i| (i * (len - 1) + (k - 1) / 2) / (k - 1)).collect();
    v.dedup();
    v
}

/// Run every named check over `record`.
pub fn run_suite(record: &RunRecord, cfg: &VerifyConfig) -> Result<CheckReport> {
    let st = &record.states;
    let mut checks = Vec::new();
    if st.is_empty() {
        for name in CHECK_NAMES {
            checks.push(Check::skipped(name, "", "record has no states"));
        }
        return Ok(CheckReport { checks });
    }
    let ts: Vec<f64> = st.iter().map(|s| s.t).collect();
    let ij: Vec<f64> = st.iter().map(|s| s.energies.i_g - s.energies.j_g).collect();
    let path = st.len() >= 2;

    let stmt = "rho + (1 - t) phi - log g_phi(grad w) - L = 0 pointwise";
    let (t, v) = worst(st.iter().map(|s| (s.t, s.diagnostics.rho_identity)), true).unwrap();
    checks.push(Check::new("rho_identity", stmt, v, Relation::AtMost, cfg.rho_identity_tol).at(Some(t)));

    let stmt = "M_g - D_g = -int rho_phi MA(phi) + int rho_0 MA(0), relative";
    let (t, v) = worst(st.iter().map(|s| (s.t, md_relative_gap(&s.energies))), true).unwrap();
    checks.push(Check::new("md_identity", stmt, v, Relation::AtMost, cfg.md_identity_rel).at(Some(t)));

    let stmt = "I_g - J_g nondecreasing along the path";
    if path {
        let (t, v) = worst((1..st.len()).map(|k| (ts[k], ij[k - 1] - ij[k])), true).unwrap();
        checks.push(Check::new("ij_monotone", stmt, v, Relation::AtMost, cfg.monotone_slack).at(Some(t)).with_detail("largest decrease".into()));
    } else {
        checks.push(Check::skipped("ij_monotone", stmt, "single state"));
    }

    let stmt = "E_g(phi_t) = (1/t) int_0^t (I_g - J_g) ds, trapezoid over states";
    if path && ts[0] == 0.0 {
        let (t, v) = worst(
            (1..st.len()).map(|i| {
                let avg = ev_average(&ts, &ij, i);
                let eg = st[i].energies.e_g;
                (ts[i], (eg - avg).abs() / eg.abs().max(1e-12))
            }),
            true,
        )
        .unwrap();
        checks.push(Check::new("ev_formula", stmt, v, Relation::AtMost, cfg.ev_rel).at(Some(t)));
    } else {
        let why = if path { "path does not start at t = 0" } else { "single state" };
        checks.push(Check::skipped("ev_formula", stmt, why));
    }

    let stmt = "E_g(phi_t) >= 0";
    let (t, v) = worst(st.iter().map(|s| (s.t, s.energies.e_g)), false).unwrap();
    checks.push(Check::new("eg_nonneg", stmt, v, Relation::AtLeast, cfg.eg_floor).at(Some(t)));

    let positive: Vec<&crate::record::StateRecord> = st.iter().filter(|s| s.t > 0.0).collect();
    let stmt = "(1/V) int phi_t MA(phi_t) <= e^{sup rho_0 - 1} / (inf g t)";
    if positive.is_empty() {
        checks.push(Check::skipped("intphi_bound", stmt, "no state with t > 0"));
    } else {
        let (t, v) = worst(
            positive.iter().map(|s| (s.t, s.energies.int_phi_ma - intphi_bound(&s.energies, s.t))),
            true,
        )
        .unwrap();
        checks.push(
            Check::new("intphi_bound", stmt, v, Relation::AtMost, 0.0)
                .at(Some(t))
                .with_detail("value is lhs - rhs".into()),
        );
    }

    let stmt = "M_g(phi_t) <= e^{sup rho_0 - 1}/(inf g t) - log inf g + int rho_0 MA(0)";
    if positive.is_empty() {
        checks.push(Check::skipped("mg_bound", stmt, "no state with t > 0"));
    } else {
        let (t, v) = worst(positive.iter().map(|s| (s.t, s.energies.m_g - mg_bound(&s.energies, s.t))), true).unwrap();
        // Tightness: M_g t over the numerator of the t^{-1} term.
        let tight = positive
            .iter()
            .map(|s| s.energies.m_g * s.t * s.energies.inf_g / (s.energies.sup_rho0 - 1.0).exp())
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(
            Check::new("mg_bound", stmt, v, Relation::AtMost, 0.0)
                .at(Some(t))
                .with_detail(format!("value is lhs - rhs; max M_g t / numerator = {tight:.4e}")),
        );
    }

    let stmt = "lambda_1 + t < 0 for 0 < t < 1";
    let eig: Vec<(f64, f64, bool)> = st
        .iter()
        .filter(|s| s.t > 0.0 && s.t < 1.0)
        .filter_map(|s| s.lambda1.map(|l| (s.t, l.lambda1 + s.t, l.reliable)))
        .collect();
    if eig.is_empty() {
        checks.push(Check::skipped("eigen_margin", stmt, "no eigenvalue estimates with 0 < t < 1"));
    } else {
        let (t, v) = worst(eig.iter().map(|e| (e.0, e.1)), true).unwrap();
        let unreliable = eig.iter().filter(|e| !e.2).count();
        let mut c = Check::new("eigen_margin", stmt, v, Relation::AtMost, 0.0).at(Some(t));
        if v == 0.0 {
            c.outcome = Outcome::Fail;
        }
        if unreliable > 0 {
            c.detail = format!("{unreliable} estimate(s) flagged unreliable");
        }
        checks.push(c);
    }

    translation_checks(record, cfg, &mut checks);
    projection_check(record, cfg, &mut checks);

    let stmt = "M nonincreasing along the path (g = 1)";
    let constant = matches!(record.header.weight, crate::weights::WeightKind::Constant);
    if !constant {
        checks.push(Check::skipped("m_monotone_g1", stmt, "weight is not constant"));
    } else if !path {
        checks.push(Check::skipped("m_monotone_g1", stmt, "single state"));
    } else {
        let (t, v) = worst((1..st.len()).map(|k| (ts[k], st[k].energies.m - st[k - 1].energies.m)), true).unwrap();
        checks.push(Check::new("m_monotone_g1", stmt, v, Relation::AtMost, cfg.monotone_slack).at(Some(t)).with_detail("largest increase".into()));
    }

    let stmt = "int (e^rho - 1) MA = int (g(grad w) - 1) MA = int theta_a MA = 0";
    let (t, v) = worst(
        st.iter().map(|s| {
            let d = &s.diagnostics;
            let th = d.norm_theta.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            (s.t, d.norm_ricci.abs().max(d.norm_weight.abs()).max(th))
        }),
        true,
    )
    .unwrap();
    let last = &st.last().unwrap().diagnostics;
    checks.push(
        Check::new("normalization_suite", stmt, v, Relation::AtMost, cfg.normalization_tol)
            .at(Some(t))
            .with_detail(format!(
                "last state: ricci {:.1e}, weight {:.1e}, theta {:?}, mass defect {:.1e}",
                last.norm_ricci,
                last.norm_weight,
                last.norm_theta.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>(),
                last.mass_defect
            )),
    );

    let order = |c: &Check| CHECK_NAMES.iter().position(|n| *n == c.name).unwrap_or(usize::MAX);
    checks.sort_by_key(order);
    Ok(CheckReport { checks })
}

fn translation_checks(record: &RunRecord, cfg: &VerifyConfig, checks: &mut Vec<Check>) {
    let s1 = "d/ds (I_g - J_g)(translate(phi_t, xi, s)) = 0 at s = 0";
    let s2 = "s -> (I_g - J_g)(translate(phi_t, xi, s)) convex";
    let Some(idx) = record.states.iter().rposition(|s| s.t > 0.0 && s.t < 1.0) else {
        checks.push(Check::skipped("translation_critical", s1, "no state with 0 < t < 1"));
        checks.push(Check::skipped("translation_convex", s2, "no state with 0 < t < 1"));
        return;
    };
    let t = record.states[idx].t;
    let prep = || -> Result<(PotentialField, WeightFunction, f64)> {
        let model = record.model()?;
        let g = record.weight(model.polytope.clone());
        let step = cfg.translation_step * model.grid.r;
        Ok((record.field(&model, idx)?, g, step))
    };
    let (f, g, step) = match prep() {
        Ok(v) => v,
        Err(e) => {
            checks.push(Check::failed("translation_critical", s1, e.to_string()));
            checks.push(Check::failed("translation_convex", s2, e.to_string()));
            return;
        }
    };
    let n = f.model().n();
    let floor = record.header.solve.convexity_floor;
    // Criticality needs M_g bounded below, which fails when the weighted
    // barycenter (the twisted Futaki invariant) is nonzero.
    let bg = g.weighted_barycenter();
    let futaki = bg[..n].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let critical_expected = futaki <= 1e-10;
    let mut crit: f64 = 0.0;
    let mut conv = f64::INFINITY;
    let mut detail = Vec::new();
    for a in 0..n {
        let mut xi = [0.0; 2];
        xi[a] = 1.0;
        match check_translation(&f, &g, &xi, step, floor) {
            Ok(p) => {
                crit = crit.max(p.relative_derivative());
                conv = conv.min(p.min_second_difference());
                detail.push(format!("xi=e{}: f'(0) {:.2e}", a + 1, p.derivative));
            }
            Err(e) => {
                checks.push(Check::failed("translation_critical", s1, e.to_string()).at(Some(t)));
                checks.push(Check::failed("translation_convex", s2, e.to_string()).at(Some(t)));
                return;
            }
        }
    }
    if critical_expected {
        checks.push(Check::new("translation_critical", s1, crit, Relation::AtMost, cfg.translation_rel).at(Some(t)).with_detail(detail.join(", ")));
    } else {
        checks.push(Check::skipped(
            "translation_critical",
            s1,
            &format!("weighted barycenter ({:.3e}, {:.3e}) is nonzero, so M_g is unbounded; {}", bg[0], bg[1], detail.join(", ")),
        ));
    }
    checks.push(
        Check::new("translation_convex", s2, conv, Relation::AtLeast, cfg.translation_convexity)
            .at(Some(t))
            .with_detail(format!("step {step}")),
    );
}

fn projection_check(record: &RunRecord, cfg: &VerifyConfig, checks: &mut Vec<Check>) {
    let stmt = "extremal covector eta independent of the field";
    if record.states.len() < 2 {
        checks.push(Check::skipped("projection_invariance", stmt, "single state"));
        return;
    }
    let run = || -> Result<(f64, Vec<Vec<f64>>)> {
        let model = record.model()?;
        let fields = spread(record.states.len(), cfg.projection_fields)
            .into_iter()
            .map(|i| record.field(&model, i))
            .collect::<Result<Vec<_>>>()?;
        check_projection_invariance(&fields, record.header.solve.convexity_floor)
    };
    match run() {
        Ok((d, etas)) => {
            let first = etas.first().cloned().unwrap_or_default();
            checks.push(
                Check::new("projection_invariance", stmt, d, Relation::AtMost, cfg.projection_tol)
                    .with_detail(format!("{} fields, eta[0] = {:?}", etas.len(), first)),
            );
        }
        Err(e) => checks.push(Check::failed("projection_invariance", stmt, e.to_string())),
    }
}

/// Corrupt `record` so that the named check must fail. Used to demonstrate
/// that every check can fail.
pub fn inject_fault(record: &mut RunRecord, check: &str) -> Result<()> {
    let n = record.states.len();
    if n < 2 {
        return Err(Error::Config("fault injection needs a record with at least two states".into()));
    }
    let last = n - 1;
    let mid = n / 2;
    match check {
        "rho_identity" => record.states[mid].diagnostics.rho_identity = 1e-4,
        "md_identity" => record.states[mid].energies.int_rho_ma += 1e-2,
        "ij_monotone" => {
            let e = &mut record.states[mid].energies;
            e.i_g -= 1.0;
        }
        "ev_formula" => record.states[last].energies.e_g *= 1.5,
        "eg_nonneg" => record.states[mid].energies.e_g = -1e-3,
        "intphi_bound" => {
            let s = &mut record.states[last];
            s.energies.int_phi_ma = intphi_bound(&s.energies, s.t) + 1.0;
        }
        "mg_bound" => {
            let s = &mut record.states[last];
            s.energies.m_g = mg_bound(&s.energies, s.t) + 1.0;
        }
        "eigen_margin" => {
            let s = record
                .states
                .iter_mut()
                .find(|s| s.t > 0.0 && s.t < 1.0 && s.lambda1.is_some())
                .ok_or_else(|| Error::Config("record has no eigenvalue estimates".into()))?;
            if let Some(l) = s.lambda1.as_mut() {
                l.lambda1 = 0.5;
            }
        }
        "translation_critical" => {
            // Add an odd bump decaying faster than D^2 w_0: still convex and
            // compatible with the box, but no longer critical for translations.
            let model = record.model()?;
            let idx = record.states.iter().rposition(|s| s.t > 0.0 && s.t < 1.0).unwrap_or(last);
            for k in 0..model.grid.len() {
                let x = model.grid.point(k);
                record.states[idx].phi_hi[k] += 0.05 * x[0] * (-(x[0] * x[0] + x[1] * x[1])).exp();
            }
        }
        "translation_convex" => {
            // A non-convex potential admits no convex translation profile.
            let model = record.model()?;
            let idx = record.states.iter().rposition(|s| s.t > 0.0 && s.t < 1.0).unwrap_or(last);
            for k in 0..model.grid.len() {
                let x = model.grid.point(k);
                record.states[idx].phi_hi[k] -= 1.5 * model.w0[k] + 0.1 * (x[0] * x[0]).min(1.0);
            }
        }
        "projection_invariance" => {
            // w = w_0 / 2 has gradient image P / 2. On the segment every field
            // compatible with the reflecting boundary has the same image and
            // eta = 0 by symmetry, so break the boundary with a slope instead.
            let model = record.model()?;
            for k in 0..model.grid.len() {
                let x = model.grid.point(k);
                record.states[last].phi_hi[k] = if model.n() == 1 { record.states[last].phi_hi[k] + 0.05 * x[0] } else { -0.5 * model.w0[k] };
                record.states[last].phi_lo[k] = 0.0;
            }
        }
        "m_monotone_g1" => {
            if !matches!(record.header.weight, crate::weights::WeightKind::Constant) {
                return Err(Error::Config("m_monotone_g1 applies to constant weights only".into()));
            }
            record.states[last].energies.m = record.states[last - 1].energies.m + 1.0;
        }
        "normalization_suite" => record.states[mid].diagnostics.norm_weight = 1e-3,
        other => return Err(Error::Config(format!("unknown check `{other}`"))),
    }
    Ok(())
}
