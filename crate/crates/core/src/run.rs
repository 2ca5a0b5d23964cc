//! Batch entry points shared by the command-line front end and the tests:
//! loading polytopes and weights from their textual specs, solving a path
//! into a run record, polytope reports and oracle comparisons.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::continuum_extremal;
use crate::oracle1d::{compare, parse_weight_1d, shoot, OracleComparison, ShootingProblem};
use crate::polytope::{catalog_example, Polytope, PolytopeSummary};
use crate::record::{RecordHeader, RunRecord};
use crate::solver::{continue_path, SolveConfig};
use crate::toricfield::{Grid, Model, PotentialField, ReferenceKind};
use crate::weights::WeightFunction;

/// Where the polytope comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PolytopeSource {
    Example(String),
    File(PathBuf),
}

impl PolytopeSource {
    pub fn load(&self) -> Result<Arc<Polytope>> {
        let p = match self {
            Self::Example(name) => catalog_example(name)?,
            Self::File(path) => Polytope::from_text(&std::fs::read_to_string(path)?)?,
        };
        Ok(Arc::new(p))
    }
}

/// Build a weight on `p` from its spec: `ke` (g = 1), `mabuchi` (the affine
/// weight `1 - l` of the extremal field), `kr` (the soliton exponential),
/// `file:PATH` (a tabulated weight). On the segment the forms `affine:s` and
/// `quadratic:a,c,q` are accepted as well.
pub fn parse_weight(p: &Arc<Polytope>, spec: &str) -> Result<WeightFunction> {
    match spec.trim() {
        "ke" | "1" | "constant" => Ok(WeightFunction::make_constant(p.clone())),
        "mabuchi" => continuum_extremal(p).mabuchi_weight(p.clone()),
        "kr" => WeightFunction::make_kr(p.clone()),
        s => {
            if let Some(path) = s.strip_prefix("file:") {
                return WeightFunction::from_table_text(p.clone(), &std::fs::read_to_string(path)?);
            }
            if p.dim() == 1 && (s.starts_with("affine:") || s.starts_with("quadratic:")) {
                let g = parse_weight_1d(s)?;
                if g.polytope().hash() == p.hash() {
                    return Ok(WeightFunction::from_kind(p.clone(), g.kind().clone()));
                }
            }
            Err(Error::Config(format!(
                "unknown weight `{s}` (expected ke, mabuchi, kr or file:PATH)"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub polytope: PolytopeSource,
    pub weight: String,
    /// Grid points per axis; `None` picks 257 on the segment and 97 in 2-D.
    pub npts: Option<usize>,
    /// Box half-width; `None` picks 8 on the segment and 6 in 2-D.
    pub r: Option<f64>,
    pub t_max: f64,
    pub reference: ReferenceKind,
    pub solve: SolveConfig,
    pub out: PathBuf,
    /// Columnar per-state data (energies, lambda_1, residuals) for plotting.
    pub plot: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(polytope: PolytopeSource, weight: &str) -> Self {
        Self {
            polytope,
            weight: weight.to_string(),
            npts: None,
            r: None,
            t_max: 1.0,
            reference: ReferenceKind::LatticePoints,
            solve: SolveConfig::default(),
            out: PathBuf::from("run.jsonl"),
            plot: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max <= 1.0) {
            return Err(Error::Config(format!("t_max = {} outside (0, 1]", self.t_max)));
        }
        if let Some(r) = self.r {
            if !(r > 0.0 && r <= 40.0) {
                return Err(Error::Config(format!("R = {r} outside (0, 40]")));
            }
        }
        self.solve.validate()
    }

    pub fn model(&self) -> Result<(Arc<Model>, WeightFunction)> {
        self.validate()?;
        let p = self.polytope.load()?;
        let g = parse_weight(&p, &self.weight)?;
        let (n0, r0) = default_grid(p.dim());
        let grid = Grid::new(p.dim(), self.r.unwrap_or(r0), self.npts.unwrap_or(n0))?;
        Ok((Model::new(p, grid, self.reference)?, g))
    }
}

/// Default `(N, R)` per dimension.
pub fn default_grid(dim: usize) -> (usize, f64) {
    if dim == 1 {
        (257, 8.0)
    } else {
        (97, 6.0)
    }
}

/// Run the continuation from `phi = 0` and package it as a record. Solver
/// failures along the path end up in the record's stop line.
pub fn solve_record(cfg: &RunConfig) -> Result<RunRecord> {
    let (model, g) = cfg.model()?;
    let start = Instant::now();
    let run = continue_path(&PotentialField::zero(model.clone()), &g, &cfg.solve, cfg.t_max)?;
    let header = RecordHeader::new(&model, &g, &cfg.solve, cfg.t_max);
    Ok(RunRecord::from_run(header, &run, start.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolytopeReport {
    pub summary: PolytopeSummary,
    pub reflexive: bool,
    pub eta: Vec<f64>,
    pub vertex_values: Vec<f64>,
    pub m_x: f64,
}

impl PolytopeReport {
    pub fn of(p: &Polytope) -> Self {
        let ex = continuum_extremal(p);
        Self {
            summary: p.summary(),
            reflexive: p.validate_reflexive().0,
            eta: ex.eta,
            vertex_values: ex.vertex_values,
            m_x: ex.m_x,
        }
    }

    pub fn m_x_below_one(&self) -> bool {
        self.m_x < 1.0
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10}")).collect();
    format!("({})", parts.join(", "))
}

impl fmt::Display for PolytopeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.summary;
        writeln!(f, "polytope     {} (dimension {}, hash {})", s.name, s.dim, s.hash)?;
        writeln!(f, "reflexive    {}", if self.reflexive { "yes" } else { "no" })?;
        writeln!(f, "volume       {:.12}", s.volume)?;
        writeln!(f, "barycenter   {}", fmt_vec(&s.barycenter))?;
        writeln!(f, "eta          {}", fmt_vec(&self.eta))?;
        writeln!(f, "vertices and l:")?;
        for (v, l) in s.vertices.iter().zip(&self.vertex_values) {
            writeln!(f, "  {:<24} {l:+.10}", fmt_vec(v))?;
        }
        writeln!(f, "m_X          {:.10}", self.m_x)?;
        write!(f, "m_X < 1: {}", if self.m_x_below_one() { "yes" } else { "no" })
    }
}

/// One solver-versus-oracle comparison per requested parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleRow {
    pub t: f64,
    pub outcome: std::result::Result<OracleComparison, String>,
}

/// Compare the record states at the parameters `ts` (all states when empty)
/// against the shooting oracle for `g`. A parameter with no state in the
/// record is re-solved by continuation up to it.
pub fn oracle_against_record(record: &RunRecord, g: &WeightFunction, ts: &[f64]) -> Result<Vec<OracleRow>> {
    let model = record.model()?;
    if model.n() != 1 {
        return Err(Error::Config("the oracle comparison needs a one-dimensional record".into()));
    }
    let floor = record.header.solve.convexity_floor;
    let wanted: Vec<f64> = if ts.is_empty() {
        record.states.iter().map(|s| s.t).collect()
    } else {
        ts.to_vec()
    };
    let mut rows = Vec::new();
    for &t in &wanted {
        let field = match record.states.iter().position(|s| (s.t - t).abs() < 1e-12) {
            Some(i) => Some(record.field(&model, i)?),
            None => {
                let run = continue_path(&PotentialField::zero(model.clone()), g, &record.header.solve, t)?;
                run.states.into_iter().find(|s| (s.t - t).abs() < 1e-12).map(|s| s.field)
            }
        };
        let outcome = (|| {
            let pb = ShootingProblem::new(g.clone(), t, record.header.reference)?;
            let sol = shoot(&pb)?;
            let field = field.ok_or_else(|| Error::NoConvergence(format!("the discrete path does not reach t = {t}")))?;
            compare(&sol, &field, g, floor)
        })();
        rows.push(OracleRow {
            t,
            outcome: outcome.map_err(|e| e.to_string()),
        });
    }
    Ok(rows)
}
