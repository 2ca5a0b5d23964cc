//! Run records (line-delimited JSON) and field snapshots (plain text).
//!
//! A record is one JSON object per line, each tagged by `"type"`:
//! a `header` first, then one `state` per accepted parameter in increasing
//! `t`, then an optional `stop` line. States carry every scalar the checks
//! need plus the compensated field values, so a record can be verified and
//! its fields rebuilt without rerunning the solve.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energies::EnergyReport;
use crate::error::{Error, Result};
use crate::polytope::{Polytope, PolytopeSummary};
use crate::solver::{Lambda1, NewtonReport, PathRun, PathState, SolveConfig, StateDiagnostics, StopReason};
use crate::toricfield::{Grid, Model, PotentialField, ReferenceKind};
use crate::weights::{WeightFunction, WeightKind};

pub const SCHEMA_VERSION: u32 = 1;
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub r: f64,
    pub npts: usize,
}

impl GridSpec {
    pub fn of(grid: &Grid) -> Self {
        Self {
            n: grid.n,
            r: grid.r,
            npts: grid.npts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub schema_version: u32,
    pub producer: String,
    pub polytope: PolytopeSummary,
    pub polytope_hash: String,
    /// Polytope in its text format, enough to rebuild the model.
    pub polytope_text: String,
    pub weight: WeightKind,
    pub weight_label: String,
    pub grid: GridSpec,
    pub reference: ReferenceKind,
    pub solve: SolveConfig,
    pub t_max: f64,
}

impl RecordHeader {
    pub fn new(model: &Model, g: &WeightFunction, solve: &SolveConfig, t_max: f64) -> Self {
        let p = &model.polytope;
        Self {
            schema_version: SCHEMA_VERSION,
            producer: format!("gsoliton {}", env!("CARGO_PKG_VERSION")),
            polytope: p.summary(),
            polytope_hash: p.hash(),
            polytope_text: p.to_text(),
            weight: g.kind().clone(),
            weight_label: g.label(),
            grid: GridSpec::of(&model.grid),
            reference: model.kind,
            solve: solve.clone(),
            t_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub t: f64,
    pub newton: NewtonReport,
    pub energies: EnergyReport,
    pub lambda1: Option<Lambda1>,
    pub diagnostics: StateDiagnostics,
    pub near_degenerate: bool,
    pub phi_hi: Vec<f64>,
    pub phi_lo: Vec<f64>,
}

impl StateRecord {
    pub fn of(s: &PathState) -> Self {
        let (hi, lo) = s.field.parts();
        Self {
            t: s.t,
            newton: s.newton.clone(),
            energies: s.energies.clone(),
            lambda1: s.lambda1,
            diagnostics: s.diagnostics.clone(),
            near_degenerate: s.near_degenerate,
            phi_hi: hi.to_vec(),
            phi_lo: lo.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopRecord {
    pub stop: StopReason,
    pub rejections: Vec<(f64, String)>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(RecordHeader),
    State(StateRecord),
    Stop(StopRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: RecordHeader,
    pub states: Vec<StateRecord>,
    pub stop: Option<StopRecord>,
}

impl RunRecord {
    pub fn from_run(header: RecordHeader, run: &PathRun, elapsed_s: f64) -> Self {
        Self {
            header,
            states: run.states.iter().map(StateRecord::of).collect(),
            stop: Some(StopRecord {
                stop: run.stop.clone(),
                rejections: run.rejections.clone(),
                elapsed_s,
            }),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &Line::Header(self.header.clone()))?;
        writeln!(w)?;
        for s in &self.states {
            serde_json::to_writer(&mut w, &Line::State(s.clone()))?;
            writeln!(w)?;
        }
        if let Some(stop) = &self.stop {
            serde_json::to_writer(&mut w, &Line::Stop(stop.clone()))?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Record(e.to_string()))
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut header = None;
        let mut states = Vec::new();
        let mut stop = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line =
                serde_json::from_str(&line).map_err(|e| Error::Record(format!("line {}: {e}", i + 1)))?;
            match parsed {
                Line::Header(h) => {
                    if header.is_some() || !states.is_empty() {
                        return Err(Error::Record(format!("line {}: header must come first and once", i + 1)));
                    }
                    if h.schema_version != SCHEMA_VERSION {
                        return Err(Error::Record(format!(
                            "schema version {} (expected {SCHEMA_VERSION})",
                            h.schema_version
                        )));
                    }
                    header = Some(h);
                }
                Line::State(s) => {
                    if header.is_none() {
                        return Err(Error::Record(format!("line {}: state before header", i + 1)));
                    }
                    states.push(s);
                }
                Line::Stop(s) => stop = Some(s),
            }
        }
        let header = header.ok_or_else(|| Error::Record("missing header".into()))?;
        let len = header.grid.npts.pow(header.grid.n as u32);
        for (i, s) in states.iter().enumerate() {
            if s.phi_hi.len() != len || s.phi_lo.len() != len {
                return Err(Error::Record(format!("state {i}: field has the wrong size")));
            }
            if i > 0 && !(s.t > states[i - 1].t) {
                return Err(Error::Record(format!("state {i}: t not increasing")));
            }
        }
        Ok(Self { header, states, stop })
    }

    pub fn read_path(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }

    pub fn polytope(&self) -> Result<Arc<Polytope>> {
        let p = Polytope::from_text(&self.header.polytope_text)?;
        if p.hash() != self.header.polytope_hash {
            return Err(Error::Record("polytope hash does not match its text".into()));
        }
        Ok(Arc::new(p))
    }

    pub fn model(&self) -> Result<Arc<Model>> {
        let g = self.header.grid;
        Model::new(self.polytope()?, Grid::new(g.n, g.r, g.npts)?, self.header.reference)
    }

    pub fn weight(&self, p: Arc<Polytope>) -> WeightFunction {
        WeightFunction::from_kind(p, self.header.weight.clone())
    }

    pub fn field(&self, model: &Arc<Model>, i: usize) -> Result<PotentialField> {
        let s = self
            .states
            .get(i)
            .ok_or_else(|| Error::Record(format!("no state {i}")))?;
        PotentialField::from_parts(model.clone(), s.phi_hi.clone(), s.phi_lo.clone())
    }

    /// Whitespace-separated columns, one row per state, with a `#` header.
    pub fn plot_columns(&self) -> String {
        let mut out = String::from(
            "# t E E_g I_g-J_g L M M_g Ent D_g lambda1 newton_residual rho_identity soliton_residual tail_ratio\n",
        );
        for s in &self.states {
            let e = &s.energies;
            let l1 = s.lambda1.map(|l| l.lambda1).unwrap_or(f64::NAN);
            out.push_str(&format!(
                "{:.6} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.3e} {:.3e} {:.6e} {:.6e}\n",
                s.t,
                e.e,
                e.e_g,
                e.i_g - e.j_g,
                e.l,
                e.m,
                e.m_g,
                e.ent,
                e.d_g,
                l1,
                s.newton.residual,
                s.diagnostics.rho_identity,
                s.diagnostics.soliton_residual,
                s.diagnostics.tail_ratio,
            ));
        }
        out
    }
}

/// Write a field snapshot: a `#`-prefixed header (format version, `n`, `R`,
/// `N`, reference kind, polytope hash) followed by one `hi lo` pair per node
/// in grid order (x fastest).
pub fn write_snapshot<W: Write>(f: &PotentialField, mut w: W) -> Result<()> {
    let m = f.model();
    let g = &m.grid;
    writeln!(w, "# gsoliton-field {SNAPSHOT_VERSION}")?;
    writeln!(w, "# n {}", g.n)?;
    writeln!(w, "# R {}", g.r)?;
    writeln!(w, "# N {}", g.npts)?;
    writeln!(w, "# reference {}", serde_json::to_string(&m.kind)?.trim_matches('"'))?;
    writeln!(w, "# polytope {}", m.polytope.hash())?;
    let (hi, lo) = f.parts();
    for (a, b) in hi.iter().zip(lo) {
        writeln!(w, "{a:e} {b:e}")?;
    }
    Ok(())
}

/// Read a snapshot written by [`write_snapshot`] onto `model`, which must
/// match the header.
pub fn read_snapshot<R: BufRead>(model: Arc<Model>, r: R) -> Result<PotentialField> {
    let mut hi = Vec::new();
    let mut lo = Vec::new();
    let g = &model.grid;
    let mut seen_version = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let bad = |msg: String| Error::Record(format!("snapshot line {}: {msg}", i + 1));
        if let Some(rest) = line.strip_prefix('#') {
            let mut it = rest.split_whitespace();
            let key = it.next().unwrap_or("");
            let val = it.next().unwrap_or("");
            let ok = match key {
                "gsoliton-field" => {
                    seen_version = true;
                    val == SNAPSHOT_VERSION.to_string()
                }
                "n" => val == g.n.to_string(),
                "R" => val.parse::<f64>().map(|v| v == g.r).unwrap_or(false),
                "N" => val == g.npts.to_string(),
                "reference" => val == serde_json::to_string(&model.kind)?.trim_matches('"'),
                "polytope" => val == model.polytope.hash(),
                _ => true,
            };
            if !ok {
                return Err(bad(format!("header `{key} {val}` does not match the model")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace().map(|v| v.parse::<f64>());
        match (it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b))) => {
                hi.push(a);
                lo.push(b);
            }
            _ => return Err(bad("expected two numbers".into())),
        }
    }
    if !seen_version {
        return Err(Error::Record("snapshot has no version line".into()));
    }
    PotentialField::from_parts(model, hi, lo)
}
