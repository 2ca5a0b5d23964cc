use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gsoliton::oracle1d::{parse_weight_1d, shoot, ShootingProblem};
use gsoliton::polytope::CATALOG;
use gsoliton::record::RunRecord;
use gsoliton::run::{oracle_against_record, solve_record, PolytopeReport, PolytopeSource, RunConfig};
use gsoliton::solver::StopReason;
use gsoliton::toricfield::ReferenceKind;
use gsoliton::verify::{inject_fault, run_suite, VerifyConfig, CHECK_NAMES};

/// Continuity-method solver for weighted solitons on toric Fano manifolds.
///
/// Exit status: 0 ok, 1 a check failed, 2 error.
#[derive(Parser)]
#[command(name = "gsoliton", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, env = "GSOLITON_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print volume, barycenter, extremal field, l at the vertices and m_X.
    Polytope(PolytopeArgs),
    /// Follow the continuity path and write a run record.
    Solve(SolveArgs),
    /// Replay every check on a run record.
    Verify(VerifyArgs),
    /// Shooting oracle on P^1, optionally compared with a run record.
    Oracle1d(OracleArgs),
    /// List the built-in polytopes.
    ListExamples,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Built-in example (see list-examples).
    #[arg(long)]
    example: Option<String>,
    /// Polytope text file.
    #[arg(long)]
    polytope: Option<PathBuf>,
}

impl Source {
    fn get(&self) -> PolytopeSource {
        match (&self.example, &self.polytope) {
            (Some(e), _) => PolytopeSource::Example(e.clone()),
            (None, Some(p)) => PolytopeSource::File(p.clone()),
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Args)]
struct PolytopeArgs {
    #[command(flatten)]
    source: Source,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reference {
    Lattice,
    Vertices,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: Source,
    /// ke | mabuchi | kr | file:PATH (on P^1 also affine:s and quadratic:a,c,q).
    #[arg(long, default_value = "ke")]
    weight: String,
    /// Grid points per axis (odd). Default 257 in 1-D, 97 in 2-D.
    #[arg(short = 'N', long = "points")]
    npts: Option<usize>,
    /// Box half-width. Default 8 in 1-D, 6 in 2-D.
    #[arg(short = 'R', long = "box")]
    r: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    t_max: f64,
    /// Initial step in t.
    #[arg(long)]
    dt0: Option<f64>,
    #[arg(long)]
    dt_max: Option<f64>,
    #[arg(long)]
    dt_min: Option<f64>,
    /// Newton sup-residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Tail-growth factor at which a step is rejected.
    #[arg(long)]
    max_tail_growth: Option<f64>,
    #[arg(long, value_enum, default_value = "lattice")]
    reference: Reference,
    /// Skip the eigenvalue estimate at each state.
    #[arg(long)]
    no_eigen: bool,
    /// Run record (line-delimited JSON).
    #[arg(short, long, default_value = "run.jsonl")]
    out: PathBuf,
    /// Also write columnar plot data (t against energies, lambda_1, residuals).
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    record: PathBuf,
    /// Same run at a finer resolution; attaches refinement ratios.
    #[arg(long)]
    finer: Option<PathBuf>,
    /// Corrupt the record for one check before verifying (self-test).
    #[arg(long, value_name = "CHECK")]
    inject: Option<String>,
    /// Emit the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// 1 | affine:s | quadratic:a,c,q | table:PATH. Defaults to the record's weight.
    #[arg(long)]
    weight: Option<String>,
    /// Parameters to shoot at; with a record, defaults to every state.
    #[arg(long, value_delimiter = ',')]
    t: Vec<f64>,
    /// Compare against this run record.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Pass bound on sup |w_solver - w_oracle|.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

/// Stdout writes that surface a closed pipe as an error instead of a panic.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        writeln!(std::io::stdout().lock(), $($arg)*)?
    }};
}

macro_rules! outp {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        write!(std::io::stdout().lock(), $($arg)*)?
    }};
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let status = match cli.cmd {
        Command::Polytope(a) => cmd_polytope(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Oracle1d(a) => cmd_oracle1d(a),
        Command::ListExamples => cmd_list_examples(),
    };
    match status {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_list_examples() -> Result<bool> {
    for name in CATALOG {
        out!("{name}");
    }
    Ok(true)
}

fn cmd_polytope(a: PolytopeArgs) -> Result<bool> {
    let p = a.source.get().load()?;
    let rep = PolytopeReport::of(&p);
    if a.json {
        out!("{}", serde_json::to_string_pretty(&rep)?);
    } else {
        out!("{rep}");
    }
    Ok(true)
}

fn cmd_solve(a: SolveArgs) -> Result<bool> {
    let mut cfg = RunConfig::new(a.source.get(), &a.weight);
    cfg.npts = a.npts;
    cfg.r = a.r;
    cfg.t_max = a.t_max;
    cfg.reference = match a.reference {
        Reference::Lattice => ReferenceKind::LatticePoints,
        Reference::Vertices => ReferenceKind::Vertices,
    };
    let s = &mut cfg.solve;
    if let Some(v) = a.dt_max {
        s.dt_max = v;
        s.dt0 = s.dt0.min(v);
    }
    if let Some(v) = a.dt0 {
        s.dt0 = v;
    }
    if let Some(v) = a.dt_min {
        s.dt_min = v;
    }
    if let Some(v) = a.tol {
        s.tol = v;
    }
    if let Some(v) = a.max_tail_growth {
        s.max_tail_growth = v;
    }
    s.eigen = !a.no_eigen;
    cfg.out = a.out;
    cfg.plot = a.plot;

    let rec = solve_record(&cfg)?;
    let file = std::fs::File::create(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    rec.write(std::io::BufWriter::new(file))?;
    if let Some(path) = &cfg.plot {
        std::fs::write(path, rec.plot_columns()).with_context(|| format!("writing {}", path.display()))?;
    }
    let stop = rec.stop.as_ref().expect("fresh records carry a stop line");
    for s in &rec.states {
        let l1 = s.lambda1.map(|l| format!("{:+.5}", l.lambda1)).unwrap_or_else(|| "-".into());
        out!(
            "t {:.4}  newton {:>2}  residual {:.2e}  E {:+.6e}  I-J {:.6e}  M {:+.6e}  lambda1 {l1}",
            s.t,
            s.newton.iterations,
            s.newton.residual,
            s.energies.e,
            s.energies.i_g - s.energies.j_g,
            s.energies.m
        );
    }
    match &stop.stop {
        StopReason::Completed => out!("completed at t = {} in {:.1} s", cfg.t_max, stop.elapsed_s),
        StopReason::StepUnderflow { t, attempted, cause } => {
            out!("stalled at t = {t:.6} (step to {attempted:.6} rejected: {cause}) after {:.1} s", stop.elapsed_s)
        }
        StopReason::StartFailed { cause } => bail!("t = 0 solve failed: {cause} (record written to {})", cfg.out.display()),
    }
    out!("record written to {}", cfg.out.display());
    Ok(true)
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let mut rec = RunRecord::read_path(&a.record).with_context(|| format!("reading {}", a.record.display()))?;
    if let Some(check) = &a.inject {
        if !CHECK_NAMES.contains(&check.as_str()) {
            bail!("unknown check `{check}` (known: {})", CHECK_NAMES.join(", "));
        }
        inject_fault(&mut rec, check)?;
    }
    let cfg = VerifyConfig::default();
    let mut rep = run_suite(&rec, &cfg)?;
    if let Some(path) = &a.finer {
        let finer = RunRecord::read_path(path).with_context(|| format!("reading {}", path.display()))?;
        rep.attach_trend(&run_suite(&finer, &cfg)?);
    }
    if a.json {
        out!("{}", serde_json::to_string_pretty(&rep)?);
    } else {
        outp!("{}", rep.table());
        let failed = rep.failures();
        if failed.is_empty() {
            out!("all checks passed");
        } else {
            out!("failed: {}", failed.join(", "));
        }
    }
    Ok(rep.all_passed())
}

fn cmd_oracle1d(a: OracleArgs) -> Result<bool> {
    let Some(path) = &a.record else {
        let spec = a.weight.as_deref().unwrap_or("1");
        let g = parse_weight_1d(spec)?;
        if a.t.is_empty() {
            bail!("--t is required without --record");
        }
        let mut ok = true;
        for &t in &a.t {
            match shoot(&ShootingProblem::new(g.clone(), t, ReferenceKind::LatticePoints)?) {
                Ok(sol) => out!(
                    "t {t:.4}  c {:+.12}  w'(0) {:+.3e}  defects {:.1e} {:.1e}  mass {:.10}  shots {}",
                    sol.c, sol.slope, sol.forward_defect, sol.backward_defect, sol.mass, sol.shots
                ),
                Err(e) => {
                    out!("t {t:.4}  no solution: {e}");
                    ok = false;
                }
            }
        }
        return Ok(ok);
    };
    let rec = RunRecord::read_path(path).with_context(|| format!("reading {}", path.display()))?;
    let p = rec.polytope()?;
    let g = match &a.weight {
        Some(spec) => gsoliton::run::parse_weight(&p, spec)?,
        None => rec.weight(p),
    };
    let rows = oracle_against_record(&rec, &g, &a.t)?;
    let mut ok = true;
    for row in rows {
        match row.outcome {
            Ok(c) => {
                let pass = c.sup_dw <= a.tol;
                ok &= pass;
                let deltas: Vec<String> = c.energy_deltas.iter().map(|(k, v)| format!("{k} {v:+.2e}")).collect();
                out!(
                    "t {:.4}  sup|dw| {:.3e} at x = {:+.3}  {}  [{}]",
                    row.t,
                    c.sup_dw,
                    c.at,
                    if pass { "PASS" } else { "FAIL" },
                    deltas.join(", ")
                );
            }
            Err(e) => {
                ok = false;
                out!("t {:.4}  {e}", row.t);
            }
        }
    }
    Ok(ok)
}
