use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use obbq::heat::compute_profiles_cached;
use obbq::io::{self, RunConfig, Slice};
use obbq::operators::{CutoffFamily, DriftScheme};
use obbq::grid::Field;
use obbq::solver::Solver;
use obbq::sweep::{run_sweep, RadiusRecord, SweepIo, SweepStatus};
use obbq::verify::verify_state;
use obbq::{ContinuationState, Error, Grid, OperatorSet};

/// Exit status for an inconclusive sweep.
const INCONCLUSIVE: u8 = 2;
/// Exit status when a verification check fails.
const CHECKS_FAILED: u8 = 9;
/// Exit status for malformed command lines.
const USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "obbq", version, about = "Self-similar profiles of the Oberbeck-Boussinesq system with Newtonian gravity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set solver.tolerance=1e-9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Heat profiles of the initial data and their decay report.
    Heat(RunArgs),
    /// Continuation to λ = 1 on a single domain.
    Solve(RunArgs),
    /// Invading-domain sweep.
    Sweep(RunArgs),
    /// Verification report for a finished run directory.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// CSV slice of a stored field.
    Export {
        #[arg(long = "in", default_value = ".")]
        input: PathBuf,
        /// One of u, theta, v, psi, p, u0, theta0.
        #[arg(long)]
        field: String,
        /// Velocity component for vector fields.
        #[arg(long)]
        component: Option<usize>,
        /// Plane cut such as `z=0`.
        #[arg(long, conflicts_with = "line")]
        plane: Option<String>,
        /// Line cut such as `x:y=0,z=0`.
        #[arg(long)]
        line: Option<String>,
        /// Destination; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default configuration document.
    Config,
}

/// What a run directory records about the run that produced it.
#[derive(Serialize, Deserialize)]
struct RunRecord {
    command: String,
    config: RunConfig,
    radius: f64,
    cells: usize,
    cutoff: u32,
    lambda: f64,
    residual: f64,
}

enum Outcome {
    Done,
    Inconclusive,
    ChecksFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = init_threads() {
        return fail(&e);
    }
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Inconclusive) => ExitCode::from(INCONCLUSIVE),
        Ok(Outcome::ChecksFailed) => ExitCode::from(CHECKS_FAILED),
        Err(e) => fail(&e),
    }
}

fn init_threads() -> obbq::Result<()> {
    if let Ok(v) = std::env::var("OBBQ_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::Config(format!("OBBQ_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::Config("OBBQ_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

/// Prints the machine-readable error line and maps the error to its status.
fn fail(e: &Error) -> ExitCode {
    let mut line = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() });
    if let Error::ContinuationStalled { lambda, step, radius, history } = e {
        line["lambda"] = json!(lambda);
        line["step"] = json!(step);
        line["radius"] = json!(radius);
        line["history"] = serde_json::to_value(history).unwrap_or_default();
    }
    eprintln!("{line}");
    ExitCode::from(e.exit_code() as u8)
}

fn load(args: &RunArgs) -> obbq::Result<RunConfig> {
    let mut cfg = RunConfig::load(args.config.as_deref(), &args.set)?;
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::Io { path: cfg.output.clone(), source: e })?;
    Ok(cfg)
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(bytes: &[u8]) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(bytes).and_then(|_| out.flush());
}

fn write_json(path: &Path, value: &impl Serialize) -> obbq::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    io::write_atomic(path, text.as_bytes())
}

fn run(command: Command) -> obbq::Result<Outcome> {
    match command {
        Command::Config => {
            emit(format!("{}\n", RunConfig::defaults_json()).as_bytes());
            Ok(Outcome::Done)
        }
        Command::Heat(args) => heat(&load(&args)?),
        Command::Solve(args) => solve(&load(&args)?),
        Command::Sweep(args) => sweep(&load(&args)?),
        Command::Verify { input } => verify(&input),
        Command::Export { input, field, component, plane, line, out } => {
            let slice = match (plane, line) {
                (Some(p), None) => Slice::parse(&p)?,
                (None, Some(l)) => Slice::parse(&l)?,
                _ => return Err(Error::InvalidInput("exactly one of --plane or --line is required".into())),
            };
            export(&input, &field, component, slice, out.as_deref())
        }
    }
}

fn heat(cfg: &RunConfig) -> obbq::Result<Outcome> {
    let data = cfg.data.build::<f64>()?;
    let grid = Grid::new(cfg.grid.radius, cfg.grid.cells)?;
    let p = compute_profiles_cached(&data, &grid, &cfg.quadrature, &cfg.output.join("cache"))?;
    io::write_profiles(&cfg.output.join("profiles.obbq"), &p)?;
    let ops = OperatorSet::new(&grid, DriftScheme::Skew);
    let (cv, cg) = p.decay_constants();
    let (ru, rt) = p.residual_profile_pde(&ops)?;
    let (lu, lt) = p.gradient_l4_norms();
    let report = json!({
        "radius": cfg.grid.radius,
        "cells": cfg.grid.cells,
        "decay_constants": { "value": cv, "gradient": cg },
        "profile_residual": { "velocity": ru, "temperature": rt },
        "gradient_l4": { "velocity": lu, "temperature": lt },
        "divergence_defect": p.divergence_defect(&ops)?,
    });
    write_json(&cfg.output.join("heat_report.json"), &report)?;
    emit(format!("{}\n", serde_json::to_string_pretty(&report).unwrap_or_default()).as_bytes());
    Ok(Outcome::Done)
}

fn save_state(dir: &Path, state: &ContinuationState, profiles: &obbq::HeatProfiles) -> obbq::Result<()> {
    io::write_profiles(&dir.join("profiles.obbq"), profiles)?;
    io::write_vector(&dir.join("v.obbq"), &state.v)?;
    io::write_scalar(&dir.join("psi.obbq"), &state.psi)?;
    io::write_scalar(&dir.join("p.obbq"), &state.p)?;
    io::write_vector(&dir.join("u.obbq"), &profiles.u0().add(&state.v)?)?;
    io::write_scalar(&dir.join("theta.obbq"), &profiles.theta0().add(&state.psi)?)
}

fn solve(cfg: &RunConfig) -> obbq::Result<Outcome> {
    let data = cfg.data.build::<f64>()?;
    let grid = Grid::new(cfg.grid.radius, cfg.grid.cells)?;
    let profiles = compute_profiles_cached(&data, &grid, &cfg.quadrature, &cfg.output.join("cache"))?;
    let k = cfg.grid.cutoff_index();
    let mut solver = Solver::new(&profiles, &cfg.solver)?;
    let state = solver.continue_to_one(CutoffFamily::new(k)?, None)?;
    let residual = solver.residual_ssr(&state)?;
    state.write_log(&cfg.output.join("log.csv"))?;
    save_state(&cfg.output, &state, &profiles)?;
    write_json(&cfg.output.join("energy.json"), &solver.energy_report(&state)?)?;
    let record = RunRecord { command: "solve".into(), config: cfg.clone(), radius: cfg.grid.radius, cells: cfg.grid.cells, cutoff: k, lambda: state.lambda, residual };
    write_json(&cfg.output.join("run.json"), &record)?;
    emit(format!("solved R={} n={} k={k}: residual {residual:.3e} after {} sweeps\n", cfg.grid.radius, cfg.grid.cells, state.log.len()).as_bytes());
    Ok(Outcome::Done)
}

fn sweep(cfg: &RunConfig) -> obbq::Result<Outcome> {
    let data = cfg.data.build::<f64>()?;
    let snapshots = cfg.output.join("snapshots");
    std::fs::create_dir_all(&snapshots).map_err(|e| Error::Io { path: snapshots.clone(), source: e })?;
    let cache = cfg.output.join("cache");
    let progress = |r: &RadiusRecord| {
        eprintln!("R={} n={} k={} J={:.6e} L={:.6e} delta={} residual={:.2e} ({:.1}s)", r.radius, r.cells, r.cutoff, r.j, r.l, r.delta.map_or("-".into(), |d| format!("{d:.3e}")), r.residual, r.wall_seconds);
    };
    let sio = SweepIo { cache_dir: Some(&cache), snapshot_dir: Some(&snapshots), progress: Some(&progress) };
    let res = run_sweep(&data, None, &cfg.sweep, &cfg.solver, &cfg.quadrature, sio)?;
    let d = &res.diagnostics;
    d.write_csv(&cfg.output.join("diagnostics.csv"))?;
    write_json(&cfg.output.join("diagnostics.json"), d)?;
    save_state(&cfg.output, &res.state, &res.profiles)?;
    let last = d.records.last().expect("a sweep solves at least one radius");
    let record = RunRecord {
        command: "sweep".into(),
        config: cfg.clone(),
        radius: last.radius,
        cells: last.cells,
        cutoff: last.cutoff,
        lambda: res.state.lambda,
        residual: last.residual,
    };
    write_json(&cfg.output.join("run.json"), &record)?;
    emit(format!("sweep {:?}: final increment {:.3e}, differences {:?}\n", d.status, d.final_increment().unwrap_or(f64::NAN), d.deltas()).as_bytes());
    Ok(if d.status == SweepStatus::Inconclusive { Outcome::Inconclusive } else { Outcome::Done })
}

fn read_record(dir: &Path) -> obbq::Result<RunRecord> {
    let path = dir.join("run.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn verify(dir: &Path) -> obbq::Result<Outcome> {
    let rec = read_record(dir)?;
    let cfg = &rec.config;
    let data = cfg.data.build::<f64>()?;
    let profiles = io::read_profiles(&dir.join("profiles.obbq"), &data, &cfg.quadrature)?;
    let mut state = ContinuationState::new(&profiles, CutoffFamily::new(rec.cutoff)?, None)?;
    state.v = io::read_vector(&dir.join("v.obbq"))?;
    state.psi = io::read_scalar(&dir.join("psi.obbq"))?;
    state.p = io::read_scalar(&dir.join("p.obbq"))?;
    state.lambda = rec.lambda;
    let report = verify_state(&profiles, &state, &cfg.solver, &cfg.verify)?;
    report.write(&dir.join("report.json"), &dir.join("report.csv"))?;
    let mut text = String::new();
    for c in &report.checks {
        text += &format!("{:<32} {:>12.4e}  tol {:>10.3e}  {}\n", c.name, c.value, c.tolerance, if c.pass { "pass" } else { "FAIL" });
    }
    emit(text.as_bytes());
    Ok(if report.passed() { Outcome::Done } else { Outcome::ChecksFailed })
}

fn export(dir: &Path, field: &str, component: Option<usize>, slice: Slice, out: Option<&Path>) -> obbq::Result<Outcome> {
    let (grid, values) = match field {
        "u" | "v" | "u0" => {
            let file = if field == "u0" { "profiles.u0.obbq".to_string() } else { format!("{field}.obbq") };
            let f = io::read_field::<f64>(&dir.join(file))?;
            io::cell_values(&f, Some(component.ok_or_else(|| Error::InvalidInput(format!("field {field} needs --component")))?))?
        }
        "theta" | "psi" | "p" => io::cell_values(&io::read_field::<f64>(&dir.join(format!("{field}.obbq")))?, None)?,
        "theta0" => {
            let s = io::read_raw(&dir.join("profiles.cells.obbq"))?.into_scalars::<f64>()?;
            let t = s.into_iter().next().ok_or_else(|| Error::Format("empty profile bundle".into()))?;
            (*t.grid(), t.into_values())
        }
        other => return Err(Error::InvalidInput(format!("unknown field '{other}'"))),
    };
    match out {
        Some(path) => {
            let rows = io::export_slice(path, &grid, &values, slice)?;
            eprintln!("wrote {rows} rows to {}", path.display());
        }
        None => emit(&io::slice_csv(&grid, &values, slice)?.0),
    }
    Ok(Outcome::Done)
}
