//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 1 for
//! failures while running. Errors are printed to stderr as one JSON object.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::avgops::circ_m;
use crate::dump::write_field;
use crate::error::{Error, Result};
use crate::grid::Grid3D;
use crate::harness::checks::run_check_ops;
use crate::harness::config::SimConfig;
use crate::harness::experiment::{energy_ledger, run_convergence};
use crate::harness::report::ConvergenceReport;
use crate::noise::make_paths;
use crate::nse::{run2d_with, run3d_with, Stepper, Trajectory};

#[derive(Parser, Debug)]
#[command(name = "thinflow", version, about = "Stochastic Navier-Stokes on thin domains and their 2D limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the averaging identities and inequalities on random fields.
    CheckOps {
        #[arg(long, default_value_t = 16)]
        nx: usize,
        #[arg(long, default_value_t = 16)]
        ny: usize,
        #[arg(long, default_value_t = 8)]
        nz: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.125, 0.0625, 0.03125])]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        fields: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the 3D system for one thickness and one sample.
    Run3d {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Defaults to the first sample seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Dump every n-th state (0 dumps the endpoints only).
        #[arg(long, default_value_t = 0)]
        snapshot_every: usize,
    },
    /// Integrate the 2D limit system for one sample.
    Run2d {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        snapshot_every: usize,
    },
    /// Run the coupled ensemble over the eps ladder and write report.json and report.csv.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads; the report does not depend on this.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-emit a saved report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidGrid(_) => "invalid_grid",
        Error::GridMismatch => "grid_mismatch",
        Error::InvalidConfig(_) => "invalid_config",
        Error::SolverDiverged { .. } => "solver_diverged",
        Error::NonFinite { .. } => "non_finite",
        Error::IndexOutOfRange { .. } => "index_out_of_range",
        Error::NotSolenoidal(_) => "not_solenoidal",
        Error::Domain(_) => "domain",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Toml(_) => "toml",
        Error::Csv(_) => "csv",
    }
}

fn report_error(code: i32, kind: &str, message: &str) -> i32 {
    let body = json!({ "error": { "kind": kind, "message": message }, "exit_code": code });
    let _ = writeln!(std::io::stderr(), "{body}");
    code
}

fn load_config(path: &Path) -> std::result::Result<SimConfig, Failure> {
    SimConfig::load(path).map_err(Failure::Usage)
}

/// Parses `args` (including the program name) and runs the command.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            return report_error(2, "usage", e.to_string().trim());
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(e)) => report_error(2, error_kind(&e), &e.to_string()),
        Err(Failure::Runtime(e)) => report_error(1, error_kind(&e), &e.to_string()),
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn execute(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::CheckOps { nx, ny, nz, eps, fields, seed, out } => {
            let first = *eps.first().ok_or_else(|| Failure::Usage(Error::InvalidConfig("empty eps list".into())))?;
            let base = Grid3D::new(nx, ny, nz, 1.0, 1.0, first).map_err(Failure::Usage)?;
            let report = run_check_ops(base, &eps, fields, seed).map_err(Failure::Usage)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(Error::from)?;
                std::fs::write(dir.join("check_ops.json"), serde_json::to_string_pretty(&report).map_err(Error::from)?)
                    .map_err(Error::from)?;
            }
            print_json(&json!({
                "identities_passed": report.identities_passed,
                "inequalities_passed": report.inequalities_passed,
                "ladyzhenskaya_slope": report.ladyzhenskaya.slope_aniso,
            }))?;
            if !report.passed() {
                return Err(Failure::Runtime(Error::Domain("operator checks failed".into())));
            }
        }
        Command::Run3d { config, eps, seed, out, snapshot_every } => {
            let cfg = load_config(&config)?;
            let grid = cfg.grid3d(eps).map_err(Failure::Usage)?;
            let seed = seed.unwrap_or(cfg.sample_seeds()[0]);
            let family = cfg.family(&[grid])?;
            let mut params = cfg.solver_params();
            params.snapshot_every = snapshot_every;
            let paths = make_paths(family.n_modes(), cfg.dt, cfg.t_final, seed)?;
            let stepper = Stepper::new(&params, family.f3d[0].clone())?;
            let traj = run3d_with(&stepper, &cfg.initial_3d(grid)?, &family, &paths, |_, _, _| Ok(()))?;
            write_run(&out, &traj, Some(eps), stepper.forcing_dual_sq(), cfg.nu, cfg.dt, seed)?;
            let alpha_final = circ_m(&traj.final_state);
            write_field(&out.join("fields"), "alpha_final", &alpha_final, None)?;
        }
        Command::Run2d { config, seed, out, snapshot_every } => {
            let cfg = load_config(&config)?;
            let seed = seed.unwrap_or(cfg.sample_seeds()[0]);
            let family = cfg.family(&[])?;
            let mut params = cfg.solver_params();
            params.snapshot_every = snapshot_every;
            let paths = make_paths(family.n_modes(), cfg.dt, cfg.t_final, seed)?;
            let stepper = Stepper::new(&params, family.f2d.clone())?;
            let traj = run2d_with(&stepper, &cfg.initial_2d()?, &family, &paths, |_, _, _| Ok(()))?;
            write_run(&out, &traj, None, stepper.forcing_dual_sq(), cfg.nu, cfg.dt, seed)?;
        }
        Command::Converge { config, out, threads } => {
            let cfg = load_config(&config)?;
            let report = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Failure::Usage(Error::InvalidConfig(e.to_string())))?
                    .install(|| run_convergence(&cfg))?,
                None => run_convergence(&cfg)?,
            };
            report.write(&out)?;
            let checks: serde_json::Map<String, serde_json::Value> =
                report.checks.iter().map(|c| (c.name.clone(), json!(c.passed))).collect();
            print_json(&json!({
                "report": out.join("report.json"),
                "incomplete_cells": report.incomplete.len(),
                "checks": checks,
            }))?;
        }
        Command::Report { input, format, out } => {
            let text = std::fs::read_to_string(&input).map_err(|e| Failure::Usage(e.into()))?;
            let report = ConvergenceReport::from_json(&text).map_err(Failure::Usage)?;
            let body = match format {
                Format::Json => report.to_json()?,
                Format::Csv => report.to_csv()?,
            };
            match out {
                Some(path) => std::fs::write(path, body).map_err(Error::from)?,
                None => std::io::stdout().lock().write_all(body.as_bytes()).map_err(Error::from)?,
            }
        }
    }
    Ok(())
}

fn write_run<G: crate::grid::Geometry>(
    out: &Path,
    traj: &Trajectory<G>,
    eps: Option<f64>,
    forcing_dual_sq: f64,
    nu: f64,
    dt: f64,
    seed: u64,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    traj.write_csv(std::fs::File::create(out.join("trajectory.csv"))?)?;
    for s in &traj.snapshots {
        write_field(&out.join("fields"), &format!("state_{:06}", s.step), &s.state, eps)?;
    }
    let ledger = energy_ledger(traj, forcing_dual_sq, nu, dt);
    let summary = json!({
        "schema_version": 1,
        "seed": seed,
        "eps": eps,
        "steps": traj.len() - 1,
        "final_energy": traj.energy.last(),
        "energy_ledger": ledger,
    });
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}
