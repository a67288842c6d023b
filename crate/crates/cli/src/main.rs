//! Experiment driver for the sector eigenvalue solver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure,
//! 4 missed convergence-rate target.

mod config;
mod experiments;

use std::f64::consts::TAU;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ConfigArgs;
use experiments::FieldDump;

/// Driver failures, each mapped to a documented exit code.
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Solver(String),
    RateMiss(String),
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "configuration: {m}"),
            AppError::Solver(m) => write!(f, "solver: {m}"),
            AppError::RateMiss(m) => write!(f, "rate target missed: {m}"),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Solver(format!("output write failed: {e}"))
    }
}

impl AppError {
    fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Solver(_) => 3,
            AppError::RateMiss(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sector-iga",
    version,
    about = "Laplace eigenvalue studies on circular sectors with isogeometric discretizations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the exact spectrum as CSV.
    ExactSpectrum {
        /// Opening angle in radians.
        #[arg(long, default_value_t = TAU)]
        omega: f64,
        /// Number of eigenvalues.
        #[arg(long, default_value_t = 22)]
        count: usize,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve one mesh and tabulate the lowest eigenpairs.
    Solve {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Which schedule entry to run (default: the last).
        #[arg(long)]
        level_index: Option<usize>,
        /// Sample one eigenfunction on a parametric grid into this CSV.
        #[arg(long)]
        dump_field: Option<PathBuf>,
        /// 1-based rank of the mode to dump.
        #[arg(long, default_value_t = 1)]
        dump_rank: usize,
        /// Grid "NR,NPHI" for --dump-field.
        #[arg(long, default_value = "33,129")]
        field_grid: String,
    },
    /// Run a refinement schedule and estimate convergence rates.
    Convergence {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compare spectra of smoothness variants at matched size.
    SpectrumCompare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Variant "p=3,k=0,j1=5[,mu=...]", repeatable; default compares the
        /// configured space against its size-matched C^0 counterpart.
        #[arg(long = "variant")]
        variants: Vec<String>,
        /// Eigenvalues to compare (default: half the unconstrained count).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Print the suggested grading exponent.
    SuggestMu {
        /// Opening angle in radians.
        #[arg(long, default_value_t = TAU)]
        omega: f64,
        /// Spline degree p.
        #[arg(long, default_value_t = 2)]
        degree: usize,
        /// Angular mode index for the per-mode rule (default: first mode,
        /// run-level rule).
        #[arg(long)]
        mode: Option<usize>,
    },
    /// Dump knot vectors and the weighted control net as CSV.
    DumpGeometry {
        /// Opening angle in radians.
        #[arg(long, default_value_t = TAU)]
        omega: f64,
        /// Degree of a refined space to dump instead of the coarse net.
        #[arg(long)]
        degree: Option<usize>,
        /// Interior smoothness (default p-1).
        #[arg(long)]
        smoothness: Option<usize>,
        /// Radial elements of the refined space.
        #[arg(long)]
        j1: Option<usize>,
        /// Angular elements per radial element (default: arc count).
        #[arg(long)]
        angular_factor: Option<usize>,
        /// Grading exponent of the refined space.
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::ExactSpectrum {
            omega,
            count,
            output,
        } => experiments::run_exact(omega, count, &output),
        Command::Solve {
            cfg,
            level_index,
            dump_field,
            dump_rank,
            field_grid,
        } => {
            let res = cfg.load()?;
            let dump = dump_field
                .map(|path| FieldDump::parse(path, dump_rank, &field_grid))
                .transpose()?;
            experiments::run_solve(&res, level_index, dump.as_ref())
        }
        Command::Convergence { cfg } => experiments::run_convergence(&cfg.load()?),
        Command::SpectrumCompare {
            cfg,
            variants,
            count,
        } => experiments::run_spectrum_compare(&cfg.load()?, &variants, count),
        Command::SuggestMu {
            omega,
            degree,
            mode,
        } => experiments::run_suggest_mu(omega, degree, mode),
        Command::DumpGeometry {
            omega,
            degree,
            smoothness,
            j1,
            angular_factor,
            mu,
            output,
        } => {
            let refine = match (degree, j1) {
                (None, None) => None,
                (Some(p), Some(j1)) => {
                    let geo = sector_iga::geometry::SectorGeometry::new(omega)
                        .map_err(|e| AppError::Config(e.to_string()))?;
                    Some((
                        p,
                        smoothness.unwrap_or(p.saturating_sub(1)),
                        j1,
                        angular_factor.unwrap_or(geo.num_arcs()),
                        mu,
                    ))
                }
                _ => {
                    return Err(AppError::Config(
                        "refined dumps need both --degree and --j1".into(),
                    ))
                }
            };
            experiments::run_dump_geometry(omega, refine, &output)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
