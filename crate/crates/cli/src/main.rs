mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Polarizable multipole Poisson–Boltzmann solver.
#[derive(Debug, Parser)]
#[command(name = "pmpb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solvation energy of one molecule at one grid spacing.
    Solve(SolveArgs),
    /// Runs a sequence of grid spacings and tabulates convergence.
    Converge(ConvergeArgs),
    /// Kirkwood sphere suite against the analytic solution.
    KirkwoodCheck(KirkwoodArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Multipole-extended PQR file.
    #[arg(long)]
    pub pqr: PathBuf,
    /// Sphere list for the dielectric boundary; defaults to the PQR radii.
    #[arg(long)]
    pub xyzr: Option<PathBuf>,
    /// `key = value` run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid spacing in Å, overriding the config.
    #[arg(long)]
    pub h: Option<f64>,
    /// Also write vacuum and solvated induced dipoles to mu.csv.
    #[arg(long)]
    pub dump_mu: bool,
    #[arg(long, default_value = "pmpb-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Case {
    Kirkwood,
    Files,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Monopole,
    Dipole,
    Quadrupole,
    Multipole,
    All,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[arg(long, value_enum)]
    pub case: Case,
    /// Grid spacings in Å, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub levels: Vec<f64>,
    /// Kirkwood moment set (kirkwood case only).
    #[arg(long, value_enum, default_value = "monopole")]
    pub which: Which,
    /// Multipole-extended PQR file (files case only).
    #[arg(long, required_if_eq("case", "files"))]
    pub pqr: Option<PathBuf>,
    #[arg(long)]
    pub xyzr: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "pmpb-out")]
    pub out: PathBuf,
}

/// The built-in suite uses a = 2 Å, ε₁ = 1, ε₂ = 80, κ = 0, q = 1 e_c,
/// d = (0, 0, 0.343) e_c·Å and a quadrupole scaled to a fixed energy.
/// These are conventions of this tool, not values from a reference.
#[derive(Debug, Args)]
pub struct KirkwoodArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub which: Which,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.25,0.125")]
    pub levels: Vec<f64>,
    #[arg(long, default_value = "pmpb-out")]
    pub out: PathBuf,
}

/// Failure with its process exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 1, error: error.into() }
    }

    pub fn convergence(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }
}

impl From<pmpb::Error> for Failure {
    fn from(e: pmpb::Error) -> Self {
        let code = match e.kind() {
            pmpb::ErrorKind::Input => 1,
            pmpb::ErrorKind::Convergence => 2,
            pmpb::ErrorKind::Geometry => 3,
        };
        Failure { code, error: e.into() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e)
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("PMPB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::input(anyhow::anyhow!("PMPB_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(Failure::input)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = init_threads().and_then(|()| match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Converge(a) => commands::converge(&a),
        Command::KirkwoodCheck(a) => commands::kirkwood_check(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
