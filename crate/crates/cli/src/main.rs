//! `liouville-lab`: command-line front end of the Liouville-system toolkit.
//!
//! Exit codes: 0 success, 1 validation failure, 2 configuration error,
//! 3 numerical failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ProfileOverrides;
use crate::error::CliError;
use crate::output::Output;

#[derive(Parser, Debug)]
#[command(name = "liouville-lab", version, about = "Numerical verification toolkit for Liouville systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides the LIOUVILLE_LAB_OUT environment variable).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent sweep points.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Skip the JSON report.
    #[arg(long, global = true)]
    no_json: bool,
    /// Skip CSV tables.
    #[arg(long, global = true)]
    no_csv: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the structural hypotheses on a coupling matrix.
    CheckMatrix(ConfigArg),
    /// Integrate an entire radial solution and report its invariants.
    SolveEntire(ProfileArgs),
    /// Pohozaev identity and its finite-radius decay.
    #[command(name = "pohozaav-check", alias = "pohozaev-check")]
    PohozaevCheck(ProfileArgs),
    /// Bounded kernels of the Fourier-mode linearized systems.
    Kernel(KernelArgs),
    /// Flat-torus Green's function, regular part and tail coefficients.
    GreenTorus(ConfigArg),
    /// Leading-order bubbling prediction for one scenario.
    LeadingTerm(LeadingArgs),
    /// Fit a power law (optionally log-corrected) to an (eps, value) series.
    OrderFit(OrderFitArgs),
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Outer radius of the integration.
    #[arg(long)]
    r_max: Option<f64>,
    /// Integrator tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Prescribed energies (comma separated); solves by shooting.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    target_sigma: Option<Vec<f64>>,
}

impl ProfileArgs {
    fn overrides(&self, max_mode: Option<u32>) -> ProfileOverrides {
        ProfileOverrides { r_max: self.r_max, tol: self.tol, target_sigma: self.target_sigma.clone(), max_mode }
    }
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    /// Largest Fourier mode to probe.
    #[arg(long)]
    max_mode: Option<u32>,
}

#[derive(Args, Debug)]
struct LeadingArgs {
    /// TOML scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Heights scales ε (comma separated, strictly decreasing).
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    #[arg(long)]
    r_max: Option<f64>,
}

#[derive(Args, Debug)]
struct OrderFitArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// CSV file with an (eps, value) header and rows.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Fit value ≈ C·eps²·log(1/eps) and report C.
    #[arg(long)]
    log_correction: bool,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let out = Output::resolve(cli.out, !cli.no_json, !cli.no_csv)?;
    match cli.command {
        Command::CheckMatrix(a) => commands::check_matrix(a.config.as_deref(), &out),
        Command::SolveEntire(a) => commands::solve_entire(a.config.config.as_deref(), a.overrides(None), &out),
        Command::PohozaevCheck(a) => commands::pohozaev_check(a.config.config.as_deref(), a.overrides(None), &out),
        Command::Kernel(a) => {
            let o = a.profile.overrides(a.max_mode);
            commands::kernel(a.profile.config.config.as_deref(), o, &out)
        }
        Command::GreenTorus(a) => commands::green_torus(a.config.as_deref(), &out),
        Command::LeadingTerm(a) => commands::leading_term(&a.config, a.eps_list, a.r_max, &out),
        Command::OrderFit(a) => {
            commands::order_fit_cmd(a.config.config.as_deref(), a.input.as_deref(), a.log_correction, &out)
        }
    }
}

#[cfg(feature = "parallel")]
fn run_with_jobs(cli: Cli) -> Result<bool, CliError> {
    match cli.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
            pool.install(|| run(cli))
        }
        None => run(cli),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_with_jobs(cli: Cli) -> Result<bool, CliError> {
    if cli.jobs.is_some() {
        eprintln!("warning: built without the `parallel` feature; --jobs ignored");
    }
    run(cli)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_with_jobs(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("validation failure: see the JSON report");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
