use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fh_gauss::{cmd_compute, cmd_iterate, cmd_verify, CliError, Format, RunConfig};

#[derive(Parser)]
#[command(name = "fh-gauss", version, about = "Orthogonal polynomials for a Gaussian weight with root-type singularities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["json", "csv"])]
    format: Option<String>,
    #[arg(long)]
    precision_bits: Option<u32>,
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate recurrence data and auxiliary quantities over the grid.
    Compute(Common),
    /// Run the verification suites; exits 0 iff every check passes.
    Verify(Common),
    /// Compare the iterated difference system with quadrature.
    Iterate(Common),
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(f) = &c.format {
        cfg.format = Format::parse(f)?;
    }
    if let Some(b) = c.precision_bits {
        cfg.precision_bits = b;
    }
    if let Some(n) = c.n_max {
        cfg.n_max = n;
    }
    cfg.check()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    match cli.command {
        Command::Compute(c) => cmd_compute(&load(&c)?)?.into_result(),
        Command::Verify(c) => cmd_verify(&load(&c)?)?.into_result(),
        Command::Iterate(c) => cmd_iterate(&load(&c)?)?.into_result(),
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("FH_GAUSS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(Cli::parse()) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fh-gauss: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
