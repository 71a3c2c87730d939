use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use endodyn::commands;
use endodyn::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "endodyn", version, about = "Simulate and diagnose endogenous random averaging dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one trajectory CSV per replica and a summary JSON.
    Simulate(Common),
    /// Run the configured diagnostics and write diagnostics.json.
    Diagnose(Common),
    /// Sweep one model parameter over a seed list and write sweep.csv.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `master_seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("ENDODYN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::config(format!("ENDODYN_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let (Command::Simulate(c) | Command::Diagnose(c) | Command::Sweep(c)) = &cli.command;
    let cfg = commands::with_seed(RunConfig::load(&c.config)?, c.seed);
    let out = commands::output_dir(&cfg, c.out.clone());
    match cli.command {
        Command::Simulate(_) => commands::simulate(&cfg, &out).map(drop),
        Command::Diagnose(_) => commands::diagnose(&cfg, &out).map(drop),
        Command::Sweep(_) => commands::sweep(&cfg, &out).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("endodyn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
