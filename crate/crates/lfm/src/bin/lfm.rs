use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lfm::commands::{self, OutDir};
use lfm::{CliError, CliResult, RunConfig};

/// Local feature mixup for long-tailed classification over embeddings.
#[derive(Debug, Parser)]
#[command(name = "lfm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Training arm such as `lfm`, `mixup` or `balce+remix`.
    #[arg(long, global = true)]
    arm: Option<String>,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate a balanced synthetic embedding set.
    Synth,
    /// Cut a balanced embedding file down to a long-tailed one.
    MakeLt,
    /// Report pair-sampling probabilities and the effective imbalance.
    Analyze,
    /// Two-stage training; writes the head and validation metrics.
    Train,
    /// Evaluate a trained head.
    Eval,
    /// Run the built-in self-checks.
    Verify,
    /// Grid over alpha and tau.
    Sweep,
}

fn run(cli: &Cli) -> CliResult<()> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let config = base.resolve(cli.seed, cli.arm.as_deref())?;
    let out = || -> CliResult<OutDir> {
        let path = cli
            .out
            .as_deref()
            .ok_or_else(|| CliError::Config("--out is required".into()))?;
        OutDir::prepare(path, cli.force)
    };
    let written = match cli.command {
        Command::Synth => commands::synth(&config, &out()?)?,
        Command::MakeLt => commands::make_lt(&config, &out()?)?,
        Command::Analyze => commands::analyze(&config, &out()?)?,
        Command::Train => commands::train_cmd(&config, &out()?)?,
        Command::Eval => commands::eval(&config, &out()?)?,
        Command::Sweep => commands::sweep(&config, &out()?)?,
        Command::Verify => {
            let dir = cli.out.as_ref().map(|_| out()).transpose()?;
            let suites = commands::verify_cmd(&config, dir.as_ref())?;
            for s in &suites {
                println!(
                    "{} {}: {}",
                    if s.passed { "PASS" } else { "FAIL" },
                    s.name,
                    s.detail
                );
            }
            let failed = suites.iter().filter(|s| !s.passed).count();
            if failed > 0 {
                return Err(CliError::Verification(format!(
                    "{failed} of {} suites failed",
                    suites.len()
                )));
            }
            return Ok(());
        }
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lfm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
