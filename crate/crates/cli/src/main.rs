use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use kglab_core::harness::{run_experiment, ExperimentConfig, ExperimentKind};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Decay,
    Strichartz,
    Khinchin,
    Maxineq,
    Randomize,
    Solve,
    ConeAudit,
    Bush,
    Thresholds,
    Trilinear,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::Decay => ExperimentKind::Decay,
            Command::Strichartz => ExperimentKind::Strichartz,
            Command::Khinchin => ExperimentKind::Khinchin,
            Command::Maxineq => ExperimentKind::Maxineq,
            Command::Randomize => ExperimentKind::Randomize,
            Command::Solve => ExperimentKind::Solve,
            Command::ConeAudit => ExperimentKind::ConeAudit,
            Command::Bush => ExperimentKind::Bush,
            Command::Thresholds => ExperimentKind::Thresholds,
            Command::Trilinear => ExperimentKind::Trilinear,
        }
    }
}

/// Runs one experiment of the Klein-Gordon laboratory.
///
/// Exit status: 0 when the experiment passes its rule (or has none), 2 when
/// it fails it, 1 on any error.
#[derive(Debug, Parser)]
#[command(name = "kglab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML config. Without it every parameter takes its default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = cli.command.kind();
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::new(kind)),
    };
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if cfg.kind != kind {
        eprintln!("error: config is for `{}`, not `{}`", cfg.kind.name(), kind.name());
        return ExitCode::from(1);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match run_experiment(&cfg, &cli.out) {
        Ok(m) => {
            for o in &m.outputs {
                println!("{}  {}", o.sha256, cli.out.join(&o.path).display());
            }
            match m.verdict {
                Some(false) => {
                    println!("verdict: FAIL");
                    ExitCode::from(2)
                }
                Some(true) => {
                    println!("verdict: PASS");
                    ExitCode::SUCCESS
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
