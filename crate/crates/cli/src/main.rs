use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hjbr_cli::{parse_config, run, Command};

/// Solve, simulate and cross-check reflected-diffusion control problems.
#[derive(Debug, Parser)]
#[command(name = "hjbr", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Config file (`key = value` lines under `[section]` headers).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `[mc] seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn threads_from_env() -> Result<Option<usize>, String> {
    match std::env::var("HJBR_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(format!("HJBR_THREADS: positive integer required, got `{s}`")),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let setup = || -> Result<_, String> {
        if let Some(n) = threads_from_env()? {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
        }
        let text = std::fs::read_to_string(&cli.config).map_err(|e| format!("{}: {e}", cli.config.display()))?;
        let mut cfg = parse_config(&text).map_err(|e| format!("{}: {e}", cli.config.display()))?;
        cfg.command = cli.command;
        if let Some(dir) = &cli.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(seed) = cli.seed {
            cfg.mc.seed = seed;
        }
        Ok(cfg)
    };
    let cfg = match setup() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: {} check failed", cfg.command.name());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
