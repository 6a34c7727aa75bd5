use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use plr_cli::{execute, Stage};
use plr_core::ExperimentConfig;

/// Pseudo-label refinement experiments.
#[derive(Parser, Debug)]
#[command(name = "plr", version)]
struct Args {
    /// Stage to run: pretrain-source, infer-pseudolabels, analyze-noise, inject-noise,
    /// fit-labels, train-oracle, pretrain-cgan, plr-train, evaluate, gan-test,
    /// gan-train, plot, samples, pipeline
    stage: Stage,

    /// Configuration file (key = value lines)
    #[arg(long)]
    config: PathBuf,

    /// Number of seeds, starting at the configured seed
    #[arg(long, default_value_t = 1)]
    seeds: usize,

    /// Output directory; overrides `out_dir` in the configuration
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut cfg = match ExperimentConfig::from_file(&args.config) {
        Ok(c) => c.with_env_overrides(),
        Err(e) => {
            let e = plr_cli::CliError::from(e);
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    match execute(&cfg, args.stage, args.seeds) {
        Ok(exec) => {
            print!("{}", exec.render());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
