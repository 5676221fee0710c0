use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glmcf::config::{keys_help, ExperimentConfig, Scenario};
use glmcf::scenarios::{execute, load_resume};

#[derive(Parser)]
#[command(name = "glmcf", version, about = "Lagrangian mean curvature flow experiments on flat tori")]
#[command(after_help = keys_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config key, e.g. `--set flow.cfl=0.1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Continue a run from a checkpoint written under `<out>/checkpoints/`.
    Resume {
        checkpoint: PathBuf,
        /// Output directory; defaults to the one holding `checkpoints/`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the refinement check of the evolution identities for a config.
    Verify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn load(config: &Path, out: Option<PathBuf>, set: &[String]) -> glmcf::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(config, set)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> glmcf::Result<bool> {
    let (cfg, resume) = match cli.command {
        Command::Run { config, out, set } => (load(&config, out, &set)?, None),
        Command::Verify { config, out, set } => {
            let mut cfg = load(&config, out, &set)?;
            cfg.scenario = Scenario::LemmaCheck;
            (cfg, None)
        }
        Command::Resume { checkpoint, out } => {
            let (mut cfg, r) = load_resume(&checkpoint)?;
            let parent = checkpoint.parent().and_then(|p| p.parent());
            if let Some(dir) = out.or_else(|| parent.map(|p| p.to_path_buf())) {
                cfg.output_dir = dir;
            }
            (cfg, Some(r))
        }
    };
    let outcome = execute(cfg.clone(), resume)?;
    println!("{}", glmcf::scenarios::report_text(&cfg, &outcome));
    println!("outputs written to {}", cfg.output_dir.display());
    Ok(outcome.verdict.unwrap_or(true))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verification failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
