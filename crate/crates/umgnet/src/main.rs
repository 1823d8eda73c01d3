use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use umgnet::commands::{cmd_active, cmd_eval, cmd_synth, cmd_train};
use umgnet::config::{Overrides, RunConfig};
use umgnet::{AppError, AppResult};

/// Uplift modeling with graph neural networks on bipartite user–product graphs.
#[derive(Debug, Parser)]
#[command(name = "umgnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Threads for the evaluation fan-out.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_parser = ["sage", "ngcf", "lgc"])]
    gnn: Option<String>,
    #[arg(long, global = true, value_parser = ["greedy", "eg", "random"])]
    policy: Option<String>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long = "frac-initial", global = true)]
    frac_initial: Option<f64>,
    #[arg(long = "frac-target", global = true)]
    frac_target: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a planted-effect dataset and write its tables.
    Synth,
    /// Train on every labeled user and write a checkpoint and predictions.
    Train,
    /// Inverted k-fold evaluation over several seeds.
    Eval,
    /// Active-learning run from a small seed set.
    Active,
}

fn run(cli: Cli) -> AppResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        output: cli.out,
        workers: cli.workers,
        gnn: cli.gnn.as_deref().map(str::parse).transpose()?,
        policy: cli.policy.as_deref().map(str::parse).transpose()?,
        folds: cli.folds,
        frac_initial: cli.frac_initial,
        frac_target: cli.frac_target,
    });
    let files = match cli.command {
        Command::Synth => cmd_synth(&cfg)?,
        Command::Train => cmd_train(&cfg)?,
        Command::Eval => cmd_eval(&cfg)?.1,
        Command::Active => cmd_active(&cfg)?.1,
    };
    for f in files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("ERROR usage: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e: AppError = e;
            eprintln!("ERROR {}: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
