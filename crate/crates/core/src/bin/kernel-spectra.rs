use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kernel_spectra::cli::{error_json, run, Command, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "kernel-spectra", version, about = "Gram spectra, alignment and training runs for kernelized two-layer ReLU networks")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Spectrum, label projections and generalization measure of H.
    Gram(Common),
    /// Full-batch gradient descent; writes the loss/accuracy trajectory.
    Train(Common),
    /// Measures and training results for every embedding in the config's compare list.
    Compare(Common),
    /// Builds an embedding and saves it as a reusable container.
    Embed(Common),
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let message = e.render().to_string();
            eprintln!(
                "{}",
                serde_json::json!({ "error": { "kind": "usage", "message": message.trim_end() } })
            );
            return ExitCode::from(2);
        }
        // --help and --version
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let (command, common) = match args.command {
        Cmd::Gram(c) => (Command::Gram, c),
        Cmd::Train(c) => (Command::Train, c),
        Cmd::Compare(c) => (Command::Compare, c),
        Cmd::Embed(c) => (Command::Embed, c),
    };
    let opts = RunOptions {
        out: common.out,
        seed: common.seed,
        threads: common.threads,
    };
    match ExperimentConfig::load(&common.config).and_then(|cfg| run(command, cfg, &opts)) {
        Ok(report) => {
            println!("{}", serde_json::json!({ "status": "ok", "files": report.files }));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
