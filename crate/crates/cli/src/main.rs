//! `pointfill` — reproducible point-cloud completion workflows.
//!
//! Every run echoes its fully-resolved configuration as a `CONFIG {json}`
//! line and ends with a single machine-parsable `RESULT {json}` line.
//! Exit codes: 0 success, 2 usage/config/format error, 3 runtime numeric
//! failure.

mod commands;
mod config;
mod dataset;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::RoleArg;

#[derive(Parser)]
#[command(name = "pointfill", version, about = "Point-cloud completion pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// Dataset spec JSON (strict schema)
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Generate N synthetic objects at desk scale instead
    #[arg(long, value_name = "N")]
    synthetic: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize a benchmark: manifest, ground-truth clouds, eval grid
    GenData {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        /// Master seed (overrides the spec file's seed)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Optimize a model on a benchmark's training split
    Train {
        /// Benchmark directory from gen-data
        #[arg(long)]
        data: PathBuf,
        /// Run config JSON ({"model": .., "train": .., "model_seed": ..})
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint path to write
        #[arg(long)]
        out: PathBuf,
        /// Continue from an earlier checkpoint (bit-exact replay)
        #[arg(long)]
        resume: Option<PathBuf>,
        /// JSON-lines log path (default: <out>.log.jsonl)
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a checkpoint on the materialized eval grid
    Eval {
        /// Benchmark directory from gen-data
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to evaluate
        #[arg(long)]
        ckpt: PathBuf,
        /// Metrics report JSON to write
        #[arg(long)]
        report: PathBuf,
        /// Which split to score
        #[arg(long, value_enum, default_value = "test")]
        role: RoleArg,
    },
    /// Complete one partial cloud
    Complete {
        /// Checkpoint to run
        #[arg(long)]
        ckpt: PathBuf,
        /// Partial input cloud (XYZ)
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Completed cloud to write (XYZ)
        #[arg(long)]
        out: PathBuf,
        /// Also write an ASCII PLY next to the XYZ output
        #[arg(long)]
        ply: bool,
    },
    /// List a checkpoint's tensors and parameter counts
    Inspect {
        /// Checkpoint to read
        #[arg(long)]
        ckpt: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), error::CliError> {
    match &cli.command {
        Command::GenData { out, source, seed } => {
            commands::gen_data(out, source.spec.as_ref(), source.synthetic, *seed)
        }
        Command::Train {
            data,
            config,
            out,
            resume,
            log,
        } => commands::train(data, config, out, resume.as_ref(), log.as_ref()),
        Command::Eval {
            data,
            ckpt,
            report,
            role,
        } => commands::eval(data, ckpt, report, *role),
        Command::Complete {
            ckpt,
            input,
            out,
            ply,
        } => commands::complete(ckpt, input, out, *ply),
        Command::Inspect { ckpt } => commands::inspect(ckpt),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
