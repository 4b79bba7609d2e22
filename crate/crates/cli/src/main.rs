//! Command-line harness for the debiasing pipeline: model generation,
//! subspace estimation, single-configuration evaluation, the full
//! intervention grid, and correlation analysis.
//!
//! Exit codes: 0 success, 1 evaluation failure, 2 input/IO failure.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use commands::RunContext;
use debias_core::Error as CoreError;

#[derive(Parser, Debug)]
#[command(name = "debias", version, about = "Projective debiasing of a toy encoder with intrinsic and downstream bias evaluation")]
struct Cli {
    /// Model weight directory (manifest.txt, weights.bin, vocab.txt).
    #[arg(long, global = true, default_value = "model")]
    model: PathBuf,

    /// Gender pair file (JSON lines {"male", "female"}); embedded default
    /// set when omitted.
    #[arg(long, global = true)]
    pairs: Option<PathBuf>,

    /// Triple-pair dataset (JSON lines).
    #[arg(long, global = true)]
    stereoset: Option<PathBuf>,

    /// Occupation list (one word per line); embedded default when omitted.
    #[arg(long, global = true)]
    occupations: Option<PathBuf>,

    /// Template file (JSON lines {"template_id", "activity"}); embedded
    /// default when omitted.
    #[arg(long, global = true)]
    templates: Option<PathBuf>,

    /// Labeled NLI benchmark (JSON lines {"premise", "hypothesis", "label"}).
    #[arg(long, global = true)]
    benchmark: Option<PathBuf>,

    /// Fraction of most biased pairs averaged by the aggregate metrics.
    #[arg(long, global = true, default_value_t = 0.1)]
    top_frac: f64,

    /// A configuration is viable when its benchmark accuracy is at least
    /// this fraction of the baseline's.
    #[arg(long, global = true, default_value_t = 0.95)]
    viability_ratio: f64,

    /// Output directory for reports and the subspace cache.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Worker thread count (defaults to the number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Seed recorded in outputs and used by `gen-model` when it has none.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a deterministically seeded toy model to --model.
    GenModel {
        /// Generation seed (defaults to the global --seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 64)]
        d_model: usize,
        #[arg(long, default_value_t = 4)]
        layers: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 64)]
        max_len: usize,
        /// Feed-forward width (defaults to 4 * d_model).
        #[arg(long)]
        d_ff: Option<usize>,
    },
    /// Estimate and cache the gender subspaces for every grid location.
    Estimate,
    /// Evaluate a single configuration read from a text file.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the baseline plus all 74 grid configurations.
    Grid,
    /// Spearman correlation between the S and eta columns of a report.
    Correlate {
        #[arg(long)]
        report: PathBuf,
    },
}

/// Input and IO problems exit 2; evaluation failures exit 1.
fn classify(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        return match core {
            CoreError::Io { .. }
            | CoreError::Malformed { .. }
            | CoreError::MissingTensor(_)
            | CoreError::UnknownFormatVersion(_)
            | CoreError::BlobLengthMismatch { .. }
            | CoreError::TensorShape { .. } => 2,
            _ => 1,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    let msg = format!("{err:#}");
    if msg.contains("not found")
        || msg.contains("is required")
        || msg.contains("reading ")
        || msg.contains("malformed report")
    {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = RunContext {
        model_dir: cli.model,
        pairs: cli.pairs,
        stereoset: cli.stereoset,
        occupations: cli.occupations,
        templates: cli.templates,
        benchmark: cli.benchmark,
        top_frac: cli.top_frac,
        viability_ratio: cli.viability_ratio,
        out_dir: cli.out_dir,
        workers: cli.workers,
        seed: cli.seed,
    };
    match cli.command {
        Command::GenModel {
            seed,
            d_model,
            layers,
            heads,
            max_len,
            d_ff,
        } => commands::cmd_gen_model(
            &ctx,
            seed.unwrap_or(ctx.seed),
            d_model,
            layers,
            heads,
            max_len,
            d_ff,
        ),
        Command::Estimate => commands::cmd_estimate(&ctx),
        Command::Eval { config } => commands::cmd_eval(&ctx, &config),
        Command::Grid => commands::cmd_grid(&ctx),
        Command::Correlate { report } => commands::cmd_correlate(&ctx, &report),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
