//! `nucleus-lab`: train an n-gram model, decode with different strategies,
//! and compare the output with human text.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nucleus_core::decoding::DecoderConfig;
use nucleus_core::ErrorClass;

#[derive(Debug, Parser)]
#[command(name = "nucleus-lab", version, about = "Decoding-strategy experiments on an n-gram language model")]
struct Cli {
    /// Worker threads (0 = one per core). Overrides the config and NUCLEUS_LAB_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log verbosity; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Experiment config file.
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the n-gram model and print its held-out perplexity.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Model output path (default: model path from the config).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },

    /// Generate one continuation per held-out context.
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        /// Decoding strategy, e.g. `nucleus:p=0.95` or `topk:k=40,t=0.7`.
        #[arg(short, long, value_parser = parse_strategy)]
        strategy: DecoderConfig,
        /// Only the first N contexts.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        /// Output JSONL (default: <output dir>/generations/<strategy>.jsonl).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },

    /// Replay a recorded distribution trace and decode one sequence from it.
    Replay {
        /// Trace file (JSON lines or binary).
        #[arg(long)]
        trace: PathBuf,
        #[arg(short, long, value_parser = parse_strategy)]
        strategy: DecoderConfig,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },

    /// Compute the metric table for generation files, plus the human row.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        /// Generation JSONL files.
        #[arg(required = true)]
        generations: Vec<PathBuf>,
        /// Output prefix; writes <prefix>.csv and <prefix>.json (default: <output dir>/metrics).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },

    /// Run a diagnostic probe and write its CSV series.
    Probe {
        #[command(flatten)]
        config: ConfigArg,
        #[command(subcommand)]
        probe: ProbeCommand,
    },

    /// Compute HUSE for a top-k or nucleus decoder.
    Huse {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(short, long, value_parser = parse_strategy)]
        strategy: DecoderConfig,
        /// Existing annotations CSV (generation_id,annotator_id,score);
        /// without it the synthetic annotator is used.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Report path (default: <output dir>/huse_<strategy>.json).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },

    /// Run the whole experiment and write table1.csv / table1.json.
    Report {
        #[command(flatten)]
        config: ConfigArg,
    },
}

#[derive(Debug, Subcommand)]
enum ProbeCommand {
    /// Per-token probabilities of decoded and gold text.
    TokenTrace {
        #[arg(short, long, value_parser = parse_strategy, default_value = "beam:b=16")]
        strategy: DecoderConfig,
        /// Contexts pooled into the summary.
        #[arg(long, default_value_t = 100)]
        contexts: usize,
        /// Context whose traces are written out.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Entropy, nucleus size and top-k mass along held-out text.
    Shape {
        #[arg(long, default_value_t = 0.95)]
        p: f64,
        #[arg(long, default_value_t = 40)]
        k: usize,
        #[arg(long, default_value_t = 50)]
        contexts: usize,
    },
    /// Probability of a phrase as more copies of it precede it.
    Feedback {
        /// Phrase text; repeat for several phrases.
        #[arg(long)]
        phrase: Vec<String>,
        /// Additionally probe this many random phrases.
        #[arg(long, default_value_t = 0)]
        random: usize,
        #[arg(long, default_value_t = 3)]
        phrase_len: usize,
        #[arg(long, default_value_t = 20)]
        copies: usize,
        #[arg(long, value_enum, default_value_t = Aggregate::Arithmetic)]
        aggregate: Aggregate,
    },
    /// Mean length and distinct trigrams of beam search per width.
    BeamWidth {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        contexts: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Aggregate {
    Arithmetic,
    Geometric,
}

fn parse_strategy(s: &str) -> Result<DecoderConfig, String> {
    s.parse().map_err(|e: nucleus_core::Error| e.to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let class = err
        .chain()
        .find_map(|e| e.downcast_ref::<nucleus_core::Error>())
        .map(nucleus_core::Error::class);
    match class {
        Some(ErrorClass::Config) => 2,
        Some(ErrorClass::Input) => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
