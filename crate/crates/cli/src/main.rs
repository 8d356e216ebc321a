mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mhqg", version, about = "Multi-hop question generation with supporting-fact rewards")]
pub struct Cli {
    /// Seed overriding the configured one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic raw corpus in the HotpotQA distribution format.
    Synth(SynthArgs),
    /// Filter, pool, split, build the vocabulary and encode raw files.
    Preprocess(PreprocessArgs),
    /// Train the supporting-fact reward network.
    TrainReward(TrainArgs),
    /// Phase one: multi-task maximum likelihood.
    TrainMtl(TrainArgs),
    /// Phase two: mixed reinforcement learning from a phase-one checkpoint.
    TrainRl(TrainRlArgs),
    /// Decode questions for a split.
    Generate(GenerateArgs),
    /// Score generated questions against a split.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub examples: usize,
    /// Share of comparison yes/no records.
    #[arg(long, default_value_t = 0.0)]
    pub comparison_fraction: f64,
    #[arg(long, default_value_t = 2)]
    pub distractors: usize,
    /// Filler sentences appended to every document.
    #[arg(long, default_value_t = 0)]
    pub filler: usize,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Raw JSON files.
    #[arg(required = true)]
    pub raw: Vec<PathBuf>,
    /// Output directory; defaults to the data root.
    #[arg(long, env = "MHQG_DATA")]
    pub out: PathBuf,
    #[arg(long, default_value_t = mhqg_core::corpus::VOCAB_CAP)]
    pub vocab_cap: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Preprocessed data directory.
    #[arg(long, env = "MHQG_DATA")]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Stop (with a checkpoint) after this many steps in this invocation.
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainRlArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Phase-one checkpoint; defaults to `mtl.ckpt` in the output directory.
    #[arg(long)]
    pub mtl: Option<PathBuf>,
    /// Reward network checkpoint.
    #[arg(long)]
    pub reward: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, env = "MHQG_DATA")]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = mhqg_core::decoder::DEFAULT_BEAM)]
    pub beam: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Generation JSONL produced by `generate`.
    #[arg(long)]
    pub generations: PathBuf,
    #[arg(long, env = "MHQG_DATA")]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Reward network checkpoint for supporting-fact coverage.
    #[arg(long)]
    pub reward: Option<PathBuf>,
    /// Second generation file; adds a paired bootstrap p-value.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// External METEOR scorer.
    #[arg(long)]
    pub meteor: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
