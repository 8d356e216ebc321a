use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mhqg_core::checkpoint::{self, Kind};
use mhqg_core::corpus::synthetic::{generate_raw, SyntheticConfig};
use mhqg_core::corpus::{
    decode_extended, load_raw, prepare_corpus, read_split_file, write_split_file, Split, SplitRecord, Vocabulary,
};
use mhqg_core::metrics::{bootstrap_significance, evaluate, EvaluationInput, EvaluationReport, BOOTSTRAP_ITERATIONS};
use mhqg_core::reward::{prepare_examples, train_reward_model, EpochSummary, RewardCheckpoint, RewardModel};
use mhqg_core::trainer::{train_mtl, train_rl, Control, GeneratorState, Observer, Phase, StepRecord, TrainingConfig};
use mhqg_core::{seeds, Error};

use crate::manifest::ManifestBuilder;
use crate::{Cli, Command, EvaluateArgs, GenerateArgs, PreprocessArgs, SynthArgs, TrainArgs, TrainRlArgs};

const DEFAULT_SEED: u64 = 1;
const VOCAB_FILE: &str = "vocab.txt";
const REWARD_CKPT: &str = "reward.ckpt";
const REWARD_LOG: &str = "reward_log.jsonl";
const GENERATIONS: &str = "generations.jsonl";
const REPORT: &str = "report.json";

/// A failed command: usage and validation problems exit with 1, runtime
/// failures with 2.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Invalid(_)
            | Error::Checkpoint(_)
            | Error::Parse { .. }
            | Error::Bounds(_)
            | Error::Empty(_) => Failure::Usage(e.into()),
            Error::Io { .. } | Error::Json(_) | Error::Shape(_) | Error::Diverged(_) | Error::Tool { .. } => {
                Failure::Runtime(e.into())
            }
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

fn require_file(path: &Path, what: &str) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::Preprocess(a) => preprocess(a, cli.seed),
        Command::TrainReward(a) => train_reward(a, cli.seed),
        Command::TrainMtl(a) => train_generator_mtl(a, cli.seed),
        Command::TrainRl(a) => train_generator_rl(a, cli.seed),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate_cmd(a, cli.seed),
    }
}

fn synth(a: SynthArgs, seed: Option<u64>) -> CmdResult {
    if !(0.0..=1.0).contains(&a.comparison_fraction) {
        return Err(usage("--comparison-fraction must lie in [0, 1]"));
    }
    let seed = seed.unwrap_or(DEFAULT_SEED);
    create_dir(&a.out)?;
    let cfg = SyntheticConfig {
        examples: a.examples,
        seed,
        comparison_fraction: a.comparison_fraction,
        distractors: a.distractors,
        filler_sentences: a.filler,
    };
    let raw = generate_raw(&cfg);
    let path = a.out.join("synthetic.json");
    std::fs::write(&path, serde_json::to_vec(&raw)?).with_context(|| format!("writing {}", path.display()))?;
    let mut m = ManifestBuilder::new("synth", &a.out);
    m.seed("synth", seed).output("synthetic.json");
    m.finish()?;
    log::info!("wrote {} raw records to {}", raw.len(), path.display());
    Ok(())
}

fn split_file(split: Split) -> String {
    format!("{}.jsonl", split.as_str())
}

fn preprocess(a: PreprocessArgs, seed: Option<u64>) -> CmdResult {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    for p in &a.raw {
        require_file(p, "raw file")?;
    }
    let files = a.raw.iter().map(|p| load_raw(p)).collect::<Result<Vec<_>, _>>()?;
    let prepared = prepare_corpus(files, seed, a.vocab_cap)?;
    create_dir(&a.out)?;
    let mut m = ManifestBuilder::new("preprocess", &a.out);
    m.seed("split", seed);
    for p in &a.raw {
        m.input(p)?;
    }
    for (split, records) in
        [(Split::Train, &prepared.train), (Split::Dev, &prepared.dev), (Split::Test, &prepared.test)]
    {
        let name = split_file(split);
        write_split_file(&a.out.join(&name), records)?;
        m.output(&name);
    }
    prepared.vocab.save(&a.out.join(VOCAB_FILE))?;
    m.output(VOCAB_FILE);
    let summary = serde_json::json!({
        "filter": prepared.filter,
        "splits": prepared.sizes(),
        "vocabulary": prepared.vocab.len(),
    });
    std::fs::write(a.out.join("preprocess_report.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    m.output("preprocess_report.json");
    m.finish()?;
    log::info!(
        "kept {} of {} examples; splits {:?}; vocabulary {}",
        prepared.filter.kept,
        prepared.filter.input,
        prepared.sizes(),
        prepared.vocab.len()
    );
    Ok(())
}

struct Data {
    vocab: Vocabulary,
    dir: PathBuf,
}

impl Data {
    fn open(dir: &Path) -> CmdResult<Self> {
        let vocab_path = dir.join(VOCAB_FILE);
        require_file(&vocab_path, "vocabulary")?;
        Ok(Self { vocab: Vocabulary::load(&vocab_path)?, dir: dir.to_path_buf() })
    }

    fn path(&self, split: Split) -> PathBuf {
        self.dir.join(split_file(split))
    }

    fn split(&self, split: Split) -> CmdResult<Vec<SplitRecord>> {
        let path = self.path(split);
        require_file(&path, "split file")?;
        Ok(read_split_file(&path)?)
    }
}

fn parse_split(s: &str) -> CmdResult<Split> {
    Split::parse(s).ok_or_else(|| usage(format!("unknown split '{s}' (train, dev or test)")))
}

fn load_config(path: &Path, seed: Option<u64>) -> CmdResult<TrainingConfig> {
    require_file(path, "config")?;
    let mut cfg = TrainingConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Keeps the first `keep` lines of a JSONL log, or empties it.
fn truncate_log(path: &Path, keep: usize) -> CmdResult {
    let kept: Vec<String> = if keep == 0 || !path.exists() {
        Vec::new()
    } else {
        BufReader::new(File::open(path)?).lines().take(keep).collect::<Result<_, _>>()?
    };
    let mut text = kept.join("\n");
    if !kept.is_empty() {
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn append_writer(path: &Path) -> CmdResult<BufWriter<File>> {
    let f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    Ok(BufWriter::new(f))
}

fn reward_hash(cfg: &TrainingConfig) -> String {
    checkpoint::config_hash(&(cfg.reward_model_config(), cfg.reward_train_config()))
}

fn load_reward(path: &Path, vocab: &Vocabulary) -> CmdResult<RewardCheckpoint> {
    require_file(path, "reward checkpoint")?;
    let mut state: RewardCheckpoint = checkpoint::load(path, Kind::Reward)?;
    state.reindex();
    state.best.check_vocabulary(vocab)?;
    Ok(state)
}

fn train_reward(a: TrainArgs, seed: Option<u64>) -> CmdResult {
    if a.max_steps.is_some() {
        return Err(usage("--max-steps applies to train-mtl and train-rl"));
    }
    let cfg = load_config(&a.config, seed)?;
    let data = Data::open(&a.data)?;
    let train = data.split(Split::Train)?;
    let dev = data.split(Split::Dev)?;
    create_dir(&a.out)?;
    let ckpt_path = a.out.join(REWARD_CKPT);
    let log_path = a.out.join(REWARD_LOG);
    let hash = reward_hash(&cfg);
    let state = if a.resume && ckpt_path.exists() {
        let mut state: RewardCheckpoint = checkpoint::load(&ckpt_path, Kind::Reward)?;
        state.reindex();
        if state.config_hash != hash {
            return Err(usage("refusing to resume: reward checkpoint was written under a different configuration"));
        }
        state.model.check_vocabulary(&data.vocab)?;
        truncate_log(&log_path, state.epoch)?;
        log::info!("resuming reward training after epoch {}", state.epoch);
        state
    } else {
        truncate_log(&log_path, 0)?;
        let chars = RewardModel::char_inventory(data.vocab.tokens());
        let model = RewardModel::new(
            cfg.reward_model_config(),
            &data.vocab,
            chars,
            seeds::derive(cfg.seed, &[seeds::phase::INIT, 2]),
        );
        RewardCheckpoint::new(model, hash.clone())
    };
    let train_ex = prepare_examples(&state.model, &data.vocab, &train);
    let dev_ex = prepare_examples(&state.model, &data.vocab, &dev);
    let mut log = append_writer(&log_path)?;
    let final_state = train_reward_model(state, &train_ex, &dev_ex, &cfg.reward_train_config(), |s| {
        let summary: &EpochSummary = s.report.epochs.last().expect("epoch finished");
        serde_json::to_writer(&mut log, summary)?;
        log.write_all(b"\n").map_err(|e| Error::io(&log_path, e))?;
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        checkpoint::save(&ckpt_path, Kind::Reward, s)
    })?;
    log::info!(
        "reward network: best dev F1 {:.4} at epoch {:?}",
        final_state.report.best_dev_f1,
        final_state.report.best_epoch
    );
    let mut m = ManifestBuilder::new("train-reward", &a.out);
    m.config_hash(hash).seed("run", cfg.seed);
    m.input(&a.config)?.input(&data.path(Split::Train))?.input(&data.path(Split::Dev))?;
    m.output(REWARD_CKPT).output(REWARD_LOG);
    m.finish()?;
    Ok(())
}

/// Streams step records to the JSONL log and saves checkpoints.
struct FileObserver {
    log: BufWriter<File>,
    log_path: PathBuf,
    ckpt_path: PathBuf,
    stop_at: Option<usize>,
}

impl Observer for FileObserver {
    fn on_step(&mut self, _state: &GeneratorState, record: &StepRecord) -> mhqg_core::Result<Control> {
        serde_json::to_writer(&mut self.log, record)?;
        self.log.write_all(b"\n").map_err(|e| Error::io(&self.log_path, e))?;
        if record.step.is_multiple_of(50) || record.dev_bleu4.is_some() {
            log::info!(
                "{:?} step {}: loss {:.4} token accuracy {:.3}{}{}",
                record.phase,
                record.step,
                record.loss,
                record.token_accuracy,
                record.reward_sampled.map(|r| format!(" reward {r:.4}")).unwrap_or_default(),
                record.dev_bleu4.map(|b| format!(" dev BLEU-4 {b:.2}")).unwrap_or_default(),
            );
        }
        Ok(if self.stop_at == Some(record.step) { Control::Stop } else { Control::Continue })
    }

    fn on_checkpoint(&mut self, state: &GeneratorState) -> mhqg_core::Result<()> {
        self.log.flush().map_err(|e| Error::io(&self.log_path, e))?;
        checkpoint::save(&self.ckpt_path, Kind::Generator, state)
    }
}

fn phase_files(phase: Phase) -> (&'static str, &'static str) {
    match phase {
        Phase::Mtl => ("mtl.ckpt", "mtl_log.jsonl"),
        Phase::Rl => ("rl.ckpt", "rl_log.jsonl"),
    }
}

fn load_generator(path: &Path) -> CmdResult<GeneratorState> {
    require_file(path, "checkpoint")?;
    let mut state: GeneratorState = checkpoint::load(path, Kind::Generator)?;
    state.reindex();
    Ok(state)
}

/// Loads the resumable state for `phase`, or builds a fresh one.
fn generator_state(
    a: &TrainArgs,
    phase: Phase,
    cfg: &TrainingConfig,
    vocab: &Vocabulary,
    fresh: impl FnOnce() -> CmdResult<GeneratorState>,
) -> CmdResult<(GeneratorState, FileObserver)> {
    create_dir(&a.out)?;
    let (ckpt, log) = phase_files(phase);
    let ckpt_path = a.out.join(ckpt);
    let log_path = a.out.join(log);
    let state = if a.resume && ckpt_path.exists() {
        let state = load_generator(&ckpt_path)?;
        state.check_compatible(cfg, vocab).map_err(|e| usage(format!("refusing to resume: {e}")))?;
        if state.phase != phase {
            return Err(usage(format!("{} holds a {:?} state", ckpt_path.display(), state.phase)));
        }
        truncate_log(&log_path, state.step)?;
        log::info!("resuming {:?} training after step {}", phase, state.step);
        state
    } else {
        truncate_log(&log_path, 0)?;
        fresh()?
    };
    let stop_at = a.max_steps.map(|n| state.step + n);
    let observer = FileObserver { log: append_writer(&log_path)?, log_path, ckpt_path, stop_at };
    Ok((state, observer))
}

fn finish_training(
    a: &TrainArgs,
    command: &str,
    phase: Phase,
    cfg: &TrainingConfig,
    data: &Data,
    extra_inputs: &[&Path],
) -> CmdResult {
    let (ckpt, log) = phase_files(phase);
    let mut m = ManifestBuilder::new(command, &a.out);
    m.config_hash(cfg.hash()).seed("run", cfg.seed);
    m.input(&a.config)?.input(&data.path(Split::Train))?.input(&data.path(Split::Dev))?;
    for p in extra_inputs {
        m.input(p)?;
    }
    m.output(ckpt).output(log);
    m.finish()?;
    Ok(())
}

fn train_generator_mtl(a: TrainArgs, seed: Option<u64>) -> CmdResult {
    let cfg = load_config(&a.config, seed)?;
    let data = Data::open(&a.data)?;
    let train = data.split(Split::Train)?;
    let dev = data.split(Split::Dev)?;
    let (mut state, mut obs) =
        generator_state(&a, Phase::Mtl, &cfg, &data.vocab, || Ok(GeneratorState::new(&cfg, &data.vocab)))?;
    train_mtl(&mut state, &data.vocab, &train, &dev, &cfg, &mut obs)?;
    obs.on_checkpoint(&state)?;
    log::info!("phase one done at step {}; best dev BLEU-4 {:?}", state.step, state.best_dev_bleu);
    finish_training(&a, "train-mtl", Phase::Mtl, &cfg, &data, &[])
}

fn train_generator_rl(a: TrainRlArgs, seed: Option<u64>) -> CmdResult {
    let reward_path = a.reward.clone().ok_or_else(|| usage("train-rl needs a reward checkpoint (--reward)"))?;
    let cfg = load_config(&a.train.config, seed)?;
    let data = Data::open(&a.train.data)?;
    let reward = load_reward(&reward_path, &data.vocab)?;
    let mtl_path = a.mtl.clone().unwrap_or_else(|| a.train.out.join(phase_files(Phase::Mtl).0));
    require_file(&mtl_path, "phase-one checkpoint")?;
    let train = data.split(Split::Train)?;
    let dev = data.split(Split::Dev)?;
    let (mut state, mut obs) = generator_state(&a.train, Phase::Rl, &cfg, &data.vocab, || {
        let phase1 = load_generator(&mtl_path)?;
        phase1.check_compatible(&cfg, &data.vocab).map_err(|e| usage(format!("phase-one checkpoint: {e}")))?;
        Ok(GeneratorState::start_rl(&phase1, &cfg, &data.vocab))
    })?;
    train_rl(&mut state, &reward.best, &data.vocab, &train, &dev, &cfg, &mut obs)?;
    obs.on_checkpoint(&state)?;
    log::info!("phase two done at step {}; best dev BLEU-4 {:?}", state.step, state.best_dev_bleu);
    finish_training(&a.train, "train-rl", Phase::Rl, &cfg, &data, &[&mtl_path, &reward_path])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub id: String,
    pub generated_question: String,
    pub log_prob: f64,
    pub beam_width: usize,
}

fn generate(a: GenerateArgs) -> CmdResult {
    if a.beam == 0 {
        return Err(usage("--beam must be at least 1"));
    }
    let split = parse_split(&a.split)?;
    let data = Data::open(&a.data)?;
    let state = load_generator(&a.checkpoint)?;
    if state.vocab_fingerprint != data.vocab.fingerprint() {
        return Err(usage("refusing to generate: checkpoint vocabulary differs from the data vocabulary"));
    }
    let records = data.split(split)?;
    let model = state.best_model();
    let generations: Vec<Generation> = records
        .par_iter()
        .map(|r| {
            let out = model.generate(&r.encoded, a.beam)?;
            let words = decode_extended(&out.tokens, &data.vocab, &r.encoded.oov_list);
            Ok(Generation {
                id: r.encoded.id.clone(),
                generated_question: words.join(" "),
                log_prob: out.log_prob,
                beam_width: a.beam,
            })
        })
        .collect::<Result<_, Error>>()?;
    create_dir(&a.out)?;
    let mut w = BufWriter::new(File::create(a.out.join(GENERATIONS))?);
    for g in &generations {
        serde_json::to_writer(&mut w, g)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let mut m = ManifestBuilder::new("generate", &a.out);
    m.config_hash(state.config_hash.clone());
    m.input(&a.checkpoint)?.input(&data.path(split))?;
    m.output(GENERATIONS);
    m.finish()?;
    log::info!("generated {} questions with beam {}", generations.len(), a.beam);
    Ok(())
}

fn read_generations(path: &Path) -> CmdResult<Vec<Generation>> {
    require_file(path, "generation file")?;
    BufReader::new(File::open(path)?)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| serde_json::from_str(&l?).map_err(|e| usage(format!("{} line {}: {e}", path.display(), i + 1))))
        .collect()
}

/// Hypotheses in split order; every split id must appear exactly once.
fn align(path: &Path, generations: Vec<Generation>, records: &[SplitRecord]) -> CmdResult<Vec<Vec<String>>> {
    let mut by_id: BTreeMap<String, Generation> = BTreeMap::new();
    for g in generations {
        if by_id.contains_key(&g.id) {
            return Err(usage(format!("{}: duplicate id {}", path.display(), g.id)));
        }
        by_id.insert(g.id.clone(), g);
    }
    let wanted: BTreeSet<&str> = records.iter().map(|r| r.encoded.id.as_str()).collect();
    let missing: Vec<&str> = wanted.iter().copied().filter(|id| !by_id.contains_key(*id)).collect();
    if !missing.is_empty() {
        return Err(usage(format!("{}: missing ids {}", path.display(), missing.join(", "))));
    }
    let extra: Vec<&str> = by_id.keys().map(String::as_str).filter(|id| !wanted.contains(id)).collect();
    if !extra.is_empty() {
        return Err(usage(format!("{}: ids not in the split {}", path.display(), extra.join(", "))));
    }
    Ok(records
        .iter()
        .map(|r| by_id[&r.encoded.id].generated_question.split_whitespace().map(str::to_string).collect())
        .collect())
}

#[derive(Debug, Serialize)]
struct Comparison {
    generations: String,
    rouge_l: f64,
    bleu4: f64,
    /// Share of bootstrap resamples in which the primary file's mean
    /// ROUGE-L does not exceed the compared file's.
    p_value: f64,
    iterations: usize,
}

#[derive(Debug, Serialize)]
struct FullReport {
    #[serde(flatten)]
    report: EvaluationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
}

fn evaluate_cmd(a: EvaluateArgs, seed: Option<u64>) -> CmdResult {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let split = parse_split(&a.split)?;
    let data = Data::open(&a.data)?;
    let records = data.split(split)?;
    let hypotheses = align(&a.generations, read_generations(&a.generations)?, &records)?;
    let reward = a.reward.as_deref().map(|p| load_reward(p, &data.vocab)).transpose()?;
    let encoded: Vec<_> = records.iter().map(|r| r.encoded.clone()).collect();
    let references: Vec<Vec<String>> = records.iter().map(|r| r.example.question.clone()).collect();
    let settings_hash = checkpoint::config_hash(&(
        split.as_str(),
        checksum(&a.generations)?,
        a.reward.as_deref().map(checksum).transpose()?,
        seed,
    ));
    let input = |hyps: Vec<Vec<String>>| EvaluationInput {
        ids: records.iter().map(|r| r.encoded.id.clone()).collect(),
        hypotheses: hyps,
        references: references.clone(),
        examples: &encoded,
        reward_model: reward.as_ref().map(|r| &r.best),
        vocab: &data.vocab,
        meteor_tool: a.meteor.as_deref(),
        seed,
        config_hash: settings_hash.clone(),
    };
    let report = evaluate(input(hypotheses))?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let comparison = match &a.compare {
        None => None,
        Some(path) => {
            let other_hyps = align(path, read_generations(path)?, &records)?;
            let other = evaluate(EvaluationInput { reward_model: None, meteor_tool: None, ..input(other_hyps) })?;
            let p = bootstrap_significance(
                &report.per_example.rouge_l,
                &other.per_example.rouge_l,
                BOOTSTRAP_ITERATIONS,
                seed,
            )?;
            Some(Comparison {
                generations: path.display().to_string(),
                rouge_l: other.rouge_l,
                bleu4: other.bleu[3],
                p_value: p,
                iterations: BOOTSTRAP_ITERATIONS,
            })
        }
    };
    create_dir(&a.out)?;
    log::info!(
        "BLEU-4 {:.2} ROUGE-L {:.2} SF coverage {}",
        report.bleu[3],
        report.rouge_l,
        report.sf_coverage.map_or("n/a".to_string(), |s| format!("{s:.2}"))
    );
    let full = FullReport { report, comparison };
    std::fs::write(a.out.join(REPORT), serde_json::to_string_pretty(&full)? + "\n")?;
    let mut m = ManifestBuilder::new("evaluate", &a.out);
    m.config_hash(settings_hash).seed("bootstrap", seed);
    m.input(&a.generations)?.input(&data.path(split))?;
    if let Some(r) = &a.reward {
        m.input(r)?;
    }
    if let Some(c) = &a.compare {
        m.input(c)?;
    }
    m.output(REPORT);
    m.finish()?;
    Ok(())
}

fn checksum(path: &Path) -> CmdResult<String> {
    Ok(crate::manifest::Artifact::of(path, "")?.sha256)
}
