//! Training objectives and the two-phase schedule: multi-task maximum
//! likelihood first, then mixed reinforcement learning from the best
//! phase-one parameters.

mod config;
mod objectives;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamSet, Var};
use crate::corpus::{decode_extended, SplitRecord, SupportingFact, Vocabulary};
use crate::decoder::greedy_decode;
use crate::metrics::corpus_bleu;
use crate::model::QgModel;
use crate::nn::{Adam, AdamConfig, Dropout};
use crate::parallel::batch_gradients;
use crate::reward::{combined_reward, mer_f1, predicted_facts, RewardModel};
use crate::{seeds, Error, Result};

pub use config::TrainingConfig;
pub use objectives::{adaptive_scst_loss, mixed_loss, mtl_loss, scst_advantage, Baseline, RewardHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Mtl,
    Rl,
}

impl Phase {
    fn id(self) -> u64 {
        match self {
            Phase::Mtl => 1,
            Phase::Rl => 2,
        }
    }
}

/// Everything a run needs to continue exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorState {
    pub model: QgModel,
    /// Parameters with the best dev BLEU-4 so far (the latest when no dev
    /// evaluation has happened).
    pub best: ParamSet,
    pub best_dev_bleu: Option<f64>,
    pub adam: Adam,
    pub phase: Phase,
    pub step: usize,
    pub history: RewardHistory,
    pub config_hash: String,
    pub vocab_fingerprint: String,
}

impl GeneratorState {
    pub fn new(cfg: &TrainingConfig, vocab: &Vocabulary) -> Self {
        let model = QgModel::new(cfg.model_config(), vocab.len(), seeds::derive(cfg.seed, &[seeds::phase::INIT]));
        Self::from_model(model, Phase::Mtl, cfg, vocab)
    }

    /// Fresh optimiser and counters around existing parameters.
    pub fn from_model(model: QgModel, phase: Phase, cfg: &TrainingConfig, vocab: &Vocabulary) -> Self {
        let adam = Adam::new(&model.params, AdamConfig::default());
        Self {
            best: model.params.clone(),
            best_dev_bleu: None,
            adam,
            phase,
            step: 0,
            history: RewardHistory::new(cfg.history_size),
            config_hash: cfg.hash(),
            vocab_fingerprint: vocab.fingerprint(),
            model,
        }
    }

    /// Phase-two start: the best phase-one parameters with a new optimiser.
    pub fn start_rl(phase1: &GeneratorState, cfg: &TrainingConfig, vocab: &Vocabulary) -> Self {
        let mut model = phase1.model.clone();
        model.params = phase1.best.clone();
        model.reindex();
        Self::from_model(model, Phase::Rl, cfg, vocab)
    }

    pub fn reindex(&mut self) {
        self.model.reindex();
        self.best.reindex();
    }

    /// The model with the selected parameters.
    pub fn best_model(&self) -> QgModel {
        let mut m = self.model.clone();
        m.params = self.best.clone();
        m.reindex();
        m
    }

    pub fn check_compatible(&self, cfg: &TrainingConfig, vocab: &Vocabulary) -> Result<()> {
        if self.config_hash != cfg.hash() {
            return Err(Error::Checkpoint("checkpoint was written under a different configuration".into()));
        }
        if self.vocab_fingerprint != vocab.fingerprint() {
            return Err(Error::Checkpoint("checkpoint was written with a different vocabulary".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub phase: Phase,
    pub step: usize,
    pub loss: f64,
    pub ml: f64,
    pub sp: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_sampled: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_greedy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Baseline>,
    pub token_accuracy: f64,
    /// Largest gradient component after clipping.
    pub grad_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_bleu4: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

pub trait Observer {
    fn on_step(&mut self, _state: &GeneratorState, _record: &StepRecord) -> Result<Control> {
        Ok(Control::Continue)
    }

    fn on_checkpoint(&mut self, _state: &GeneratorState) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct Quiet;

impl Observer for Quiet {}

/// Example indices of a batch: consecutive slices of an endless stream of
/// per-epoch shuffles, so the batch depends only on `(seed, phase, step)`.
pub fn batch_indices(seed: u64, phase: Phase, step: usize, batch_size: usize, n: usize) -> Vec<usize> {
    let mut cached: Option<(usize, Vec<usize>)> = None;
    (0..batch_size)
        .map(|i| {
            let pos = step * batch_size + i;
            let epoch = pos / n;
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut seeds::rng(seed, &[seeds::phase::SHUFFLE, phase.id(), epoch as u64]));
                cached = Some((epoch, perm));
            }
            cached.as_ref().expect("filled").1[pos % n]
        })
        .collect()
}

fn dropout_for(cfg: &TrainingConfig, phase: Phase, step: usize, i: usize) -> Dropout {
    Dropout::new(cfg.dropout, seeds::derive(cfg.seed, &[seeds::phase::DROPOUT, phase.id(), step as u64, i as u64]))
}

#[derive(Debug, Clone, Copy, Default)]
struct ExampleStats {
    ml: f64,
    sp: f64,
    rl: f64,
    correct: usize,
    total: usize,
    reward_sampled: f64,
    reward_greedy: f64,
    adaptive: bool,
}

/// Teacher-forced `L_ml + β·L_sp` for one example.
pub fn example_mtl_loss<'g>(
    g: &'g Graph<'g>,
    model: &QgModel,
    record: &SplitRecord,
    beta: f64,
    dropout: &mut Dropout,
) -> Result<(Var<'g>, f64, f64, usize, usize)> {
    let pass = model.forward(g, &record.encoded, dropout, true)?;
    let tf = model.teacher_forced(g, &pass, &record.encoded)?;
    let sp = model.sf_loss(&pass, &record.encoded)?;
    Ok((mtl_loss(tf.loss, sp, beta), tf.loss.item(), sp.item(), tf.correct, tf.total))
}

/// Frozen inputs of the reinforcement objective for one batch.
pub struct RlContext<'a> {
    pub reward_model: &'a RewardModel,
    pub vocab: &'a Vocabulary,
    pub history: &'a RewardHistory,
    pub adaptive: bool,
    pub cfg: &'a TrainingConfig,
}

pub struct RlTerms<'g> {
    pub loss: Var<'g>,
    pub rl: Var<'g>,
    pub ml: Var<'g>,
    pub sp: Var<'g>,
    pub reward_sampled: f64,
    pub reward_greedy: f64,
    pub advantage: f64,
    pub baseline: Baseline,
    pub correct: usize,
    pub total: usize,
}

/// `γ1·L_rl + γ2·L_ml + γ3·L_sp` for one example. The greedy baseline is
/// decoded without dropout; rewards enter as constants.
pub fn example_mixed_loss<'g>(
    g: &'g Graph<'g>,
    model: &QgModel,
    record: &SplitRecord,
    ctx: &RlContext<'_>,
    dropout: &mut Dropout,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<RlTerms<'g>> {
    let ex = &record.encoded;
    let pass = model.forward(g, ex, dropout, true)?;
    let (sampled, log_prob) = model.sample(g, &pass, rng)?;
    let greedy = greedy_decode(&model.decoder_for(ex)?, model.config.max_len)?;
    let words = |ids: &[usize]| decode_extended(ids, ctx.vocab, &ex.oov_list);
    let weights = ctx.cfg.reward_weights();
    let reference = &record.example.question;
    let r_s = combined_reward(ctx.reward_model, ctx.vocab, &words(&sampled), reference, ex, &weights)?.combined;
    let r_g = combined_reward(ctx.reward_model, ctx.vocab, &words(&greedy.tokens), reference, ex, &weights)?.combined;
    let (advantage, baseline) = scst_advantage(r_s, r_g, ctx.history, ctx.cfg.alpha, ctx.adaptive);
    let rl = adaptive_scst_loss(advantage, log_prob);
    let tf = model.teacher_forced(g, &pass, ex)?;
    let sp = model.sf_loss(&pass, ex)?;
    let loss = mixed_loss(rl, tf.loss, sp, (ctx.cfg.gamma1, ctx.cfg.gamma2, ctx.cfg.gamma3));
    Ok(RlTerms {
        loss,
        rl,
        ml: tf.loss,
        sp,
        reward_sampled: r_s,
        reward_greedy: r_g,
        advantage,
        baseline,
        correct: tf.correct,
        total: tf.total,
    })
}

/// Generates for the first `limit` records (all when 0) and scores corpus
/// BLEU-4 against the gold questions.
pub fn dev_bleu4(model: &QgModel, vocab: &Vocabulary, dev: &[SplitRecord], beam: usize, limit: usize) -> Result<f64> {
    let dev = if limit > 0 && limit < dev.len() { &dev[..limit] } else { dev };
    let hyps: Vec<Vec<String>> = dev
        .par_iter()
        .map(|r| {
            let out = model.generate(&r.encoded, beam)?;
            Ok(decode_extended(&out.tokens, vocab, &r.encoded.oov_list))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<Vec<String>> = dev.iter().map(|r| r.example.question.clone()).collect();
    Ok(corpus_bleu(&hyps, &refs, 4)?[3])
}

/// Teacher-forced token accuracy and answer-aware supporting-fact quality
/// without dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub token_accuracy: f64,
    /// Mean per-example F1 of the head's hard predictions.
    pub sf_f1: f64,
}

pub fn fit_report(model: &QgModel, records: &[SplitRecord]) -> Result<FitReport> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let per: Vec<(usize, usize, f64)> = records
        .par_iter()
        .map(|r| {
            let g = Graph::new(&model.params);
            let pass = model.forward(&g, &r.encoded, &mut Dropout::off(), false)?;
            let tf = model.teacher_forced(&g, &pass, &r.encoded)?;
            let gold: BTreeSet<SupportingFact> = r.encoded.gold_facts().into_iter().collect();
            let f = mer_f1(&predicted_facts(&pass.sf_predictions, &r.encoded.sentence_keys), &gold);
            Ok((tf.correct, tf.total, f))
        })
        .collect::<Result<_>>()?;
    let correct: usize = per.iter().map(|p| p.0).sum();
    let total: usize = per.iter().map(|p| p.1).sum();
    let f1 = per.iter().map(|p| p.2).sum::<f64>() / per.len() as f64;
    Ok(FitReport { token_accuracy: correct as f64 / total as f64, sf_f1: f1 })
}

fn diverged(state: &GeneratorState, batch: &[usize], train: &[SplitRecord], what: &str) -> Error {
    let ids: Vec<&str> = batch.iter().map(|&i| train[i].encoded.id.as_str()).collect();
    Error::Diverged(format!(
        "{what} at {:?} step {}; batch ids {ids:?}; parameter norms {:?}",
        state.phase,
        state.step + 1,
        state.model.params.l2_norms()
    ))
}

/// Shared tail of a step: clip, update, evaluate, notify.
#[allow(clippy::too_many_arguments)]
fn finish_step(
    state: &mut GeneratorState,
    mut record: StepRecord,
    mut grads: crate::autograd::ParamGrads,
    lr: f64,
    total_steps: usize,
    vocab: &Vocabulary,
    dev: &[SplitRecord],
    cfg: &TrainingConfig,
    obs: &mut dyn Observer,
) -> Result<Control> {
    grads.clip(cfg.clip);
    record.grad_max = grads.max_abs();
    state.adam.update(&mut state.model.params, &grads, lr);
    state.step += 1;
    let last = state.step == total_steps;
    if state.step.is_multiple_of(cfg.eval_every) || last {
        if dev.is_empty() {
            state.best = state.model.params.clone();
        } else {
            let bleu = dev_bleu4(&state.model, vocab, dev, cfg.beam_width, cfg.dev_eval_examples)?;
            record.dev_bleu4 = Some(bleu);
            if state.best_dev_bleu.is_none_or(|b| bleu > b) {
                state.best_dev_bleu = Some(bleu);
                state.best = state.model.params.clone();
            }
        }
    }
    let control = obs.on_step(state, &record)?;
    if state.step.is_multiple_of(cfg.checkpoint_every) || last || control == Control::Stop {
        obs.on_checkpoint(state)?;
    }
    Ok(control)
}

/// Phase one: minimise `L_ml + β·L_sp` until `phase1_steps`.
pub fn train_mtl(
    state: &mut GeneratorState,
    vocab: &Vocabulary,
    train: &[SplitRecord],
    dev: &[SplitRecord],
    cfg: &TrainingConfig,
    obs: &mut dyn Observer,
) -> Result<()> {
    if state.phase != Phase::Mtl {
        return Err(Error::Invalid("state is not in the multi-task phase".into()));
    }
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    while state.step < cfg.phase1_steps {
        let step = state.step;
        let batch = batch_indices(cfg.seed, Phase::Mtl, step, cfg.batch_size, train.len());
        let model = &state.model;
        let out = batch_gradients(&model.params, &batch, |g, i, &idx| {
            let mut dropout = dropout_for(cfg, Phase::Mtl, step, i);
            let (loss, ml, sp, correct, total) = example_mtl_loss(g, model, &train[idx], cfg.beta, &mut dropout)?;
            Ok((loss, ExampleStats { ml, sp, correct, total, ..Default::default() }))
        })?;
        if !out.losses.iter().all(|l| l.is_finite()) {
            return Err(diverged(state, &batch, train, "non-finite loss"));
        }
        if !out.grads.all_finite() {
            return Err(diverged(state, &batch, train, "non-finite gradient"));
        }
        let n = batch.len() as f64;
        let record = StepRecord {
            phase: Phase::Mtl,
            step: step + 1,
            loss: out.mean_loss(),
            ml: out.stats.iter().map(|s| s.ml).sum::<f64>() / n,
            sp: out.stats.iter().map(|s| s.sp).sum::<f64>() / n,
            rl: None,
            reward_sampled: None,
            reward_greedy: None,
            baseline: None,
            token_accuracy: accuracy(&out.stats),
            grad_max: 0.0,
            dev_bleu4: None,
        };
        let lr = cfg.phase1_lr;
        if finish_step(state, record, out.grads, lr, cfg.phase1_steps, vocab, dev, cfg, obs)? == Control::Stop {
            break;
        }
    }
    Ok(())
}

fn accuracy(stats: &[ExampleStats]) -> f64 {
    let c: usize = stats.iter().map(|s| s.correct).sum();
    let t: usize = stats.iter().map(|s| s.total).sum();
    c as f64 / t.max(1) as f64
}

/// Phase two: minimise the mixed objective until `phase2_steps`. The reward
/// history is read as it stood before the batch and extended afterwards in
/// example order.
pub fn train_rl(
    state: &mut GeneratorState,
    reward_model: &RewardModel,
    vocab: &Vocabulary,
    train: &[SplitRecord],
    dev: &[SplitRecord],
    cfg: &TrainingConfig,
    obs: &mut dyn Observer,
) -> Result<()> {
    if state.phase != Phase::Rl {
        return Err(Error::Invalid("state is not in the reinforcement phase".into()));
    }
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    reward_model.check_vocabulary(vocab)?;
    while state.step < cfg.phase2_steps {
        let step = state.step;
        let batch = batch_indices(cfg.seed, Phase::Rl, step, cfg.batch_size, train.len());
        let model = &state.model;
        let ctx = RlContext { reward_model, vocab, history: &state.history, adaptive: step >= cfg.warmup_steps, cfg };
        let out = batch_gradients(&model.params, &batch, |g, i, &idx| {
            let mut dropout = dropout_for(cfg, Phase::Rl, step, i);
            let mut rng = seeds::rng(cfg.seed, &[seeds::phase::SAMPLE, step as u64, i as u64]);
            let t = example_mixed_loss(g, model, &train[idx], &ctx, &mut dropout, &mut rng)?;
            let stats = ExampleStats {
                ml: t.ml.item(),
                sp: t.sp.item(),
                rl: t.rl.item(),
                correct: t.correct,
                total: t.total,
                reward_sampled: t.reward_sampled,
                reward_greedy: t.reward_greedy,
                adaptive: t.baseline == Baseline::Adaptive,
            };
            Ok((t.loss, stats))
        })?;
        if !out.losses.iter().all(|l| l.is_finite()) {
            return Err(diverged(state, &batch, train, "non-finite loss"));
        }
        if !out.grads.all_finite() {
            return Err(diverged(state, &batch, train, "non-finite gradient"));
        }
        for s in &out.stats {
            state.history.push(s.reward_sampled, s.reward_greedy);
        }
        let n = batch.len() as f64;
        let mean = |f: fn(&ExampleStats) -> f64| out.stats.iter().map(f).sum::<f64>() / n;
        let record = StepRecord {
            phase: Phase::Rl,
            step: step + 1,
            loss: out.mean_loss(),
            ml: mean(|s| s.ml),
            sp: mean(|s| s.sp),
            rl: Some(mean(|s| s.rl)),
            reward_sampled: Some(mean(|s| s.reward_sampled)),
            reward_greedy: Some(mean(|s| s.reward_greedy)),
            baseline: Some(if out.stats.iter().all(|s| s.adaptive) { Baseline::Adaptive } else { Baseline::Plain }),
            token_accuracy: accuracy(&out.stats),
            grad_max: 0.0,
            dev_bleu4: None,
        };
        let lr = cfg.phase2_lr;
        if finish_step(state, record, out.grads, lr, cfg.phase2_steps, vocab, dev, cfg, obs)? == Control::Stop {
            break;
        }
    }
    Ok(())
}
