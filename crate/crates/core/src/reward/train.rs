//! Supervised training of the reward network on gold questions.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{RewardInput, RewardModel};
use super::{mer_f1, predicted_facts};
use crate::corpus::{SplitRecord, SupportingFact, Vocabulary};
use crate::nn::{Adam, AdamConfig};
use crate::parallel::batch_gradients;
use crate::sf_head::supporting_facts_loss;
use crate::{seeds, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip: f64,
    pub seed: u64,
    /// Abort when dev F1 after the first epoch is below this.
    pub abort_below_f1: Option<f64>,
}

impl Default for RewardTrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 16, learning_rate: 1e-3, clip: 5.0, seed: 0, abort_below_f1: None }
    }
}

/// One example prepared for the reward network.
#[derive(Debug, Clone)]
pub struct RewardExample {
    pub id: String,
    pub question: RewardInput,
    pub context: RewardInput,
    pub bounds: Vec<(usize, usize)>,
    pub keys: Vec<SupportingFact>,
    pub labels: Vec<u8>,
    pub gold: BTreeSet<SupportingFact>,
}

pub fn prepare_examples(model: &RewardModel, vocab: &Vocabulary, records: &[SplitRecord]) -> Vec<RewardExample> {
    records
        .iter()
        .map(|r| RewardExample {
            id: r.encoded.id.clone(),
            question: model.prepare(vocab, &r.example.question),
            context: model.prepare_context(vocab, &r.encoded),
            bounds: r.encoded.sentence_bounds.clone(),
            keys: r.encoded.sentence_keys.clone(),
            labels: r.encoded.sf_labels.clone(),
            gold: r.encoded.gold_facts().into_iter().collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_f1: f64,
    pub dev_em: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTrainReport {
    pub epochs: Vec<EpochSummary>,
    pub best_epoch: Option<usize>,
    pub best_dev_f1: f64,
}

/// Everything needed to continue reward training, plus the selected model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCheckpoint {
    pub model: RewardModel,
    pub best: RewardModel,
    pub adam: Adam,
    pub epoch: usize,
    pub report: RewardTrainReport,
    pub config_hash: String,
}

impl RewardCheckpoint {
    pub fn new(model: RewardModel, config_hash: String) -> Self {
        let adam = Adam::new(&model.params, AdamConfig::default());
        Self { best: model.clone(), model, adam, epoch: 0, report: RewardTrainReport::default(), config_hash }
    }

    pub fn reindex(&mut self) {
        self.model.reindex();
        self.best.reindex();
    }
}

/// Mean per-example F1 and exact-match rate of hard predictions.
pub fn evaluate_reward_model(model: &RewardModel, examples: &[RewardExample]) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut f1_sum = 0.0;
    let mut em = 0usize;
    for ex in examples {
        let pred = model.predict(&ex.question, &ex.context, &ex.bounds)?;
        let set = predicted_facts(&pred.labels, &ex.keys);
        f1_sum += mer_f1(&set, &ex.gold);
        em += usize::from(set == ex.gold);
    }
    let n = examples.len() as f64;
    Ok((f1_sum / n, em as f64 / n))
}

/// Runs the remaining epochs, keeping the dev-best parameters in
/// `state.best`. `on_epoch` sees the state after every epoch.
pub fn train_reward_model(
    mut state: RewardCheckpoint,
    train: &[RewardExample],
    dev: &[RewardExample],
    cfg: &RewardTrainConfig,
    mut on_epoch: impl FnMut(&RewardCheckpoint) -> Result<()>,
) -> Result<RewardCheckpoint> {
    if train.is_empty() {
        return Err(Error::Empty("reward training set"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seeds::rng(cfg.seed, &[seeds::phase::SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&RewardExample> = chunk.iter().map(|&i| &train[i]).collect();
            let model = &state.model;
            let mut out = batch_gradients(&model.params, &batch, |g, _, ex| {
                let p = model.forward(g, &ex.question, &ex.context, &ex.bounds)?;
                Ok((supporting_facts_loss(p, &ex.labels)?, ()))
            })?;
            if !out.losses.iter().all(|l| l.is_finite()) || !out.grads.all_finite() {
                let ids: Vec<&str> = batch.iter().map(|e| e.id.as_str()).collect();
                return Err(Error::Diverged(format!(
                    "non-finite reward loss in epoch {epoch}; batch {ids:?}; norms {:?}",
                    state.model.params.l2_norms()
                )));
            }
            loss_sum += out.losses.iter().sum::<f64>();
            out.grads.clip(cfg.clip);
            state.adam.update(&mut state.model.params, &out.grads, cfg.learning_rate);
        }
        let (dev_f1, dev_em) =
            if dev.is_empty() { (f64::NAN, f64::NAN) } else { evaluate_reward_model(&state.model, dev)? };
        let summary = EpochSummary { epoch: epoch + 1, train_loss: loss_sum / train.len() as f64, dev_f1, dev_em };
        log::info!("reward epoch {}: loss {:.4} dev F1 {:.4}", summary.epoch, summary.train_loss, dev_f1);
        if epoch == 0 {
            if let Some(min) = cfg.abort_below_f1 {
                if !(dev_f1 >= min) {
                    return Err(Error::Diverged(format!(
                        "dev F1 {dev_f1:.4} below {min} after the first epoch; train loss {:.4}; norms {:?}",
                        summary.train_loss,
                        state.model.params.l2_norms()
                    )));
                }
            }
        }
        state.report.epochs.push(summary);
        let score = if dev_f1.is_nan() { -summary.train_loss } else { dev_f1 };
        if state.report.best_epoch.is_none() || score > state.report.best_dev_f1 {
            state.report.best_epoch = Some(summary.epoch);
            state.report.best_dev_f1 = score;
            state.best = state.model.clone();
        }
        state.epoch += 1;
        on_epoch(&state)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic::{generate_examples, SyntheticConfig};
    use crate::corpus::{build_vocabulary, encode_example};
    use crate::reward::RewardModelConfig;

    fn records(n: usize, seed: u64) -> (Vocabulary, Vec<SplitRecord>) {
        let examples = generate_examples(&SyntheticConfig { examples: n, seed, ..Default::default() });
        let vocab = build_vocabulary(&examples, 500).unwrap();
        let recs = examples
            .into_iter()
            .map(|e| {
                let encoded = encode_example(&e, &vocab).unwrap();
                SplitRecord { example: e, encoded }
            })
            .collect();
        (vocab, recs)
    }

    fn small_config() -> RewardModelConfig {
        RewardModelConfig {
            word_dim: 8,
            char_dim: 4,
            char_filters: 6,
            char_width: 3,
            max_word_chars: 8,
            hidden: 6,
            contextual: true,
        }
    }

    #[test]
    fn untrained_f1_equals_all_positive_baseline() {
        let (vocab, recs) = records(12, 3);
        let chars = RewardModel::char_inventory(vocab.tokens());
        let model = RewardModel::new(small_config(), &vocab, chars, 1);
        let exs = prepare_examples(&model, &vocab, &recs);
        let (f1, _) = evaluate_reward_model(&model, &exs).unwrap();
        let baseline: f64 = recs
            .iter()
            .map(|r| {
                let k = r.encoded.num_sentences() as f64;
                let g = r.encoded.gold_facts().len() as f64;
                2.0 * (g / k) * 1.0 / (g / k + 1.0)
            })
            .sum::<f64>()
            / recs.len() as f64;
        assert!((f1 - baseline).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let (vocab, recs) = records(6, 4);
        let chars = RewardModel::char_inventory(vocab.tokens());
        let model = RewardModel::new(small_config(), &vocab, chars, 1);
        let exs = prepare_examples(&model, &vocab, &recs);
        let cfg = RewardTrainConfig { epochs: 3, batch_size: 4, ..Default::default() };
        let full =
            train_reward_model(RewardCheckpoint::new(model.clone(), "h".into()), &exs, &exs, &cfg, |_| Ok(())).unwrap();
        let first = RewardTrainConfig { epochs: 1, ..cfg.clone() };
        let partial =
            train_reward_model(RewardCheckpoint::new(model, "h".into()), &exs, &exs, &first, |_| Ok(())).unwrap();
        let bytes = crate::checkpoint::to_bytes(crate::checkpoint::Kind::Reward, &partial).unwrap();
        let mut restored: RewardCheckpoint =
            crate::checkpoint::from_bytes(crate::checkpoint::Kind::Reward, &bytes).unwrap();
        restored.reindex();
        let resumed = train_reward_model(restored, &exs, &exs, &cfg, |_| Ok(())).unwrap();
        assert_eq!(resumed.model.params, full.model.params);
        assert_eq!(resumed.report, full.report);
    }
}
