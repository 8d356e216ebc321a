//! Question-aware supporting-fact network and the rewards built on it.

mod network;
mod scores;
mod train;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedExample, SupportingFact, Vocabulary};
use crate::Result;

pub use network::{RewardInput, RewardModel, RewardModelConfig, SequenceLayer};
pub use scores::{brevity_penalty, clipped_matches, f1, lcs_len, ngram_counts, rouge_l, sentence_bleu, set_f1};
pub use train::{
    evaluate_reward_model, prepare_examples, train_reward_model, EpochSummary, RewardCheckpoint, RewardExample,
    RewardTrainConfig, RewardTrainReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub mer: f64,
    pub rouge_l: f64,
    pub bleu: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { mer: 1.0, rouge_l: 1.0, bleu: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardValue {
    pub mer: f64,
    pub rouge_l: f64,
    /// Only computed when it carries weight.
    pub bleu: Option<f64>,
    pub combined: f64,
}

impl RewardValue {
    pub fn combine(mer: f64, rouge_l: f64, bleu: Option<f64>, w: &RewardWeights) -> Self {
        let combined = w.mer * mer + w.rouge_l * rouge_l + w.bleu * bleu.unwrap_or(0.0);
        Self { mer, rouge_l, bleu, combined }
    }
}

/// Sentences predicted as supporting, as `(document, sentence)` keys.
pub fn predicted_facts(labels: &[bool], keys: &[SupportingFact]) -> BTreeSet<SupportingFact> {
    labels.iter().zip(keys).filter(|(&l, _)| l).map(|(_, &k)| k).collect()
}

/// F1 between predicted and gold supporting facts.
pub fn mer_f1(predicted: &BTreeSet<SupportingFact>, gold: &BTreeSet<SupportingFact>) -> f64 {
    set_f1(predicted, gold)
}

/// MER for a generated question: the reward network's hard prediction scored
/// against the gold supporting facts.
pub fn mer_reward(model: &RewardModel, vocab: &Vocabulary, question: &[String], ex: &EncodedExample) -> Result<f64> {
    let pred = model.predict_sf(vocab, question, ex)?;
    let gold: BTreeSet<SupportingFact> = ex.gold_facts().into_iter().collect();
    Ok(mer_f1(&predicted_facts(&pred.labels, &ex.sentence_keys), &gold))
}

/// Weighted MER + ROUGE-L (+ BLEU). An empty question earns zero for every
/// component, since the reward network needs at least one question token.
pub fn combined_reward(
    model: &RewardModel,
    vocab: &Vocabulary,
    question: &[String],
    reference: &[String],
    ex: &EncodedExample,
    weights: &RewardWeights,
) -> Result<RewardValue> {
    if question.is_empty() {
        let bleu = (weights.bleu != 0.0).then_some(0.0);
        return Ok(RewardValue::combine(0.0, 0.0, bleu, weights));
    }
    let mer = if weights.mer != 0.0 { mer_reward(model, vocab, question, ex)? } else { 0.0 };
    let rl = rouge_l(question, reference);
    let bleu = (weights.bleu != 0.0).then(|| sentence_bleu(question, reference));
    Ok(RewardValue::combine(mer, rl, bleu, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_arithmetic() {
        let w = RewardWeights::default();
        assert_eq!(RewardValue::combine(1.0, 1.0, None, &w).combined, 2.0);
        let only_mer = RewardWeights { mer: 1.0, rouge_l: 0.0, bleu: 0.0 };
        assert_eq!(RewardValue::combine(0.3, 0.9, None, &only_mer).combined, 0.3);
        let v = RewardValue::combine(2.0 / 3.0, 0.5, None, &w);
        assert!((v.combined - 7.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn mer_set_cases() {
        let f = |v: &[(usize, usize)]| {
            v.iter().map(|&(d, s)| SupportingFact { document: d, sentence: s }).collect::<BTreeSet<_>>()
        };
        let gold = f(&[(0, 1), (1, 0), (1, 2)]);
        assert_eq!(mer_f1(&gold, &gold), 1.0);
        assert_eq!(mer_f1(&f(&[(0, 0)]), &gold), 0.0);
        assert_eq!(mer_f1(&f(&[]), &gold), 0.0);
        let pred = f(&[(0, 0), (0, 1), (1, 0)]);
        assert!((mer_f1(&pred, &gold) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(mer_f1(&pred, &gold), mer_f1(&gold, &pred));
    }

    #[test]
    fn predicted_facts_follow_labels() {
        let keys: Vec<SupportingFact> = (0..3).map(|s| SupportingFact { document: s / 2, sentence: s % 2 }).collect();
        let set = predicted_facts(&[true, false, true], &keys);
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec![keys[0], keys[2]]);
    }
}
