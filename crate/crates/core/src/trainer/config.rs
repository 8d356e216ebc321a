use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::reward::{RewardModelConfig, RewardTrainConfig, RewardWeights};
use crate::{Error, Result};

/// Every knob of a run. Parsed from a flat TOML document in which every key
/// is required and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub seed: u64,
    pub vocab_size: usize,

    pub word_dim: usize,
    pub tag_dim: usize,
    pub hidden: usize,
    pub decoder_hidden: usize,
    pub max_len: usize,
    pub gold_sf_tags: bool,
    pub dropout: f64,

    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub alpha: f64,
    pub history_size: usize,
    pub warmup_steps: usize,
    pub reward_mer_weight: f64,
    pub reward_rouge_weight: f64,
    pub reward_bleu_weight: f64,

    pub batch_size: usize,
    pub clip: f64,
    pub phase1_lr: f64,
    pub phase1_steps: usize,
    pub phase2_lr: f64,
    pub phase2_steps: usize,
    pub eval_every: usize,
    pub checkpoint_every: usize,
    pub beam_width: usize,
    /// Dev examples decoded for checkpoint selection; 0 means all.
    pub dev_eval_examples: usize,

    pub reward_word_dim: usize,
    pub reward_char_dim: usize,
    pub reward_char_filters: usize,
    pub reward_char_width: usize,
    pub reward_max_word_chars: usize,
    pub reward_hidden: usize,
    pub reward_contextual: bool,
    pub reward_epochs: usize,
    pub reward_batch_size: usize,
    pub reward_lr: f64,
    /// Abort reward training when first-epoch dev F1 is below this; 0 disables.
    pub reward_abort_below_f1: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            vocab_size: crate::corpus::VOCAB_CAP,
            word_dim: 300,
            tag_dim: 3,
            hidden: 512,
            decoder_hidden: 512,
            max_len: crate::decoder::MAX_LEN,
            gold_sf_tags: false,
            dropout: 0.3,
            beta: 10.0,
            gamma1: 0.99,
            gamma2: 0.01,
            gamma3: 0.1,
            alpha: 0.9,
            history_size: 5000,
            warmup_steps: 100,
            reward_mer_weight: 1.0,
            reward_rouge_weight: 1.0,
            reward_bleu_weight: 0.0,
            batch_size: 16,
            clip: 5.0,
            phase1_lr: 0.01,
            phase1_steps: 50_000,
            phase2_lr: 1e-5,
            phase2_steps: 20_000,
            eval_every: 500,
            checkpoint_every: 500,
            beam_width: crate::decoder::DEFAULT_BEAM,
            dev_eval_examples: 0,
            reward_word_dim: 300,
            reward_char_dim: 8,
            reward_char_filters: 100,
            reward_char_width: 5,
            reward_max_word_chars: 16,
            reward_hidden: 80,
            reward_contextual: true,
            reward_epochs: 10,
            reward_batch_size: 16,
            reward_lr: 1e-3,
            reward_abort_below_f1: 0.2,
        }
    }
}

impl TrainingConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("dropout", self.dropout),
            ("beta", self.beta),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("alpha", self.alpha),
            ("reward_mer_weight", self.reward_mer_weight),
            ("reward_rouge_weight", self.reward_rouge_weight),
            ("reward_bleu_weight", self.reward_bleu_weight),
            ("clip", self.clip),
            ("phase1_lr", self.phase1_lr),
            ("phase2_lr", self.phase2_lr),
            ("reward_lr", self.reward_lr),
            ("reward_abort_below_f1", self.reward_abort_below_f1),
        ];
        for (k, v) in finite {
            if !v.is_finite() {
                return Err(Error::Config(format!("`{k}` must be finite")));
            }
        }
        let positive = [
            ("vocab_size", self.vocab_size),
            ("word_dim", self.word_dim),
            ("tag_dim", self.tag_dim),
            ("hidden", self.hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("max_len", self.max_len),
            ("history_size", self.history_size),
            ("batch_size", self.batch_size),
            ("eval_every", self.eval_every),
            ("checkpoint_every", self.checkpoint_every),
            ("beam_width", self.beam_width),
            ("reward_word_dim", self.reward_word_dim),
            ("reward_char_dim", self.reward_char_dim),
            ("reward_char_filters", self.reward_char_filters),
            ("reward_char_width", self.reward_char_width),
            ("reward_max_word_chars", self.reward_max_word_chars),
            ("reward_hidden", self.reward_hidden),
            ("reward_batch_size", self.reward_batch_size),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("`dropout` must lie in [0, 1)".into()));
        }
        if self.clip <= 0.0 {
            return Err(Error::Config("`clip` must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            word_dim: self.word_dim,
            tag_dim: self.tag_dim,
            hidden: self.hidden,
            decoder_hidden: self.decoder_hidden,
            max_len: self.max_len,
            gold_sf_tags: self.gold_sf_tags,
        }
    }

    pub fn reward_model_config(&self) -> RewardModelConfig {
        RewardModelConfig {
            word_dim: self.reward_word_dim,
            char_dim: self.reward_char_dim,
            char_filters: self.reward_char_filters,
            char_width: self.reward_char_width,
            max_word_chars: self.reward_max_word_chars,
            hidden: self.reward_hidden,
            contextual: self.reward_contextual,
        }
    }

    pub fn reward_train_config(&self) -> RewardTrainConfig {
        RewardTrainConfig {
            epochs: self.reward_epochs,
            batch_size: self.reward_batch_size,
            learning_rate: self.reward_lr,
            clip: self.clip,
            seed: self.seed,
            abort_below_f1: (self.reward_abort_below_f1 > 0.0).then_some(self.reward_abort_below_f1),
        }
    }

    pub fn reward_weights(&self) -> RewardWeights {
        RewardWeights { mer: self.reward_mer_weight, rouge_l: self.reward_rouge_weight, bleu: self.reward_bleu_weight }
    }

    pub fn hash(&self) -> String {
        crate::checkpoint::config_hash(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_setting() {
        let c = TrainingConfig::default();
        assert_eq!((c.gamma1, c.gamma2, c.gamma3), (0.99, 0.01, 0.1));
        assert_eq!((c.beta, c.alpha, c.history_size, c.batch_size), (10.0, 0.9, 5000, 16));
        assert_eq!((c.clip, c.dropout, c.phase1_lr, c.phase2_lr), (5.0, 0.3, 0.01, 1e-5));
        assert_eq!((c.beam_width, c.max_len, c.hidden), (4, 30, 512));
    }

    #[test]
    fn toml_round_trip() {
        let c = TrainingConfig::default();
        assert_eq!(TrainingConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn missing_key_is_named() {
        let text: String = TrainingConfig::default()
            .to_toml()
            .lines()
            .filter(|l| !l.starts_with("gamma2 "))
            .collect::<Vec<_>>()
            .join("\n");
        let err = TrainingConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("gamma2"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = TrainingConfig::default().to_toml() + "\nlearning_rate = 0.1\n";
        let err = TrainingConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("learning_rate"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = TrainingConfig::default();
        c.batch_size = 0;
        assert!(c.validate().unwrap_err().to_string().contains("batch_size"));
        let mut c = TrainingConfig::default();
        c.alpha = f64::NAN;
        assert!(c.validate().unwrap_err().to_string().contains("alpha"));
    }
}
