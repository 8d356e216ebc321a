//! Question-aware supporting-fact network: character CNN and word embeddings,
//! a contextual layer, bidirectional attention between context and question,
//! a second contextual layer, residual self-attention, and a per-sentence
//! classifier over first and last positions.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Mat, ParamId, ParamSet, Var};
use crate::corpus::{decode_extended, EncodedExample, Vocabulary};
use crate::encoder::check_bounds;
use crate::nn::{xavier_normal, BiLstm, Linear};
use crate::sf_head::{sentence_representations, SentencePrediction, SF_THRESHOLD};
use crate::{Error, Result};

const CHAR_PAD: usize = 0;
const CHAR_UNK: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardModelConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_width: usize,
    /// Characters kept per word.
    pub max_word_chars: usize,
    /// Per-direction hidden size of the recurrent layers.
    pub hidden: usize,
    /// With `false` the recurrent layers become position-wise maps, so the
    /// network carries no order information.
    pub contextual: bool,
}

impl Default for RewardModelConfig {
    fn default() -> Self {
        Self {
            word_dim: 300,
            char_dim: 8,
            char_filters: 100,
            char_width: 5,
            max_word_chars: 16,
            hidden: 80,
            contextual: true,
        }
    }
}

impl RewardModelConfig {
    fn chars_per_word(&self) -> usize {
        self.max_word_chars.max(self.char_width)
    }
}

/// Recurrent or position-wise sequence layer producing `2 * hidden` columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SequenceLayer {
    Recurrent(BiLstm),
    Positional(Linear),
}

impl SequenceLayer {
    fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        rng: &mut R,
        name: &str,
        input: usize,
        hidden: usize,
        contextual: bool,
    ) -> Self {
        if contextual {
            SequenceLayer::Recurrent(BiLstm::new(params, rng, name, input, hidden))
        } else {
            SequenceLayer::Positional(Linear::new(params, rng, name, input, 2 * hidden, true))
        }
    }

    fn forward<'g>(&self, g: &'g Graph<'g>, xs: Var<'g>) -> Var<'g> {
        match self {
            SequenceLayer::Recurrent(rnn) => rnn.forward(g, xs),
            SequenceLayer::Positional(lin) => lin.forward(g, xs).tanh(),
        }
    }
}

/// Word and character ids of one token sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardInput {
    pub words: Vec<usize>,
    /// `words.len() * chars_per_word` ids, row-major.
    pub chars: Vec<usize>,
}

impl RewardInput {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub config: RewardModelConfig,
    pub params: ParamSet,
    pub vocab_fingerprint: String,
    /// Character inventory; id `i + 2` is `chars[i]`.
    chars: Vec<char>,
    #[serde(skip)]
    char_ids: HashMap<char, usize>,
    word_embedding: ParamId,
    char_embedding: ParamId,
    char_conv: Linear,
    context: SequenceLayer,
    fusion: Linear,
    modeling: SequenceLayer,
    self_fusion: Linear,
    classifier: Linear,
}

impl RewardModel {
    /// The classifier starts at zero, so an untrained model gives every
    /// sentence probability one half.
    pub fn new(config: RewardModelConfig, vocab: &Vocabulary, chars: Vec<char>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let h = config.hidden;
        let word_embedding = params.add("reward.word_embedding", xavier_normal(&mut rng, vocab.len(), config.word_dim));
        let char_embedding =
            params.add("reward.char_embedding", xavier_normal(&mut rng, chars.len() + 2, config.char_dim));
        let char_conv = Linear::new(
            &mut params,
            &mut rng,
            "reward.char_conv",
            config.char_width * config.char_dim,
            config.char_filters,
            true,
        );
        let input = config.word_dim + config.char_filters;
        let context = SequenceLayer::new(&mut params, &mut rng, "reward.context", input, h, config.contextual);
        let fusion = Linear::new(&mut params, &mut rng, "reward.fusion", 8 * h, 2 * h, true);
        let modeling = SequenceLayer::new(&mut params, &mut rng, "reward.modeling", 2 * h, h, config.contextual);
        let self_fusion = Linear::new(&mut params, &mut rng, "reward.self_fusion", 6 * h, 2 * h, true);
        let classifier = Linear::zeros(&mut params, "reward.classifier", 4 * h, 1, true);
        let mut model = Self {
            config,
            params,
            vocab_fingerprint: vocab.fingerprint(),
            chars,
            char_ids: HashMap::new(),
            word_embedding,
            char_embedding,
            char_conv,
            context,
            fusion,
            modeling,
            self_fusion,
            classifier,
        };
        model.reindex();
        model
    }

    /// Sorted distinct characters of the given tokens.
    pub fn char_inventory<'a>(tokens: impl IntoIterator<Item = &'a String>) -> Vec<char> {
        let set: std::collections::BTreeSet<char> = tokens.into_iter().flat_map(|t| t.chars()).collect();
        set.into_iter().collect()
    }

    /// Restores lookup tables after deserialisation.
    pub fn reindex(&mut self) {
        self.params.reindex();
        self.char_ids = self.chars.iter().enumerate().map(|(i, &c)| (c, i + 2)).collect();
    }

    pub fn word_embedding(&self) -> ParamId {
        self.word_embedding
    }

    pub fn prepare(&self, vocab: &Vocabulary, tokens: &[String]) -> RewardInput {
        let per = self.config.chars_per_word();
        let mut chars = Vec::with_capacity(tokens.len() * per);
        for t in tokens {
            let mut ids: Vec<usize> = t
                .chars()
                .take(self.config.max_word_chars)
                .map(|c| self.char_ids.get(&c).copied().unwrap_or(CHAR_UNK))
                .collect();
            ids.resize(per, CHAR_PAD);
            chars.extend(ids);
        }
        RewardInput { words: tokens.iter().map(|t| vocab.id(t)).collect(), chars }
    }

    /// Context tokens of an encoded example (source OOVs keep their surface form).
    pub fn prepare_context(&self, vocab: &Vocabulary, ex: &EncodedExample) -> RewardInput {
        self.prepare(vocab, &decode_extended(&ex.extended_ids, vocab, &ex.oov_list))
    }

    fn embed<'g>(&self, g: &'g Graph<'g>, input: &RewardInput) -> Var<'g> {
        let per = self.config.chars_per_word();
        let words = g.lookup(self.word_embedding, &input.words);
        let chars = g.lookup(self.char_embedding, &input.chars);
        let windows = chars.windows(per, self.config.char_width);
        let conv = self.char_conv.forward(g, windows).relu();
        let char_features = conv.group_max_rows(per - self.config.char_width + 1);
        g.concat_cols(&[words, char_features])
    }

    /// Sentence probabilities, `K x 1`.
    pub fn forward<'g>(
        &self,
        g: &'g Graph<'g>,
        question: &RewardInput,
        context: &RewardInput,
        bounds: &[(usize, usize)],
    ) -> Result<Var<'g>> {
        if question.is_empty() {
            return Err(Error::Empty("question"));
        }
        if context.is_empty() {
            return Err(Error::Empty("context"));
        }
        check_bounds(bounds, context.len())?;
        let c = self.context.forward(g, self.embed(g, context));
        let q = self.context.forward(g, self.embed(g, question));
        let sim = c.matmul(q.t());
        let c2q = sim.softmax_rows().matmul(q);
        let q2c = sim.max_cols().t().softmax_rows().matmul(c);
        let fused = g.concat_cols(&[c, c2q, c.mul(c2q), c.mul(q2c)]);
        let x = self.fusion.forward(g, fused).relu();
        let y = self.modeling.forward(g, x);
        let attended = y.matmul(y.t()).softmax_rows().matmul(y);
        let z = y.add(self.self_fusion.forward(g, g.concat_cols(&[y, attended, y.mul(attended)])).relu());
        let reps = sentence_representations(g, z, bounds)?;
        Ok(self.classifier.forward(g, reps).sigmoid())
    }

    /// Per-sentence probabilities with hard decisions at one half.
    pub fn predict(
        &self,
        question: &RewardInput,
        context: &RewardInput,
        bounds: &[(usize, usize)],
    ) -> Result<SentencePrediction> {
        let g = Graph::new(&self.params);
        let p = self.forward(&g, question, context, bounds)?.value();
        Ok(SentencePrediction::from_probabilities(p.column(0).to_vec(), SF_THRESHOLD))
    }

    /// Supporting-fact prediction for a question given as tokens.
    pub fn predict_sf(
        &self,
        vocab: &Vocabulary,
        question: &[String],
        ex: &EncodedExample,
    ) -> Result<SentencePrediction> {
        if question.is_empty() {
            return Err(Error::Empty("question"));
        }
        self.predict(&self.prepare(vocab, question), &self.prepare_context(vocab, ex), &ex.sentence_bounds)
    }

    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        if self.vocab_fingerprint != vocab.fingerprint() {
            return Err(Error::Checkpoint("reward model was trained with a different vocabulary".into()));
        }
        Ok(())
    }

    pub fn word_table_mut(&mut self) -> &mut Mat {
        self.params.get_mut(self.word_embedding)
    }
}
