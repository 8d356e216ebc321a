//! The question generator: encoder, supporting-fact head and decoder sharing
//! one parameter set and one word-embedding table.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamSet, Var};
use crate::corpus::{EncodedExample, SOS};
use crate::decoder::{
    beam_search, decoder_step, greedy_decode, sample_in_graph, Decoded, DecoderParams, InferenceDecoder, SourceContext,
};
use crate::encoder::{encode_layer1, encode_layer2, sf_tag_encoding, EncoderDims, EncoderOutput, EncoderParams};
use crate::nn::{Dropout, LstmState};
use crate::sf_head::{
    harden, predict_supporting_facts, sentence_representations, supporting_facts_loss, SentencePrediction, SfHead,
    BCE_EPS, SF_THRESHOLD,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub tag_dim: usize,
    /// Per-direction encoder hidden size.
    pub hidden: usize,
    pub decoder_hidden: usize,
    pub max_len: usize,
    /// Feed gold supporting-fact labels to the second encoder layer during
    /// training instead of the head's own predictions.
    pub gold_sf_tags: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { word_dim: 300, tag_dim: 3, hidden: 512, decoder_hidden: 512, max_len: 30, gold_sf_tags: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QgModel {
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub params: ParamSet,
    pub encoder: EncoderParams,
    pub sf_head: SfHead,
    pub decoder: DecoderParams,
}

/// Everything the losses need from one example's forward pass.
pub struct ForwardPass<'g> {
    pub encoder: EncoderOutput<'g>,
    /// `K x 1` sentence probabilities.
    pub sf_probs: Var<'g>,
    pub sf_predictions: Vec<bool>,
    pub source: SourceContext<'g>,
    pub initial: LstmState<'g>,
}

/// Teacher-forced negative log-likelihood with token accuracy counts.
pub struct TeacherForced<'g> {
    pub loss: Var<'g>,
    pub correct: usize,
    pub total: usize,
}

impl QgModel {
    pub fn new(config: ModelConfig, vocab_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let dims = EncoderDims {
            vocab: vocab_size,
            word: config.word_dim,
            answer_tag: config.tag_dim,
            sf_tag: config.tag_dim,
            hidden: config.hidden,
        };
        let encoder = EncoderParams::new(&mut params, &mut rng, dims);
        let sf_head = SfHead::new(&mut params, &mut rng, 2 * config.hidden);
        let decoder = DecoderParams::new(
            &mut params,
            &mut rng,
            config.word_dim,
            2 * config.hidden,
            config.decoder_hidden,
            vocab_size,
        );
        Self { config, vocab_size, params, encoder, sf_head, decoder }
    }

    /// Encoder, supporting-fact head and decoder set-up for one example.
    pub fn forward<'g>(
        &self,
        g: &'g Graph<'g>,
        ex: &EncodedExample,
        dropout: &mut Dropout,
        training: bool,
    ) -> Result<ForwardPass<'g>> {
        let l1 = encode_layer1(g, &self.encoder, &ex.word_ids, &ex.answer_tags, dropout)?;
        let reprs = sentence_representations(g, l1.z, &ex.sentence_bounds)?;
        let sf_probs = predict_supporting_facts(g, &self.sf_head, reprs);
        let probs = sf_probs.value();
        let sf_predictions = harden(probs.as_slice().expect("column vector"), SF_THRESHOLD);
        let tags: Vec<bool> = if training && self.config.gold_sf_tags {
            ex.sf_labels.iter().map(|&l| l != 0).collect()
        } else {
            sf_predictions.clone()
        };
        let sf_tags = sf_tag_encoding(g, &self.encoder, &tags, &ex.sentence_bounds, ex.len())?;
        let h = encode_layer2(g, &self.encoder, l1.z, l1.words, l1.answer_tags, sf_tags, dropout)?;
        let encoder = EncoderOutput { z: l1.z, h, words: l1.words, answer_tags: l1.answer_tags, sf_tags };
        let source = SourceContext::new(
            g,
            &self.decoder,
            h,
            Rc::new(ex.extended_ids.clone()),
            ex.extended_size(self.vocab_size),
        )?;
        let initial = self.decoder.initial_state(g, h);
        Ok(ForwardPass { encoder, sf_probs, sf_predictions, source, initial })
    }

    /// Summed `-log P(y*_t)` over the target (EOS included), feeding gold
    /// previous tokens.
    pub fn teacher_forced<'g>(
        &self,
        g: &'g Graph<'g>,
        pass: &ForwardPass<'g>,
        ex: &EncodedExample,
    ) -> Result<TeacherForced<'g>> {
        if ex.target_ids.is_empty() {
            return Err(Error::Empty("target question"));
        }
        let mut state = pass.initial;
        let mut prev = SOS;
        let mut terms = Vec::with_capacity(ex.target_ids.len());
        let mut correct = 0;
        for &gold in &ex.target_ids {
            let out = decoder_step(g, &self.decoder, self.encoder.word_embedding, state, prev, &pass.source, None)?;
            let dist = out.final_dist.value();
            if crate::decoder::argmax(dist.as_slice().expect("row")) == gold {
                correct += 1;
            }
            terms.push(out.final_dist.pick(0, gold).clamp_log(BCE_EPS));
            state = out.state;
            prev = gold;
        }
        let total = terms.len();
        let loss = terms.into_iter().reduce(|a, b| a.add(b)).expect("non-empty").scale(-1.0);
        Ok(TeacherForced { loss, correct, total })
    }

    pub fn sf_loss<'g>(&self, pass: &ForwardPass<'g>, ex: &EncodedExample) -> Result<Var<'g>> {
        supporting_facts_loss(pass.sf_probs, &ex.sf_labels)
    }

    /// Samples a question inside the graph; returns ids and the summed
    /// log-probability `R`.
    pub fn sample<'g>(
        &self,
        g: &'g Graph<'g>,
        pass: &ForwardPass<'g>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<usize>, Var<'g>)> {
        sample_in_graph(
            g,
            &self.decoder,
            self.encoder.word_embedding,
            &pass.source,
            pass.initial,
            self.config.max_len,
            rng,
        )
    }

    /// Runs the encoder once and returns a gradient-free decoder over it.
    pub fn decoder_for(&self, ex: &EncodedExample) -> Result<InferenceDecoder<'_>> {
        let g = Graph::new(&self.params);
        let pass = self.forward(&g, ex, &mut Dropout::off(), false)?;
        Ok(InferenceDecoder {
            params: &self.params,
            decoder: &self.decoder,
            embedding: self.encoder.word_embedding,
            states: pass.encoder.h.value(),
            extended_ids: pass.source.extended_ids.clone(),
            extended_size: pass.source.extended_size,
            gen_override: None,
        })
    }

    /// Beam search (greedy when `beam_width == 1`); EOS stripped.
    pub fn generate(&self, ex: &EncodedExample, beam_width: usize) -> Result<Decoded> {
        let dec = self.decoder_for(ex)?;
        if beam_width == 1 {
            greedy_decode(&dec, self.config.max_len)
        } else {
            Ok(beam_search(&dec, beam_width, self.config.max_len)?.into_decoded())
        }
    }

    pub fn predict_sf(&self, ex: &EncodedExample) -> Result<SentencePrediction> {
        let g = Graph::new(&self.params);
        let l1 = encode_layer1(&g, &self.encoder, &ex.word_ids, &ex.answer_tags, &mut Dropout::off())?;
        let reprs = sentence_representations(&g, l1.z, &ex.sentence_bounds)?;
        let probs = predict_supporting_facts(&g, &self.sf_head, reprs).value();
        Ok(SentencePrediction::from_probabilities(probs.column(0).to_vec(), SF_THRESHOLD))
    }

    /// Restores name lookup after deserialisation.
    pub fn reindex(&mut self) {
        self.params.reindex();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic::{generate_examples, SyntheticConfig};
    use crate::corpus::{encode_example, Vocabulary};

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig { word_dim: 4, tag_dim: 2, hidden: 3, decoder_hidden: 4, max_len: 8, gold_sf_tags: false }
    }

    fn fixture() -> (Vocabulary, Vec<EncodedExample>) {
        let examples = generate_examples(&SyntheticConfig { examples: 4, ..Default::default() });
        let vocab = crate::corpus::build_vocabulary(&examples, 40).unwrap();
        let encoded = examples.iter().map(|e| encode_example(e, &vocab).unwrap()).collect();
        (vocab, encoded)
    }

    #[test]
    fn forward_shapes() {
        let (vocab, encoded) = fixture();
        let model = QgModel::new(tiny_config(), vocab.len(), 1);
        let g = Graph::new(&model.params);
        let ex = &encoded[0];
        let pass = model.forward(&g, ex, &mut Dropout::off(), true).unwrap();
        assert_eq!(pass.encoder.h.shape(), (ex.len(), 6));
        assert_eq!(pass.encoder.z.shape(), (ex.len(), 6));
        assert_eq!(pass.sf_probs.shape(), (ex.num_sentences(), 1));
        let tf = model.teacher_forced(&g, &pass, ex).unwrap();
        assert_eq!(tf.total, ex.target_ids.len());
        assert!(tf.loss.item() > 0.0);
    }

    #[test]
    fn swapping_documents_changes_states() {
        let examples = generate_examples(&SyntheticConfig { examples: 2, ..Default::default() });
        let vocab = crate::corpus::build_vocabulary(&examples, 60).unwrap();
        let mut swapped = examples[0].clone();
        swapped.documents.swap(0, 1);
        for sf in std::mem::take(&mut swapped.supporting_facts) {
            let d = match sf.document {
                0 => 1,
                1 => 0,
                d => d,
            };
            swapped.supporting_facts.insert(crate::corpus::SupportingFact { document: d, sentence: sf.sentence });
        }
        if let Some(loc) = swapped.answer_location.as_mut() {
            loc.document = match loc.document {
                0 => 1,
                1 => 0,
                d => d,
            };
        }
        let a = encode_example(&examples[0], &vocab).unwrap();
        let b = encode_example(&swapped, &vocab).unwrap();
        let model = QgModel::new(tiny_config(), vocab.len(), 2);
        let g = Graph::new(&model.params);
        let ha = model.forward(&g, &a, &mut Dropout::off(), false).unwrap().encoder.h.value();
        let hb = model.forward(&g, &b, &mut Dropout::off(), false).unwrap().encoder.h.value();
        assert_eq!(ha.dim(), hb.dim());
        assert!(ha.iter().zip(hb.iter()).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn generation_is_within_extended_vocabulary() {
        let (vocab, encoded) = fixture();
        let model = QgModel::new(tiny_config(), vocab.len(), 3);
        for ex in &encoded {
            for beam in [1, 4] {
                let out = model.generate(ex, beam).unwrap();
                assert!(out.tokens.len() <= 8);
                assert!(out.tokens.iter().all(|&t| t < ex.extended_size(vocab.len())));
            }
        }
    }

    #[test]
    fn round_trips_through_serde() {
        let model = QgModel::new(tiny_config(), 10, 4);
        let bytes = bincode::serialize(&model).unwrap();
        let mut back: QgModel = bincode::deserialize(&bytes).unwrap();
        back.reindex();
        assert_eq!(back.params, model.params);
        assert_eq!(back.config, model.config);
    }
}
