//! Shared fixtures for the criterion benches under `benches/`.

use mhqg_core::corpus::synthetic::{generate_examples, SyntheticConfig};
use mhqg_core::corpus::{build_vocabulary, encode_example, EncodedExample, Vocabulary};
use mhqg_core::model::{ModelConfig, QgModel};

/// A synthetic example with distractor filler and a mid-sized model over
/// its vocabulary.
pub fn fixture(hidden: usize) -> (Vocabulary, EncodedExample, QgModel) {
    let examples = generate_examples(&SyntheticConfig {
        examples: 4,
        seed: 7,
        distractors: 2,
        filler_sentences: 4,
        ..Default::default()
    });
    let vocab = build_vocabulary(&examples, 5000).expect("vocabulary");
    let ex = encode_example(&examples[0], &vocab).expect("encodes");
    let config =
        ModelConfig { word_dim: 64, tag_dim: 3, hidden, decoder_hidden: hidden, max_len: 20, gold_sf_tags: false };
    let model = QgModel::new(config, vocab.len(), 1);
    (vocab, ex, model)
}
