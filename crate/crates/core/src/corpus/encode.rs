use serde::{Deserialize, Serialize};

use super::{QAExample, SupportingFact, Vocabulary, EOS, UNK};
use crate::{Error, Result};

/// Tensor-ready view of one example over the concatenated documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub id: String,
    pub word_ids: Vec<usize>,
    pub answer_tags: Vec<u8>,
    /// Half-open `[start, end)` per candidate sentence, partitioning `[0, N)`.
    pub sentence_bounds: Vec<(usize, usize)>,
    /// Which `(document, sentence)` each bound belongs to.
    pub sentence_keys: Vec<SupportingFact>,
    pub sf_labels: Vec<u8>,
    /// Like `word_ids`, but source OOV tokens get ids `V + k`.
    pub extended_ids: Vec<usize>,
    pub oov_list: Vec<String>,
    /// Gold question under the extended vocabulary, terminated by EOS.
    pub target_ids: Vec<usize>,
}

impl EncodedExample {
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }

    pub fn num_sentences(&self) -> usize {
        self.sentence_bounds.len()
    }

    /// Size of the fixed vocabulary plus this example's OOV list.
    pub fn extended_size(&self, vocab_len: usize) -> usize {
        vocab_len + self.oov_list.len()
    }

    pub fn gold_facts(&self) -> Vec<SupportingFact> {
        self.sentence_keys.iter().zip(&self.sf_labels).filter(|(_, &l)| l == 1).map(|(k, _)| *k).collect()
    }
}

/// Maps extended ids back to surface tokens.
pub fn decode_extended(ids: &[usize], vocab: &Vocabulary, oov_list: &[String]) -> Vec<String> {
    ids.iter()
        .map(|&id| {
            if id < vocab.len() {
                vocab.token(id).to_string()
            } else {
                oov_list.get(id - vocab.len()).cloned().unwrap_or_else(|| vocab.token(UNK).to_string())
            }
        })
        .collect()
}

pub fn encode_example(example: &QAExample, vocab: &Vocabulary) -> Result<EncodedExample> {
    let loc = example.answer_location.ok_or_else(|| Error::Invalid(format!("{}: answer not located", example.id)))?;
    let n = example.num_tokens();
    let mut word_ids = Vec::with_capacity(n);
    let mut extended_ids = Vec::with_capacity(n);
    let mut oov_list: Vec<String> = Vec::new();
    let mut answer_tags = vec![0u8; n];
    let mut sentence_bounds = Vec::new();
    let mut sentence_keys = Vec::new();
    let mut sf_labels = Vec::new();

    let mut pos = 0;
    for (d, doc) in example.documents.iter().enumerate() {
        let doc_start = pos;
        if d == loc.document {
            for tag in &mut answer_tags[doc_start + loc.start..doc_start + loc.end] {
                *tag = 1;
            }
        }
        for (s, sentence) in doc.sentences.iter().enumerate() {
            let key = SupportingFact { document: d, sentence: s };
            sentence_bounds.push((pos, pos + sentence.len()));
            sentence_keys.push(key);
            sf_labels.push(u8::from(example.supporting_facts.contains(&key)));
            for tok in sentence {
                let id = vocab.id(tok);
                word_ids.push(id);
                if id == UNK {
                    let k = match oov_list.iter().position(|o| o == tok) {
                        Some(k) => k,
                        None => {
                            oov_list.push(tok.clone());
                            oov_list.len() - 1
                        }
                    };
                    extended_ids.push(vocab.len() + k);
                } else {
                    extended_ids.push(id);
                }
                pos += 1;
            }
        }
    }

    let mut target_ids: Vec<usize> = example
        .question
        .iter()
        .map(|tok| match vocab.get(tok) {
            Some(id) => id,
            None => oov_list.iter().position(|o| o == tok).map_or(UNK, |k| vocab.len() + k),
        })
        .collect();
    target_ids.push(EOS);

    Ok(EncodedExample {
        id: example.id.clone(),
        word_ids,
        answer_tags,
        sentence_bounds,
        sentence_keys,
        sf_labels,
        extended_ids,
        oov_list,
        target_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnswerLocation, Document, Level};
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn example() -> QAExample {
        QAExample {
            id: "enc".into(),
            documents: vec![
                Document {
                    title: "a".into(),
                    sentences: vec![words("after bedřich smetana ,"), words("he was second .")],
                },
                Document { title: "b".into(), sentences: vec![words("a concert at the end of summer .")] },
            ],
            question: words("which composer came after bedřich smetana ?"),
            answer_text: words("bedřich smetana"),
            answer_location: Some(AnswerLocation { document: 0, start: 1, end: 3 }),
            supporting_facts: [SupportingFact { document: 1, sentence: 0 }].into_iter().collect(),
            level: Level::Medium,
            question_type: "bridge".into(),
        }
    }

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(words(
            "after smetana , he was second . a concert at the end of summer which composer ?",
        ))
        .unwrap()
    }

    #[test]
    fn first_oov_gets_first_extended_id() {
        let v = vocab();
        let enc = encode_example(&example(), &v).unwrap();
        assert_eq!(enc.oov_list[0], "bedřich");
        assert_eq!(enc.extended_ids[1], v.len());
        assert_eq!(enc.word_ids[1], UNK);
        // question copy ids: "bedřich" resolves to its extended id, "came" is UNK
        assert_eq!(enc.target_ids[4], v.len());
        assert_eq!(enc.target_ids[2], UNK);
        assert_eq!(*enc.target_ids.last().unwrap(), EOS);
    }

    #[test]
    fn in_vocabulary_question_tokens_keep_their_id() {
        let v = vocab();
        let enc = encode_example(&example(), &v).unwrap();
        assert_eq!(enc.target_ids[5], v.id("smetana"));
    }

    #[test]
    fn answer_tags_cover_span_only() {
        let enc = encode_example(&example(), &vocab()).unwrap();
        let ones: Vec<usize> = (0..enc.len()).filter(|&i| enc.answer_tags[i] == 1).collect();
        assert_eq!(ones, vec![1, 2]);
    }

    #[test]
    fn span_five_to_seven_of_twenty() {
        let ex = QAExample {
            documents: vec![Document {
                title: "t".into(),
                sentences: vec![(0..20).map(|i| format!("t{i}")).collect()],
            }],
            answer_location: Some(AnswerLocation { document: 0, start: 5, end: 7 }),
            supporting_facts: [SupportingFact { document: 0, sentence: 0 }].into_iter().collect(),
            ..example()
        };
        let enc = encode_example(&ex, &vocab()).unwrap();
        let ones: Vec<usize> = (0..20).filter(|&i| enc.answer_tags[i] == 1).collect();
        assert_eq!(ones, vec![5, 6]);
    }

    #[test]
    fn bounds_and_labels() {
        let enc = encode_example(&example(), &vocab()).unwrap();
        assert_eq!(enc.sentence_bounds, vec![(0, 4), (4, 8), (8, 16)]);
        assert_eq!(enc.sf_labels, vec![0, 0, 1]);
    }

    proptest! {
        #[test]
        fn extended_ids_roundtrip(sentences in prop::collection::vec(
            prop::collection::vec("[a-f]{1,3}", 1..6), 1..5)) {
            let docs = vec![Document { title: "p".into(), sentences: sentences.clone() }];
            let ex = QAExample {
                documents: docs,
                answer_location: Some(AnswerLocation { document: 0, start: 0, end: 1 }),
                supporting_facts: [SupportingFact { document: 0, sentence: 0 }].into_iter().collect(),
                ..example()
            };
            let v = Vocabulary::from_tokens(words("a b c aa")).unwrap();
            let enc = encode_example(&ex, &v).unwrap();
            let flat: Vec<String> = sentences.into_iter().flatten().collect();
            prop_assert_eq!(decode_extended(&enc.extended_ids, &v, &enc.oov_list), flat);
            let total: usize = enc.sentence_bounds.iter().map(|(s, e)| e - s).sum();
            prop_assert_eq!(total, enc.len());
            for (i, &w) in enc.word_ids.iter().enumerate() {
                if w != UNK {
                    prop_assert_eq!(enc.extended_ids[i], w);
                }
            }
        }
    }
}
