use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::QAExample;
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];
pub const VOCAB_CAP: usize = 50_000;

/// Token/id bijection with four reserved entries at ids 0..4.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Vocabulary {
    /// Builds from non-reserved tokens in rank order.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        Self::from_all(all)
    }

    fn from_all(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary token '{t}'")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    /// Number of non-reserved entries.
    pub fn content_len(&self) -> usize {
        self.tokens.len() - RESERVED.len()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or UNK.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Hex SHA-256 over the token list; identifies a vocabulary in checkpoints.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    /// One token per line, reserved entries first.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::Invalid(format!("{} is not a vocabulary file", path.display())));
        }
        Self::from_all(tokens)
    }

    /// Restores the lookup table after deserialisation.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }
}

/// The `cap` most frequent document and question tokens of the training
/// split; ties broken lexicographically.
pub fn build_vocabulary(train: &[QAExample], cap: usize) -> Result<Vocabulary> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for ex in train {
        for doc in &ex.documents {
            for tok in doc.tokens() {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        for tok in &ex.question {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty("vocabulary corpus has no tokens"));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|(t, _)| !RESERVED.contains(t)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cap);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Level};
    use std::collections::BTreeSet;

    fn example(doc_tokens: Vec<String>, question: Vec<String>) -> QAExample {
        QAExample {
            id: "v".into(),
            documents: vec![Document { title: "t".into(), sentences: vec![doc_tokens] }],
            question,
            answer_text: vec![],
            answer_location: None,
            supporting_facts: BTreeSet::new(),
            level: Level::Easy,
            question_type: "bridge".into(),
        }
    }

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn small_corpus_keeps_everything() {
        let v = build_vocabulary(&[example(words("a b c a"), words("b"))], VOCAB_CAP).unwrap();
        assert_eq!(v.len(), 3 + 4);
        assert_eq!(v.token(4), "a");
        assert_eq!(v.id("zzz"), UNK);
    }

    #[test]
    fn ties_at_cutoff_are_lexicographic() {
        let ex = example(words("ab aa zz zz zz"), vec![]);
        let v = build_vocabulary(&[ex], 2).unwrap();
        assert_eq!(&v.tokens()[4..], &["zz".to_string(), "aa".to_string()]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(build_vocabulary(&[], 10).is_err());
    }

    #[test]
    fn cap_matches_brute_force_counter() {
        // 60,000 distinct tokens with varied frequencies.
        let tokens: Vec<String> =
            (0..60_000).flat_map(|i| std::iter::repeat_n(format!("w{i}"), 1 + (i * 7919) % 3)).collect();
        let v = build_vocabulary(&[example(tokens.clone(), vec![])], VOCAB_CAP).unwrap();
        assert_eq!(v.content_len(), 50_000);

        let mut oracle: Vec<(String, usize)> = Vec::new();
        let mut sorted = tokens.clone();
        sorted.sort();
        for t in sorted {
            match oracle.last_mut() {
                Some((last, c)) if *last == t => *c += 1,
                _ => oracle.push((t, 1)),
            }
        }
        oracle.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let expected: Vec<String> = oracle.into_iter().take(50_000).map(|(t, _)| t).collect();
        assert_eq!(&v.tokens()[4..], expected.as_slice());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::from_tokens(words("x y z")).unwrap();
        v.save(&path).unwrap();
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.id("y"), 5);
        assert_eq!(v.fingerprint(), back.fingerprint());
    }
}
