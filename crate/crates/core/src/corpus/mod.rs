//! HotPotQA ingestion: raw loading, filtering, stratified splitting,
//! vocabulary construction and tensor-ready encoding.

mod encode;
mod filter;
mod io;
mod pipeline;
mod raw;
mod split;
pub mod synthetic;
mod vocab;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use encode::{decode_extended, encode_example, EncodedExample};
pub use filter::{filter_examples, FilterReport};
pub use io::{read_split_file, write_split_file, SplitRecord};
pub use pipeline::{prepare_corpus, Prepared, SplitSizes};
pub use raw::{convert_record, load_raw, parse_raw, RawRecord};
pub use split::{split_dataset, Split, Splits};
pub use vocab::{build_vocabulary, Vocabulary, EOS, PAD, RESERVED, SOS, UNK, VOCAB_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Easy,
    Medium,
    Hard,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Easy, Level::Medium, Level::Hard];

    pub fn parse(s: &str) -> Option<Level> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Some(Level::Easy),
            "medium" => Some(Level::Medium),
            "hard" => Some(Level::Hard),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Easy => "easy",
            Level::Medium => "medium",
            Level::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub title: String,
    /// Tokenised sentences; never empty.
    pub sentences: Vec<Vec<String>>,
}

impl Document {
    pub fn tokens(&self) -> impl Iterator<Item = &String> {
        self.sentences.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Answer span as a half-open token range `[start, end)` within one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerLocation {
    pub document: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SupportingFact {
    pub document: usize,
    pub sentence: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub documents: Vec<Document>,
    pub question: Vec<String>,
    pub answer_text: Vec<String>,
    /// `None` when the answer text could not be found in any document.
    pub answer_location: Option<AnswerLocation>,
    pub supporting_facts: BTreeSet<SupportingFact>,
    pub level: Level,
    /// Raw question type (`bridge`, `comparison`, ...).
    pub question_type: String,
}

impl QAExample {
    /// Candidate sentences in document order as `(document, sentence)` keys.
    pub fn sentence_keys(&self) -> Vec<SupportingFact> {
        self.documents
            .iter()
            .enumerate()
            .flat_map(|(d, doc)| (0..doc.sentences.len()).map(move |s| SupportingFact { document: d, sentence: s }))
            .collect()
    }

    pub fn num_tokens(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }

    /// Structural invariants of a filtered example.
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: String| Err(crate::Error::Invalid(format!("{}: {m}", self.id)));
        if self.supporting_facts.is_empty() {
            return bad("no supporting facts".into());
        }
        for doc in &self.documents {
            if doc.sentences.iter().any(Vec::is_empty) {
                return bad(format!("empty sentence in '{}'", doc.title));
            }
        }
        for sf in &self.supporting_facts {
            let ok = self.documents.get(sf.document).is_some_and(|d| sf.sentence < d.sentences.len());
            if !ok {
                return bad(format!("supporting fact {sf:?} out of range"));
            }
        }
        if let Some(loc) = self.answer_location {
            let ok = self.documents.get(loc.document).is_some_and(|d| loc.start < loc.end && loc.end <= d.len());
            if !ok {
                return bad(format!("answer location {loc:?} out of range"));
            }
        }
        Ok(())
    }
}
