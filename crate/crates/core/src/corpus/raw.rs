use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnswerLocation, Document, Level, QAExample, SupportingFact};
use crate::text::tokenize;
use crate::{Error, Result};

/// One record of the HotPotQA distribution format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(rename = "_id")]
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(rename = "type")]
    pub question_type: String,
    pub level: String,
    pub supporting_facts: Vec<(String, usize)>,
    pub context: Vec<(String, Vec<String>)>,
}

pub fn load_raw(path: &Path) -> Result<Vec<QAExample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_raw(&text)
}

pub fn parse_raw(text: &str) -> Result<Vec<QAExample>> {
    let values: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| Error::Parse { index: 0, message: format!("not a JSON array: {e}") })?;
    values
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            let record: RawRecord =
                serde_json::from_value(value).map_err(|e| Error::Parse { index, message: e.to_string() })?;
            convert_record(record, index)
        })
        .collect()
}

fn find_span(haystack: &[&String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    (0..=haystack.len() - needle.len())
        .find(|&s| haystack[s..s + needle.len()].iter().zip(needle).all(|(a, b)| *a == b))
}

/// Maps a raw record onto [`QAExample`].
///
/// Empty sentences are dropped (supporting-fact indices are remapped) and
/// supporting facts that point at missing titles or sentences are discarded.
/// The answer is located at its first exact token match, searching
/// documents that hold supporting facts before the rest.
pub fn convert_record(record: RawRecord, index: usize) -> Result<QAExample> {
    let level = Level::parse(&record.level)
        .ok_or_else(|| Error::Parse { index, message: format!("unknown level '{}'", record.level) })?;

    let mut documents = Vec::with_capacity(record.context.len());
    let mut remaps: Vec<Vec<Option<usize>>> = Vec::with_capacity(record.context.len());
    for (title, sentences) in &record.context {
        let mut kept = Vec::new();
        let mut remap = Vec::with_capacity(sentences.len());
        for sentence in sentences {
            let tokens = tokenize(sentence);
            if tokens.is_empty() {
                remap.push(None);
            } else {
                remap.push(Some(kept.len()));
                kept.push(tokens);
            }
        }
        documents.push(Document { title: title.clone(), sentences: kept });
        remaps.push(remap);
    }

    let supporting_facts = record
        .supporting_facts
        .iter()
        .filter_map(|(title, sent)| {
            let d = record.context.iter().position(|(t, _)| t == title)?;
            let s = (*remaps[d].get(*sent)?)?;
            Some(SupportingFact { document: d, sentence: s })
        })
        .collect::<std::collections::BTreeSet<_>>();

    let answer_text = tokenize(&record.answer);
    let sf_docs: Vec<usize> = {
        let mut v: Vec<usize> = supporting_facts.iter().map(|sf| sf.document).collect();
        v.dedup();
        v
    };
    let search_order = sf_docs.iter().copied().chain((0..documents.len()).filter(|d| !sf_docs.contains(d)));
    let mut answer_location = None;
    for d in search_order {
        let tokens: Vec<&String> = documents[d].tokens().collect();
        if let Some(start) = find_span(&tokens, &answer_text) {
            answer_location = Some(AnswerLocation { document: d, start, end: start + answer_text.len() });
            break;
        }
    }

    Ok(QAExample {
        id: record.id,
        documents,
        question: tokenize(&record.question),
        answer_text,
        answer_location,
        supporting_facts,
        level,
        question_type: record.question_type,
    })
}
