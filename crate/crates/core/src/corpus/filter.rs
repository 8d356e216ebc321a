use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AnswerLocation, QAExample, SupportingFact};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub kept: usize,
    pub dropped_comparison_yes_no: usize,
    pub dropped_unlocatable_answer: usize,
    pub dropped_no_supporting_facts: usize,
    pub documents_removed: usize,
}

fn is_yes_no(answer: &[String]) -> bool {
    matches!(answer, [a] if a == "yes" || a == "no")
}

/// Drops comparison questions answered by yes/no, examples whose answer
/// could not be located, and examples without supporting facts. Surviving
/// examples keep only the answer document and supporting-fact documents.
pub fn filter_examples(examples: Vec<QAExample>) -> (Vec<QAExample>, FilterReport) {
    let mut report = FilterReport { input: examples.len(), ..Default::default() };
    let mut kept = Vec::with_capacity(examples.len());
    for ex in examples {
        if ex.question_type == "comparison" && is_yes_no(&ex.answer_text) {
            report.dropped_comparison_yes_no += 1;
            continue;
        }
        let Some(loc) = ex.answer_location else {
            report.dropped_unlocatable_answer += 1;
            continue;
        };
        if ex.supporting_facts.is_empty() {
            report.dropped_no_supporting_facts += 1;
            continue;
        }
        let retained: Vec<usize> = (0..ex.documents.len())
            .filter(|&d| d == loc.document || ex.supporting_facts.iter().any(|sf| sf.document == d))
            .collect();
        report.documents_removed += ex.documents.len() - retained.len();
        let new_index = |d: usize| retained.iter().position(|&r| r == d).expect("retained");
        let supporting_facts: BTreeSet<SupportingFact> = ex
            .supporting_facts
            .iter()
            .map(|sf| SupportingFact { document: new_index(sf.document), sentence: sf.sentence })
            .collect();
        let answer_location = Some(AnswerLocation { document: new_index(loc.document), ..loc });
        let documents = retained.iter().map(|&d| ex.documents[d].clone()).collect();
        kept.push(QAExample { documents, supporting_facts, answer_location, ..ex });
    }
    report.kept = kept.len();
    (kept, report)
}
