use serde::{Deserialize, Serialize};

use super::{
    build_vocabulary, encode_example, filter_examples, split_dataset, FilterReport, QAExample, SplitRecord, Vocabulary,
};
use crate::Result;

/// Encoded splits and the vocabulary built from the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub train: Vec<SplitRecord>,
    pub dev: Vec<SplitRecord>,
    pub test: Vec<SplitRecord>,
    pub vocab: Vocabulary,
    pub filter: FilterReport,
}

impl FilterReport {
    pub fn absorb(&mut self, other: &FilterReport) {
        self.input += other.input;
        self.kept += other.kept;
        self.dropped_comparison_yes_no += other.dropped_comparison_yes_no;
        self.dropped_unlocatable_answer += other.dropped_unlocatable_answer;
        self.dropped_no_supporting_facts += other.dropped_no_supporting_facts;
        self.documents_removed += other.documents_removed;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Prepared {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes { train: self.train.len(), dev: self.dev.len(), test: self.test.len() }
    }
}

/// Filters each raw file, pools the survivors, splits, builds the capped
/// vocabulary on the training split and encodes all three splits.
pub fn prepare_corpus(files: Vec<Vec<QAExample>>, seed: u64, vocab_cap: usize) -> Result<Prepared> {
    let mut pool = Vec::new();
    let mut filter = FilterReport::default();
    for file in files {
        let (kept, report) = filter_examples(file);
        filter.absorb(&report);
        pool.extend(kept);
    }
    let splits = split_dataset(pool, seed)?;
    let vocab = build_vocabulary(&splits.train, vocab_cap)?;
    let encode = |examples: Vec<QAExample>| -> Result<Vec<SplitRecord>> {
        examples
            .into_iter()
            .map(|example| {
                let encoded = encode_example(&example, &vocab)?;
                Ok(SplitRecord { example, encoded })
            })
            .collect()
    };
    Ok(Prepared { train: encode(splits.train)?, dev: encode(splits.dev)?, test: encode(splits.test)?, vocab, filter })
}
