//! Sequence and set overlap scores on token sequences, in `[0, 1]`.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Harmonic mean of precision and recall, zero when either is zero.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// LCS F-measure with equal weight on precision and recall.
pub fn rouge_l<T: PartialEq>(hypothesis: &[T], reference: &[T]) -> f64 {
    let lcs = lcs_len(hypothesis, reference);
    if lcs == 0 {
        return 0.0;
    }
    f1(lcs as f64 / hypothesis.len() as f64, lcs as f64 / reference.len() as f64)
}

pub fn ngram_counts<T: Hash + Eq + Clone>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the hypothesis n-gram count.
pub fn clipped_matches<T: Hash + Eq + Clone>(hypothesis: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let hyp = ngram_counts(hypothesis, n);
    let refs = ngram_counts(reference, n);
    let matches = hyp.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
    (matches, hypothesis.len().saturating_sub(n - 1))
}

/// `1` when the hypothesis is longer than the reference, else `e^{1 - r/c}`.
pub fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// Sentence BLEU-4 with add-one smoothing on the 2- to 4-gram precisions.
pub fn sentence_bleu<T: Hash + Eq + Clone>(hypothesis: &[T], reference: &[T]) -> f64 {
    if hypothesis.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (m, c) = clipped_matches(hypothesis, reference, n);
        let p = if n == 1 { m as f64 / c as f64 } else { (m as f64 + 1.0) / (c as f64 + 1.0) };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln() / 4.0;
    }
    brevity_penalty(hypothesis.len(), reference.len()) * log_sum.exp()
}

/// F1 between two sets; two empty sets agree perfectly.
pub fn set_f1<T: Ord>(predicted: &BTreeSet<T>, gold: &BTreeSet<T>) -> f64 {
    if predicted.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let common = predicted.intersection(gold).count() as f64;
    if common == 0.0 {
        return 0.0;
    }
    f1(common / predicted.len() as f64, common / gold.len() as f64)
}
