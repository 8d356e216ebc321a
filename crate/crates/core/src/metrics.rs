//! Corpus-level evaluation: BLEU-1..4, ROUGE-L, supporting-fact coverage,
//! an external METEOR adapter and the paired bootstrap test.

use std::collections::BTreeSet;
use std::hash::Hash;
use std::path::Path;
use std::process::Command;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedExample, SupportingFact, Vocabulary};
use crate::reward::{brevity_penalty, clipped_matches, mer_f1, predicted_facts, rouge_l, sentence_bleu, RewardModel};
use crate::{seeds, Error, Result};

pub const BOOTSTRAP_ITERATIONS: usize = 10_000;

fn check_aligned(h: usize, r: usize) -> Result<()> {
    if h == 0 {
        return Err(Error::Empty("corpus"));
    }
    if h != r {
        return Err(Error::Shape(format!("{h} hypotheses for {r} references")));
    }
    Ok(())
}

/// Corpus BLEU-1..`max_n` on a 0-100 scale: clipped n-gram counts pooled
/// over the corpus, uniform geometric mean, one brevity penalty.
pub fn corpus_bleu<T: Hash + Eq + Clone>(
    hypotheses: &[Vec<T>],
    references: &[Vec<T>],
    max_n: usize,
) -> Result<Vec<f64>> {
    check_aligned(hypotheses.len(), references.len())?;
    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hypotheses.iter().zip(references) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let (m, c) = clipped_matches(h, r, n);
            matches[n - 1] += m;
            totals[n - 1] += c;
        }
    }
    let bp = brevity_penalty(hyp_len, ref_len);
    let mut scores = Vec::with_capacity(max_n);
    let mut log_sum = 0.0;
    let mut zero = false;
    for n in 1..=max_n {
        if matches[n - 1] == 0 {
            zero = true;
        } else {
            log_sum += (matches[n - 1] as f64 / totals[n - 1] as f64).ln();
        }
        scores.push(if zero { 0.0 } else { 100.0 * bp * (log_sum / n as f64).exp() });
    }
    Ok(scores)
}

/// Mean sentence-level ROUGE-L on a 0-100 scale, with the per-example values.
pub fn corpus_rouge_l<T: PartialEq>(hypotheses: &[Vec<T>], references: &[Vec<T>]) -> Result<(f64, Vec<f64>)> {
    check_aligned(hypotheses.len(), references.len())?;
    let per: Vec<f64> = hypotheses.iter().zip(references).map(|(h, r)| 100.0 * rouge_l(h, r)).collect();
    Ok((mean(&per), per))
}

/// Smoothed sentence BLEU-4 per example, 0-100.
pub fn sentence_bleu_scores<T: Hash + Eq + Clone>(hypotheses: &[Vec<T>], references: &[Vec<T>]) -> Result<Vec<f64>> {
    check_aligned(hypotheses.len(), references.len())?;
    Ok(hypotheses.iter().zip(references).map(|(h, r)| 100.0 * sentence_bleu(h, r)).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean F1 (0-100) between the reward network's supporting facts for each
/// generated question and the gold ones. An empty question scores zero.
pub fn sf_coverage(
    questions: &[Vec<String>],
    examples: &[EncodedExample],
    reward_model: Option<&RewardModel>,
    vocab: &Vocabulary,
) -> Result<(f64, Vec<f64>)> {
    let model = reward_model.ok_or_else(|| Error::Invalid("supporting-fact coverage needs a reward model".into()))?;
    check_aligned(questions.len(), examples.len())?;
    let mut per = Vec::with_capacity(questions.len());
    for (q, ex) in questions.iter().zip(examples) {
        let gold: BTreeSet<SupportingFact> = ex.gold_facts().into_iter().collect();
        let f = if q.is_empty() {
            0.0
        } else {
            let pred = model.predict_sf(vocab, q, ex)?;
            mer_f1(&predicted_facts(&pred.labels, &ex.sentence_keys), &gold)
        };
        per.push(100.0 * f);
    }
    Ok((mean(&per), per))
}

/// One-sided paired bootstrap: the share of resamples in which system A does
/// not beat system B, counting exact ties as one half.
pub fn bootstrap_significance(a: &[f64], b: &[f64], iterations: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} scores against {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Empty("score lists"));
    }
    if iterations == 0 {
        return Err(Error::Invalid("bootstrap needs at least one iteration".into()));
    }
    let n = a.len();
    let mut rng = seeds::rng(seed, &[seeds::phase::BOOTSTRAP]);
    let mut not_better = 0.0;
    for _ in 0..iterations {
        let (mut sa, mut sb) = (0.0, 0.0);
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            sa += a[i];
            sb += b[i];
        }
        if sa < sb {
            not_better += 1.0;
        } else if sa == sb {
            not_better += 0.5;
        }
    }
    Ok(not_better / iterations as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum MeteorScore {
    Available { score: f64 },
    Unavailable { reason: String },
}

/// Runs an external METEOR scorer (a `.jar` through `java -jar`, otherwise
/// the executable itself) on one-sentence-per-line files and parses its
/// `Final score:` line. A missing tool is reported, not an error.
pub fn meteor_adapter(hypotheses: &[String], references: &[String], tool: Option<&Path>) -> Result<MeteorScore> {
    check_aligned(hypotheses.len(), references.len())?;
    let Some(tool) = tool else {
        return Ok(MeteorScore::Unavailable { reason: "no METEOR tool configured".into() });
    };
    if !tool.exists() {
        return Ok(MeteorScore::Unavailable { reason: format!("{} not found", tool.display()) });
    }
    let dir = std::env::temp_dir().join(format!("mhqg-meteor-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let hyp = dir.join("hyp.txt");
    let refs = dir.join("ref.txt");
    std::fs::write(&hyp, hypotheses.join("\n") + "\n").map_err(|e| Error::io(&hyp, e))?;
    std::fs::write(&refs, references.join("\n") + "\n").map_err(|e| Error::io(&refs, e))?;
    let mut cmd = if tool.extension().is_some_and(|e| e == "jar") {
        let mut c = Command::new("java");
        c.arg("-Xmx2G").arg("-jar").arg(tool);
        c.args([&hyp, &refs]).args(["-l", "en", "-norm"]);
        c
    } else {
        let mut c = Command::new(tool);
        c.args([&hyp, &refs]);
        c
    };
    let output = cmd.output();
    let _ = std::fs::remove_dir_all(&dir);
    let output = match output {
        Ok(o) => o,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(MeteorScore::Unavailable { reason: format!("cannot launch METEOR: {e}") })
        }
        Err(e) => return Err(Error::Tool { message: format!("failed to run METEOR: {e}"), output: String::new() }),
    };
    let text = format!("{}{}", String::from_utf8_lossy(&output.stdout), String::from_utf8_lossy(&output.stderr));
    if !output.status.success() {
        return Err(Error::Tool { message: format!("METEOR exited with {}", output.status), output: text });
    }
    parse_meteor_output(&text)
        .map(|s| MeteorScore::Available { score: 100.0 * s })
        .ok_or(Error::Tool { message: "no 'Final score:' line in METEOR output".into(), output: text })
}

pub fn parse_meteor_output(text: &str) -> Option<f64> {
    text.lines().rev().find_map(|l| l.trim().strip_prefix("Final score:").and_then(|v| v.trim().parse().ok()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerExample {
    pub ids: Vec<String>,
    pub bleu4: Vec<f64>,
    pub rouge_l: Vec<f64>,
    pub sf_coverage: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub examples: usize,
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub sf_coverage: Option<f64>,
    pub meteor: MeteorScore,
    pub per_example: PerExample,
    pub warnings: Vec<String>,
    pub seed: u64,
    pub config_hash: String,
}

pub struct EvaluationInput<'a> {
    pub ids: Vec<String>,
    pub hypotheses: Vec<Vec<String>>,
    pub references: Vec<Vec<String>>,
    pub examples: &'a [EncodedExample],
    pub reward_model: Option<&'a RewardModel>,
    pub vocab: &'a Vocabulary,
    pub meteor_tool: Option<&'a Path>,
    pub seed: u64,
    pub config_hash: String,
}

pub fn evaluate(input: EvaluationInput<'_>) -> Result<EvaluationReport> {
    let bleu = corpus_bleu(&input.hypotheses, &input.references, 4)?;
    let (rouge, rouge_per) = corpus_rouge_l(&input.hypotheses, &input.references)?;
    let bleu_per = sentence_bleu_scores(&input.hypotheses, &input.references)?;
    let mut warnings = Vec::new();
    let (sf, sf_per) = match input.reward_model {
        Some(m) => {
            let (s, p) = sf_coverage(&input.hypotheses, input.examples, Some(m), input.vocab)?;
            (Some(s), Some(p))
        }
        None => {
            warnings.push("no reward checkpoint supplied; supporting-fact coverage omitted".into());
            (None, None)
        }
    };
    let join = |v: &[Vec<String>]| v.iter().map(|t| t.join(" ")).collect::<Vec<_>>();
    let meteor = meteor_adapter(&join(&input.hypotheses), &join(&input.references), input.meteor_tool)?;
    if let MeteorScore::Unavailable { reason } = &meteor {
        warnings.push(format!("METEOR unavailable: {reason}"));
    }
    Ok(EvaluationReport {
        examples: input.hypotheses.len(),
        bleu: [bleu[0], bleu[1], bleu[2], bleu[3]],
        rouge_l: rouge,
        sf_coverage: sf,
        meteor,
        per_example: PerExample { ids: input.ids, bleu4: bleu_per, rouge_l: rouge_per, sf_coverage: sf_per },
        warnings,
        seed: input.seed,
        config_hash: input.config_hash,
    })
}
