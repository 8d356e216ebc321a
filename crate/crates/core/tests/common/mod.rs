#![allow(dead_code)]

use mhqg_core::autograd::{Graph, Mat, ParamSet, Var};
use mhqg_core::corpus::synthetic::{generate_examples, SyntheticConfig};
use mhqg_core::corpus::{
    build_vocabulary, encode_example, filter_examples, EncodedExample, SplitRecord, SupportingFact, Vocabulary, EOS,
};
use mhqg_core::model::{ModelConfig, QgModel};

pub const TOY_VOCAB: usize = 12;

/// Six source tokens in two sentences, one source OOV (extended id 12) and
/// a target mixing copied, generated and OOV tokens.
pub fn toy_example() -> EncodedExample {
    EncodedExample {
        id: "toy".into(),
        word_ids: vec![5, 6, 7, 8, 1, 9],
        answer_tags: vec![0, 1, 0, 0, 0, 0],
        sentence_bounds: vec![(0, 3), (3, 6)],
        sentence_keys: vec![SupportingFact { document: 0, sentence: 0 }, SupportingFact { document: 1, sentence: 0 }],
        sf_labels: vec![1, 0],
        extended_ids: vec![5, 6, 7, 8, 12, 9],
        oov_list: vec!["zeta".into()],
        target_ids: vec![6, 12, 10, EOS],
    }
}

pub fn toy_model(seed: u64) -> QgModel {
    let cfg = ModelConfig { word_dim: 4, tag_dim: 2, hidden: 3, decoder_hidden: 4, max_len: 5, gold_sf_tags: false };
    QgModel::new(cfg, TOY_VOCAB, seed)
}

pub struct TensorCheck {
    pub name: String,
    pub relative_error: f64,
    pub analytic_norm: f64,
}

/// Compares backprop gradients with central differences for every entry of
/// every parameter tensor. The error per tensor is
/// `|a - n| / max(|a|, |n|, floor)` in the Euclidean norm.
pub fn gradient_check<F>(params: &ParamSet, loss: F) -> Vec<TensorCheck>
where
    F: for<'g> Fn(&'g Graph<'g>) -> Var<'g>,
{
    let analytic = {
        let g = Graph::new(params);
        let l = loss(&g);
        g.backward(l).into_params()
    };
    let eps = 1e-6;
    let mut work = params.clone();
    let mut out = Vec::new();
    for id in params.ids() {
        let a = analytic.dense(params, id);
        let mut numeric = Mat::zeros(a.dim());
        for idx in 0..a.len() {
            let (r, c) = (idx / a.ncols(), idx % a.ncols());
            let orig = work.get(id)[[r, c]];
            work.get_mut(id)[[r, c]] = orig + eps;
            let plus = eval(&work, &loss);
            work.get_mut(id)[[r, c]] = orig - eps;
            let minus = eval(&work, &loss);
            work.get_mut(id)[[r, c]] = orig;
            numeric[[r, c]] = (plus - minus) / (2.0 * eps);
        }
        let diff = (&a - &numeric).mapv(|x| x * x).sum().sqrt();
        let an = a.mapv(|x| x * x).sum().sqrt();
        let nn = numeric.mapv(|x| x * x).sum().sqrt();
        out.push(TensorCheck {
            name: params.name(id).to_string(),
            relative_error: diff / an.max(nn).max(1e-7),
            analytic_norm: an,
        });
    }
    out
}

fn eval<F>(params: &ParamSet, loss: &F) -> f64
where
    F: for<'g> Fn(&'g Graph<'g>) -> Var<'g>,
{
    let g = Graph::new(params);
    loss(&g).item()
}

pub fn worst(checks: &[TensorCheck]) -> &TensorCheck {
    checks.iter().max_by(|a, b| a.relative_error.total_cmp(&b.relative_error)).expect("at least one tensor")
}

/// Filtered synthetic examples, a vocabulary over them and their encodings.
pub fn synthetic_records(n: usize, seed: u64) -> (Vocabulary, Vec<SplitRecord>) {
    let (examples, _) =
        filter_examples(generate_examples(&SyntheticConfig { examples: n, seed, ..Default::default() }));
    let vocab = build_vocabulary(&examples, 1000).expect("vocabulary");
    let records = examples
        .into_iter()
        .map(|e| {
            let encoded = encode_example(&e, &vocab).expect("encodes");
            SplitRecord { example: e, encoded }
        })
        .collect();
    (vocab, records)
}

/// A generator small enough for multi-step tests.
pub fn tiny_config() -> mhqg_core::trainer::TrainingConfig {
    mhqg_core::trainer::TrainingConfig {
        word_dim: 8,
        hidden: 6,
        decoder_hidden: 6,
        max_len: 12,
        batch_size: 4,
        phase1_steps: 6,
        phase2_steps: 6,
        phase2_lr: 1e-3,
        eval_every: 3,
        checkpoint_every: 3,
        warmup_steps: 2,
        history_size: 10,
        dev_eval_examples: 3,
        reward_word_dim: 8,
        reward_char_dim: 3,
        reward_char_filters: 4,
        reward_char_width: 3,
        reward_max_word_chars: 8,
        reward_hidden: 5,
        reward_epochs: 2,
        reward_batch_size: 4,
        reward_abort_below_f1: 0.0,
        ..Default::default()
    }
}
