//! Pointer-generator decoder and the decoding algorithms built on it.

use std::cmp::Ordering;
use std::rc::Rc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Mat, ParamId, ParamSet, Var};
use crate::corpus::{EOS, SOS, UNK};
use crate::nn::{Linear, Lstm, LstmState};
use crate::{Error, Result};

/// Default decoding cap.
pub const MAX_LEN: usize = 30;
pub const DEFAULT_BEAM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub lstm: Lstm,
    /// Maps encoder states to the decoder width so that scores are `s_t · k_i`.
    pub key_projection: Linear,
    /// Builds the initial decoder state from the final encoder states.
    pub init: Linear,
    /// `W_q` over `[c_t ⊕ s_t]`.
    pub output: Linear,
    /// `W_a` (context part of the generation gate).
    pub gate_context: Linear,
    /// `W_b` and the gate bias.
    pub gate_state: Linear,
    pub vocab_size: usize,
}

impl DecoderParams {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        rng: &mut R,
        word_dim: usize,
        encoder_width: usize,
        hidden: usize,
        vocab_size: usize,
    ) -> Self {
        Self {
            lstm: Lstm::new(params, rng, "decoder.lstm", word_dim, hidden),
            key_projection: Linear::new(params, rng, "decoder.key_projection", encoder_width, hidden, false),
            init: Linear::new(params, rng, "decoder.init", encoder_width, hidden, true),
            output: Linear::new(params, rng, "decoder.output", encoder_width + hidden, vocab_size, true),
            gate_context: Linear::new(params, rng, "decoder.gate_context", encoder_width, 1, false),
            gate_state: Linear::new(params, rng, "decoder.gate_state", hidden, 1, true),
            vocab_size,
        }
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden
    }

    /// `tanh(W [h_N^fwd ⊕ h_1^bwd] + b)` with a zero cell.
    pub fn initial_state<'g>(&self, g: &'g Graph<'g>, h: Var<'g>) -> LstmState<'g> {
        let (n, width) = h.shape();
        let half = width / 2;
        let last_fwd = h.row(n - 1).slice_cols(0, half);
        let first_bwd = h.row(0).slice_cols(half, width);
        let s0 = self.init.forward(g, g.concat_cols(&[last_fwd, first_bwd])).tanh();
        LstmState { h: s0, c: g.zeros(1, self.hidden()) }
    }
}

/// Per-example source information used at every step.
#[derive(Debug, Clone)]
pub struct SourceContext<'g> {
    /// Encoder states, `N x 2H`.
    pub states: Var<'g>,
    /// Projected attention keys, `N x D`.
    pub keys: Var<'g>,
    /// Extended-vocabulary id of every source position.
    pub extended_ids: Rc<Vec<usize>>,
    /// Fixed vocabulary plus this example's OOV list.
    pub extended_size: usize,
}

impl<'g> SourceContext<'g> {
    pub fn new(
        g: &'g Graph<'g>,
        p: &DecoderParams,
        states: Var<'g>,
        extended_ids: Rc<Vec<usize>>,
        extended_size: usize,
    ) -> Result<Self> {
        let n = states.shape().0;
        if n == 0 {
            return Err(Error::Empty("decoder source has no positions"));
        }
        if extended_ids.len() != n {
            return Err(Error::Shape(format!("{} extended ids for {n} source positions", extended_ids.len())));
        }
        if extended_size < p.vocab_size {
            return Err(Error::Shape(format!("extended size {extended_size} below vocabulary {}", p.vocab_size)));
        }
        if let Some(&bad) = extended_ids.iter().find(|&&id| id >= extended_size) {
            return Err(Error::Bounds(format!("source id {bad} outside extended vocabulary {extended_size}")));
        }
        let keys = p.key_projection.forward(g, states);
        Ok(Self { states, keys, extended_ids, extended_size })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderStepOutput<'g> {
    /// `1 x N`.
    pub attention: Var<'g>,
    /// `1 x 2H`.
    pub context: Var<'g>,
    /// `1 x V`.
    pub vocab_dist: Var<'g>,
    /// `1 x 1`.
    pub gen_prob: Var<'g>,
    /// Attention mass per extended id, `1 x extended_size`.
    pub copy_dist: Var<'g>,
    /// `1 x extended_size`.
    pub final_dist: Var<'g>,
    pub state: LstmState<'g>,
}

/// Previous tokens outside the fixed vocabulary are fed as UNK.
pub fn input_token(prev: usize, vocab_size: usize) -> usize {
    if prev < vocab_size {
        prev
    } else {
        UNK
    }
}

/// One decoder step. `gen_override` replaces the learned generation
/// probability with a constant.
pub fn decoder_step<'g>(
    g: &'g Graph<'g>,
    p: &DecoderParams,
    embedding: ParamId,
    state: LstmState<'g>,
    prev_token: usize,
    src: &SourceContext<'g>,
    gen_override: Option<f64>,
) -> Result<DecoderStepOutput<'g>> {
    if prev_token >= src.extended_size {
        return Err(Error::Bounds(format!(
            "previous token {prev_token} outside extended vocabulary {}",
            src.extended_size
        )));
    }
    let x = g.lookup(embedding, &[input_token(prev_token, p.vocab_size)]);
    let state = p.lstm.step(g, x, state);
    let s = state.h;
    let scores = s.matmul(src.keys.t());
    let attention = scores.softmax_rows();
    let context = attention.matmul(src.states);
    let vocab_dist = p.output.forward(g, g.concat_cols(&[context, s])).tanh().softmax_rows();
    let gen_prob = match gen_override {
        Some(v) => g.scalar(v),
        None => p.gate_context.forward(g, context).add(p.gate_state.forward(g, s)).sigmoid().one_minus(),
    };
    let extra = src.extended_size - p.vocab_size;
    let vocab_ext = if extra > 0 { g.concat_cols(&[vocab_dist, g.zeros(1, extra)]) } else { vocab_dist };
    let copy_dist = attention.scatter_cols(&src.extended_ids, src.extended_size);
    let final_dist = vocab_ext.mul(gen_prob).add(copy_dist.mul(gen_prob.one_minus()));
    Ok(DecoderStepOutput { attention, context, vocab_dist, gen_prob, copy_dist, final_dist, state })
}

/// Anything that yields a next-token distribution given a state and the
/// previous token. Decoding algorithms are written against this.
pub trait StepModel {
    type State: Clone;
    fn initial_state(&self) -> Self::State;
    /// Distribution over the extended vocabulary and the successor state.
    fn step(&self, state: &Self::State, prev_token: usize) -> Result<(Vec<f64>, Self::State)>;
}

/// A finished decode. `tokens` excludes SOS and EOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
}

#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    /// Generated ids, including a final EOS when the hypothesis finished.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: S,
}

impl<S> Hypothesis<S> {
    pub fn finished(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }

    /// Cumulative log-probability per generated token (EOS included).
    pub fn normalized_score(&self) -> f64 {
        self.log_prob / self.tokens.len().max(1) as f64
    }

    /// Surface tokens with EOS stripped.
    pub fn into_decoded(self) -> Decoded {
        let mut tokens = self.tokens;
        if tokens.last() == Some(&EOS) {
            tokens.pop();
        }
        Decoded { tokens, log_prob: self.log_prob }
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_decode<M: StepModel>(model: &M, max_len: usize) -> Result<Decoded> {
    let mut state = model.initial_state();
    let mut prev = SOS;
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..max_len {
        let (dist, next) = model.step(&state, prev)?;
        let w = argmax(&dist);
        log_prob += dist[w].ln();
        if w == EOS {
            break;
        }
        tokens.push(w);
        state = next;
        prev = w;
    }
    Ok(Decoded { tokens, log_prob })
}

pub fn sample_token<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> Result<usize> {
    let index = WeightedIndex::new(dist).map_err(|e| Error::Invalid(format!("cannot sample: {e}")))?;
    Ok(index.sample(rng))
}

/// Multinomial sampling; `log_prob` is the exact sum of the chosen tokens'
/// log-probabilities (EOS included when emitted).
pub fn sample_decode<M: StepModel, R: Rng + ?Sized>(model: &M, max_len: usize, rng: &mut R) -> Result<Decoded> {
    let mut state = model.initial_state();
    let mut prev = SOS;
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..max_len {
        let (dist, next) = model.step(&state, prev)?;
        let w = sample_token(&dist, rng)?;
        log_prob += dist[w].ln();
        if w == EOS {
            break;
        }
        tokens.push(w);
        state = next;
        prev = w;
    }
    Ok(Decoded { tokens, log_prob })
}

/// Beam search. At every step the `beam_width` best expansions of the live
/// hypotheses are kept (ranked by cumulative log-probability, earlier beam
/// and lower token id first on ties); those ending in EOS retire. The result
/// is the best length-normalized hypothesis among the retired ones and those
/// still live at `max_len`.
pub fn beam_search<M: StepModel>(model: &M, beam_width: usize, max_len: usize) -> Result<Hypothesis<M::State>> {
    if beam_width == 0 {
        return Err(Error::Invalid("beam width must be at least 1".into()));
    }
    let mut live = vec![Hypothesis { tokens: Vec::new(), log_prob: 0.0, state: model.initial_state() }];
    let mut finished: Vec<Hypothesis<M::State>> = Vec::new();
    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        let mut successors = Vec::with_capacity(live.len());
        for (b, hyp) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(SOS);
            let (dist, next) = model.step(&hyp.state, prev)?;
            for (w, &p) in dist.iter().enumerate() {
                if p > 0.0 {
                    candidates.push((hyp.log_prob + p.ln(), b, w));
                }
            }
            successors.push(next);
        }
        candidates
            .sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        candidates.truncate(beam_width);
        let mut next_live = Vec::with_capacity(candidates.len());
        for (log_prob, b, w) in candidates {
            let mut tokens = live[b].tokens.clone();
            tokens.push(w);
            let hyp = Hypothesis { tokens, log_prob, state: successors[b].clone() };
            if w == EOS {
                finished.push(hyp);
            } else {
                next_live.push(hyp);
            }
        }
        live = next_live;
    }
    finished.extend(live);
    let mut best: Option<Hypothesis<M::State>> = None;
    for hyp in finished {
        let better = match &best {
            None => true,
            Some(b) => hyp.normalized_score() > b.normalized_score(),
        };
        if better {
            best = Some(hyp);
        }
    }
    best.ok_or_else(|| Error::Invalid("beam search produced no hypothesis".into()))
}

/// Decoder with a fixed source, evaluated without gradient tracking.
pub struct InferenceDecoder<'a> {
    pub params: &'a ParamSet,
    pub decoder: &'a DecoderParams,
    pub embedding: ParamId,
    pub states: Rc<Mat>,
    pub extended_ids: Rc<Vec<usize>>,
    pub extended_size: usize,
    pub gen_override: Option<f64>,
}

/// Decoder hidden and cell state as plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceState {
    pub h: Rc<Mat>,
    pub c: Rc<Mat>,
}

impl InferenceDecoder<'_> {
    pub fn step_output(&self, state: &InferenceState, prev_token: usize) -> Result<StepValues> {
        let g = Graph::new(self.params);
        let src = SourceContext::new(
            &g,
            self.decoder,
            g.constant_rc(self.states.clone()),
            self.extended_ids.clone(),
            self.extended_size,
        )?;
        let st = LstmState { h: g.constant_rc(state.h.clone()), c: g.constant_rc(state.c.clone()) };
        let out = decoder_step(&g, self.decoder, self.embedding, st, prev_token, &src, self.gen_override)?;
        Ok(StepValues {
            attention: out.attention.value().row(0).to_vec(),
            vocab_dist: out.vocab_dist.value().row(0).to_vec(),
            gen_prob: out.gen_prob.item(),
            copy_dist: out.copy_dist.value().row(0).to_vec(),
            final_dist: out.final_dist.value().row(0).to_vec(),
            state: InferenceState { h: out.state.h.value(), c: out.state.c.value() },
        })
    }
}

/// Plain-value snapshot of one step.
#[derive(Debug, Clone)]
pub struct StepValues {
    pub attention: Vec<f64>,
    pub vocab_dist: Vec<f64>,
    pub gen_prob: f64,
    pub copy_dist: Vec<f64>,
    pub final_dist: Vec<f64>,
    pub state: InferenceState,
}

impl StepModel for InferenceDecoder<'_> {
    type State = InferenceState;

    fn initial_state(&self) -> InferenceState {
        let g = Graph::new(self.params);
        let s = self.decoder.initial_state(&g, g.constant_rc(self.states.clone()));
        InferenceState { h: s.h.value(), c: s.c.value() }
    }

    fn step(&self, state: &InferenceState, prev_token: usize) -> Result<(Vec<f64>, InferenceState)> {
        let out = self.step_output(state, prev_token)?;
        Ok((out.final_dist, out.state))
    }
}

/// Samples a sequence inside `g`, returning the ids (EOS stripped) and the
/// differentiable summed log-probability of the sampled path.
#[allow(clippy::too_many_arguments)]
pub fn sample_in_graph<'g, R: Rng + ?Sized>(
    g: &'g Graph<'g>,
    p: &DecoderParams,
    embedding: ParamId,
    src: &SourceContext<'g>,
    initial: LstmState<'g>,
    max_len: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Var<'g>)> {
    let mut state = initial;
    let mut prev = SOS;
    let mut tokens = Vec::new();
    let mut terms = Vec::new();
    for _ in 0..max_len {
        let out = decoder_step(g, p, embedding, state, prev, src, None)?;
        let dist = out.final_dist.value();
        let w = sample_token(dist.as_slice().expect("row-major"), rng)?;
        terms.push(out.final_dist.pick(0, w).clamp_log(crate::sf_head::BCE_EPS));
        if w == EOS {
            break;
        }
        tokens.push(w);
        state = out.state;
        prev = w;
    }
    let total = terms.into_iter().reduce(|a, b| a.add(b)).unwrap_or_else(|| g.scalar(0.0));
    Ok((tokens, total))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::nn::xavier_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    /// Distribution depends only on the generated prefix; the state is that prefix.
    pub struct Table {
        pub dists: HashMap<Vec<usize>, Vec<f64>>,
        pub default: Vec<f64>,
    }

    impl StepModel for Table {
        type State = Vec<usize>;
        fn initial_state(&self) -> Vec<usize> {
            Vec::new()
        }
        fn step(&self, state: &Vec<usize>, prev: usize) -> Result<(Vec<f64>, Vec<usize>)> {
            let mut prefix = state.clone();
            if prev != SOS {
                prefix.push(prev);
            }
            let d = self.dists.get(&prefix).cloned().unwrap_or_else(|| self.default.clone());
            Ok((d, prefix))
        }
    }

    pub struct Fixture {
        pub params: ParamSet,
        pub decoder: DecoderParams,
        pub embedding: ParamId,
        pub states: Rc<Mat>,
        pub extended_ids: Rc<Vec<usize>>,
        pub extended_size: usize,
    }

    impl Fixture {
        pub fn random(seed: u64) -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vocab = rng.gen_range(5..12);
            let oov = rng.gen_range(0..3);
            let n = rng.gen_range(1..7);
            let enc_half = rng.gen_range(1..4);
            let hidden = rng.gen_range(1..5);
            let word = rng.gen_range(1..4);
            let mut params = ParamSet::new();
            let embedding = params.add("embedding", xavier_normal(&mut rng, vocab, word));
            let decoder = DecoderParams::new(&mut params, &mut rng, word, 2 * enc_half, hidden, vocab);
            let states = Mat::from_shape_simple_fn((n, 2 * enc_half), || rng.gen_range(-2.0..2.0));
            let extended_size = vocab + oov;
            let extended_ids = (0..n).map(|_| rng.gen_range(4..extended_size)).collect();
            Self {
                params,
                decoder,
                embedding,
                states: Rc::new(states),
                extended_ids: Rc::new(extended_ids),
                extended_size,
            }
        }

        pub fn inference(&self, gen_override: Option<f64>) -> InferenceDecoder<'_> {
            InferenceDecoder {
                params: &self.params,
                decoder: &self.decoder,
                embedding: self.embedding,
                states: self.states.clone(),
                extended_ids: self.extended_ids.clone(),
                extended_size: self.extended_size,
                gen_override,
            }
        }
    }

    fn assert_distribution(d: &[f64]) {
        assert!(d.iter().all(|&x| x >= 0.0));
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn distributions_are_normalised() {
        for seed in 0..100 {
            let f = Fixture::random(seed);
            let dec = f.inference(None);
            let mut state = dec.initial_state();
            let mut prev = SOS;
            for t in 0..3 {
                let out = dec.step_output(&state, prev).unwrap();
                assert_distribution(&out.final_dist);
                assert_distribution(&out.attention);
                assert_distribution(&out.vocab_dist);
                assert!(out.gen_prob > 0.0 && out.gen_prob < 1.0);
                state = out.state;
                prev = f.extended_size - 1 - t % 2;
            }
        }
    }

    #[test]
    fn copy_distribution_matches_positional_sum() {
        for seed in 0..50 {
            let f = Fixture::random(seed);
            let out = f.inference(Some(0.0)).step_output(&f.inference(None).initial_state(), SOS).unwrap();
            for w in 0..f.extended_size {
                let mut expected = 0.0;
                for (i, &id) in f.extended_ids.iter().enumerate() {
                    if id == w {
                        expected += out.attention[i];
                    }
                }
                assert!((out.final_dist[w] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_position_attends_fully() {
        let f = (0..).map(Fixture::random).find(|f| f.states.nrows() == 1).unwrap();
        let g = Graph::new(&f.params);
        let src = SourceContext::new(
            &g,
            &f.decoder,
            g.constant_rc(f.states.clone()),
            f.extended_ids.clone(),
            f.extended_size,
        )
        .unwrap();
        let init = f.decoder.initial_state(&g, src.states);
        let out = decoder_step(&g, &f.decoder, f.embedding, init, SOS, &src, None).unwrap();
        assert_eq!(out.attention.value()[[0, 0]], 1.0);
        assert_eq!(out.context.value().row(0), f.states.row(0));
    }

    #[test]
    fn forced_generation_is_pure_vocab() {
        for seed in 0..20 {
            let f = Fixture::random(seed);
            let dec = f.inference(Some(1.0));
            let out = dec.step_output(&dec.initial_state(), SOS).unwrap();
            let v = f.decoder.vocab_size;
            for w in 0..f.extended_size {
                let expected = if w < v { out.vocab_dist[w] } else { 0.0 };
                assert_eq!(out.final_dist[w], expected);
            }
        }
    }

    #[test]
    fn extended_only_tokens_reachable_by_copy() {
        for seed in 0..40 {
            let f = Fixture::random(seed);
            let dec = f.inference(None);
            let out = dec.step_output(&dec.initial_state(), SOS).unwrap();
            for w in f.decoder.vocab_size..f.extended_size {
                let in_source = f.extended_ids.contains(&w);
                assert_eq!(out.final_dist[w] > 0.0, in_source);
            }
        }
    }

    #[test]
    fn empty_source_and_bad_tokens_are_errors() {
        let f = Fixture::random(1);
        let g = Graph::new(&f.params);
        let empty = g.constant(Mat::zeros((0, f.states.ncols())));
        assert!(SourceContext::new(&g, &f.decoder, empty, Rc::new(vec![]), f.extended_size).is_err());
        let dec = f.inference(None);
        assert!(dec.step(&dec.initial_state(), f.extended_size).is_err());
    }

    #[test]
    fn oov_previous_token_embeds_as_unk() {
        for seed in 0..10 {
            let f = Fixture::random(seed);
            if f.extended_size == f.decoder.vocab_size {
                continue;
            }
            let dec = f.inference(None);
            let s = dec.initial_state();
            let a = dec.step(&s, f.extended_size - 1).unwrap();
            let b = dec.step(&s, UNK).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }

    #[test]
    fn sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dist = [0.5, 0.3, 0.2];
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[sample_token(&dist, &mut rng).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(dist) {
            assert!((*c as f64 / 10_000.0 - p).abs() < 0.02);
        }
    }

    fn one_hot(len: usize, at: usize) -> Vec<f64> {
        let mut d = vec![0.0; len];
        d[at] = 1.0;
        d
    }

    #[test]
    fn immediate_eos_gives_empty_question() {
        let m = Table { dists: HashMap::new(), default: one_hot(6, EOS) };
        let out = greedy_decode(&m, 30).unwrap();
        assert!(out.tokens.is_empty());
        assert_eq!(out.log_prob, 0.0);
        assert!(beam_search(&m, 4, 30).unwrap().into_decoded().tokens.is_empty());
    }

    #[test]
    fn degenerate_sampling_equals_greedy() {
        let mut dists = HashMap::new();
        dists.insert(vec![], one_hot(6, 4));
        dists.insert(vec![4], one_hot(6, 5));
        let m = Table { dists, default: one_hot(6, EOS) };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_decode(&m, 30, &mut rng).unwrap(), greedy_decode(&m, 30).unwrap());
    }

    #[test]
    fn greedy_follows_per_step_argmax() {
        let f = Fixture::random(5);
        let dec = f.inference(None);
        let out = greedy_decode(&dec, 6).unwrap();
        let mut state = dec.initial_state();
        let mut prev = SOS;
        let mut expected = Vec::new();
        for _ in 0..6 {
            let (d, next) = dec.step(&state, prev).unwrap();
            let w = argmax(&d);
            if w == EOS {
                break;
            }
            expected.push(w);
            state = next;
            prev = w;
        }
        assert_eq!(out.tokens, expected);
    }

    #[test]
    fn sampling_is_seeded() {
        let f = Fixture::random(9);
        let dec = f.inference(None);
        let a = sample_decode(&dec, 10, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_decode(&dec, 10, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn width_one_beam_is_greedy() {
        for seed in 0..20 {
            let f = Fixture::random(100 + seed);
            let dec = f.inference(None);
            let g = greedy_decode(&dec, 8).unwrap();
            let b = beam_search(&dec, 1, 8).unwrap().into_decoded();
            assert_eq!(g.tokens, b.tokens);
            assert!((g.log_prob - b.log_prob).abs() < 1e-12);
        }
    }

    /// Tokens {EOS, 4, 5}, at most two steps.
    fn two_step_toy(seed: u64) -> Table {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random_dist = || {
            let mut d = vec![0.0; 6];
            for k in [EOS, 4, 5] {
                d[k] = rng.gen_range(0.05..1.0);
            }
            let z: f64 = d.iter().sum();
            d.iter_mut().for_each(|x| *x /= z);
            d
        };
        let mut dists = HashMap::new();
        dists.insert(vec![], random_dist());
        dists.insert(vec![4], random_dist());
        dists.insert(vec![5], random_dist());
        Table { dists, default: one_hot(6, EOS) }
    }

    #[test]
    fn wide_beam_finds_best_normalised_path() {
        for seed in 0..50 {
            let m = two_step_toy(seed);
            let root = &m.dists[&vec![]];
            // Enumerate every path of at most two steps; length counts EOS.
            let mut best = (f64::NEG_INFINITY, vec![]);
            let mut consider = |tokens: Vec<usize>, lp: f64| {
                let score = lp / tokens.len() as f64;
                if score > best.0 {
                    best = (score, tokens);
                }
            };
            consider(vec![EOS], root[EOS].ln());
            for a in [4usize, 5] {
                let d = &m.dists[&vec![a]];
                for b in [EOS, 4, 5] {
                    consider(vec![a, b], root[a].ln() + d[b].ln());
                }
            }
            let hyp = beam_search(&m, 9, 2).unwrap();
            assert_eq!(hyp.tokens, best.1, "seed {seed}");
            assert!((hyp.normalized_score() - best.0).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_takes_argmax_each_step_on_toy() {
        for seed in 0..20 {
            let m = two_step_toy(seed);
            let out = greedy_decode(&m, 2).unwrap();
            let root = &m.dists[&vec![]];
            let first = argmax(root);
            if first == EOS {
                assert!(out.tokens.is_empty());
            } else {
                assert_eq!(out.tokens[0], first);
                let second = argmax(&m.dists[&vec![first]]);
                let mut expected = vec![first];
                if second != EOS {
                    expected.push(second);
                }
                assert_eq!(out.tokens, expected);
            }
        }
    }

    #[test]
    fn beam_widths_from_sweep_are_valid() {
        let f = Fixture::random(21);
        let dec = f.inference(None);
        for width in [3, 4, 5, 7, 10] {
            let hyp = beam_search(&dec, width, 6).unwrap();
            assert!(!hyp.tokens.is_empty() && hyp.tokens.len() <= 6);
            assert!(hyp.tokens.iter().all(|&t| t < f.extended_size && t != SOS));
            assert!(hyp.log_prob <= 0.0);
        }
        assert!(beam_search(&dec, 0, 6).is_err());
    }

    #[test]
    fn in_graph_sample_matches_inference_sample() {
        let f = Fixture::random(33);
        let g = Graph::new(&f.params);
        let src = SourceContext::new(
            &g,
            &f.decoder,
            g.constant_rc(f.states.clone()),
            f.extended_ids.clone(),
            f.extended_size,
        )
        .unwrap();
        let init = f.decoder.initial_state(&g, src.states);
        let (tokens, r) =
            sample_in_graph(&g, &f.decoder, f.embedding, &src, init, 8, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let reference = sample_decode(&f.inference(None), 8, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(tokens, reference.tokens);
        assert!((r.item() - reference.log_prob).abs() < 1e-9);
    }
}
