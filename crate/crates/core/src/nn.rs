//! Layers and optimisation shared by the generator and the reward network.

use ndarray::Zip;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Mat, ParamGrads, ParamId, ParamSet, Var};

/// Gaussian Xavier (Glorot) initialisation: `N(0, 2 / (fan_in + fan_out))`.
pub fn xavier_normal<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Mat {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    Mat::from_shape_simple_fn((fan_in, fan_out), || normal.sample(rng))
}

/// Affine map `x W + b` on row vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        rng: &mut R,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), xavier_normal(rng, input, output));
        let bias = bias.then(|| params.add(format!("{name}.bias"), Mat::zeros((1, output))));
        Self { weight, bias }
    }

    /// Zero-initialised layer.
    pub fn zeros(params: &mut ParamSet, name: &str, input: usize, output: usize, bias: bool) -> Self {
        let weight = params.add(format!("{name}.weight"), Mat::zeros((input, output)));
        let bias = bias.then(|| params.add(format!("{name}.bias"), Mat::zeros((1, output))));
        Self { weight, bias }
    }

    pub fn forward<'g>(&self, g: &'g Graph<'g>, x: Var<'g>) -> Var<'g> {
        let y = x.matmul(g.param(self.weight));
        match self.bias {
            Some(b) => y.add(g.param(b)),
            None => y,
        }
    }

    pub fn input_dim(&self, params: &ParamSet) -> usize {
        params.get(self.weight).nrows()
    }

    pub fn output_dim(&self, params: &ParamSet) -> usize {
        params.get(self.weight).ncols()
    }
}

/// Single-direction LSTM with gate order (input, forget, cell, output).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

/// Hidden and cell state, each `1 x hidden`.
#[derive(Debug, Clone, Copy)]
pub struct LstmState<'g> {
    pub h: Var<'g>,
    pub c: Var<'g>,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, rng: &mut R, name: &str, input: usize, hidden: usize) -> Self {
        Self {
            input_weight: params.add(format!("{name}.w_input"), xavier_normal(rng, input, 4 * hidden)),
            hidden_weight: params.add(format!("{name}.w_hidden"), xavier_normal(rng, hidden, 4 * hidden)),
            bias: params.add(format!("{name}.bias"), Mat::zeros((1, 4 * hidden))),
            hidden,
        }
    }

    pub fn input_dim(&self, params: &ParamSet) -> usize {
        params.get(self.input_weight).nrows()
    }

    pub fn zero_state<'g>(&self, g: &'g Graph<'g>) -> LstmState<'g> {
        LstmState { h: g.zeros(1, self.hidden), c: g.zeros(1, self.hidden) }
    }

    /// One recurrence given the already-projected input row `x W_x + b`.
    fn cell<'g>(&self, g: &'g Graph<'g>, projected: Var<'g>, state: LstmState<'g>) -> LstmState<'g> {
        let hsz = self.hidden;
        let gates = projected.add(state.h.matmul(g.param(self.hidden_weight)));
        let i = gates.slice_cols(0, hsz).sigmoid();
        let f = gates.slice_cols(hsz, 2 * hsz).sigmoid();
        let cand = gates.slice_cols(2 * hsz, 3 * hsz).tanh();
        let o = gates.slice_cols(3 * hsz, 4 * hsz).sigmoid();
        let c = f.mul(state.c).add(i.mul(cand));
        let h = o.mul(c.tanh());
        LstmState { h, c }
    }

    /// Single step on a `1 x input` row.
    pub fn step<'g>(&self, g: &'g Graph<'g>, x: Var<'g>, state: LstmState<'g>) -> LstmState<'g> {
        let projected = x.matmul(g.param(self.input_weight)).add(g.param(self.bias));
        self.cell(g, projected, state)
    }

    /// Runs over the rows of `xs` (left to right, or right to left when
    /// `reverse`). Output row `t` is always the state at position `t`.
    pub fn sequence<'g>(&self, g: &'g Graph<'g>, xs: Var<'g>, reverse: bool) -> (Var<'g>, LstmState<'g>) {
        let n = xs.shape().0;
        let projected = xs.matmul(g.param(self.input_weight)).add(g.param(self.bias));
        let mut state = self.zero_state(g);
        let mut outputs: Vec<Option<Var<'g>>> = vec![None; n];
        let order: Box<dyn Iterator<Item = usize>> = if reverse { Box::new((0..n).rev()) } else { Box::new(0..n) };
        for t in order {
            state = self.cell(g, projected.row(t), state);
            outputs[t] = Some(state.h);
        }
        let outputs: Vec<Var<'g>> = outputs.into_iter().map(|o| o.expect("every position visited")).collect();
        (g.concat_rows(&outputs), state)
    }
}

/// Bidirectional LSTM; output rows are `forward ⊕ backward`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, rng: &mut R, name: &str, input: usize, hidden: usize) -> Self {
        Self {
            forward: Lstm::new(params, rng, &format!("{name}.fwd"), input, hidden),
            backward: Lstm::new(params, rng, &format!("{name}.bwd"), input, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn input_dim(&self, params: &ParamSet) -> usize {
        self.forward.input_dim(params)
    }

    pub fn forward<'g>(&self, g: &'g Graph<'g>, xs: Var<'g>) -> Var<'g> {
        let (f, _) = self.forward.sequence(g, xs, false);
        let (b, _) = self.backward.sequence(g, xs, true);
        g.concat_cols(&[f, b])
    }
}

/// Inverted dropout with its own random stream. A disabled instance is the
/// identity (evaluation mode).
#[derive(Debug, Clone)]
pub struct Dropout {
    p: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn off() -> Self {
        Self { p: 0.0, rng: None }
    }

    pub fn new(p: f64, seed: u64) -> Self {
        Self { p, rng: (p > 0.0).then(|| ChaCha8Rng::seed_from_u64(seed)) }
    }

    pub fn is_active(&self) -> bool {
        self.rng.is_some()
    }

    pub fn apply<'g>(&mut self, g: &'g Graph<'g>, x: Var<'g>) -> Var<'g> {
        let Some(rng) = self.rng.as_mut() else { return x };
        let keep = 1.0 - self.p;
        let (r, c) = x.shape();
        let mask = Mat::from_shape_simple_fn((r, c), || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
        x.mul(g.constant(mask))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Mat>,
    second: Vec<Mat>,
}

impl Adam {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Mat> = params.ids().map(|id| Mat::zeros(params.get(id).dim())).collect();
        Self { config, step: 0, first: zeros.clone(), second: zeros }
    }

    pub fn matches(&self, params: &ParamSet) -> bool {
        self.first.len() == params.len() && params.ids().all(|id| self.first[id.0].dim() == params.get(id).dim())
    }

    /// One bias-corrected update. Parameters without a gradient still decay
    /// their moments, as if the gradient were zero.
    pub fn update(&mut self, params: &mut ParamSet, grads: &ParamGrads, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for id in params.ids().collect::<Vec<_>>() {
            let g = grads.dense(params, id);
            let m = &mut self.first[id.0];
            let v = &mut self.second[id.0];
            Zip::from(&mut *m).and(&g).for_each(|m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
            Zip::from(&mut *v).and(&g).for_each(|v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
            Zip::from(params.get_mut(id)).and(&*m).and(&*v).for_each(|p, &m, &v| {
                *p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            });
        }
    }
}
