//! Answer-aware supporting-fact classifier over first-layer encoder states.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamSet, Var};
use crate::encoder::check_bounds;
use crate::nn::Linear;
use crate::{Error, Result};

/// Clamp used for probabilities inside the cross-entropy.
pub const BCE_EPS: f64 = 1e-12;
pub const SF_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfHead {
    pub classifier: Linear,
}

impl SfHead {
    /// `state_width` is the encoder state width `2H`.
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, rng: &mut R, state_width: usize) -> Self {
        Self { classifier: Linear::new(params, rng, "sf_head.classifier", 2 * state_width, 1, true) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePrediction {
    pub probabilities: Vec<f64>,
    pub labels: Vec<bool>,
}

impl SentencePrediction {
    pub fn from_probabilities(probabilities: Vec<f64>, threshold: f64) -> Self {
        let labels = harden(&probabilities, threshold);
        Self { probabilities, labels }
    }
}

/// `p >= threshold` counts as supporting.
pub fn harden(probabilities: &[f64], threshold: f64) -> Vec<bool> {
    probabilities.iter().map(|&p| p >= threshold).collect()
}

/// `h[start] ⊕ h[end - 1]` per sentence, `K x 4H`.
pub fn sentence_representations<'g>(g: &'g Graph<'g>, states: Var<'g>, bounds: &[(usize, usize)]) -> Result<Var<'g>> {
    check_bounds(bounds, states.shape().0)?;
    let firsts: Vec<usize> = bounds.iter().map(|&(s, _)| s).collect();
    let lasts: Vec<usize> = bounds.iter().map(|&(_, e)| e - 1).collect();
    Ok(g.concat_cols(&[states.rows(&firsts), states.rows(&lasts)]))
}

/// Sigmoid probability per sentence, `K x 1`.
pub fn predict_supporting_facts<'g>(g: &'g Graph<'g>, head: &SfHead, reprs: Var<'g>) -> Var<'g> {
    head.classifier.forward(g, reprs).sigmoid()
}

/// Binary cross-entropy summed over the sentences of one example.
pub fn supporting_facts_loss<'g>(probs: Var<'g>, gold: &[u8]) -> Result<Var<'g>> {
    let k = probs.shape().0;
    if k != gold.len() {
        return Err(Error::Shape(format!("{k} predictions for {} labels", gold.len())));
    }
    let g = probs.graph();
    let labels = g.constant(crate::autograd::Mat::from_shape_fn((k, 1), |(i, _)| f64::from(gold[i])));
    let pos = labels.mul(probs.clamp_log(BCE_EPS));
    let neg = labels.one_minus().mul(probs.one_minus().clamp_log(BCE_EPS));
    Ok(pos.add(neg).sum().scale(-1.0))
}
