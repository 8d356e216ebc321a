//! Two-layer supporting-fact-aware document encoder.
//!
//! Layer one reads word embeddings with answer-tag embeddings. Its states
//! feed the supporting-fact head, whose hard per-sentence decisions are
//! broadcast to every word of the sentence as a tag embedding. Layer two
//! reads `[z_t, u_t, a_t, s_t]` at each position.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Mat, ParamId, ParamSet, Var};
use crate::corpus::Vocabulary;
use crate::nn::{xavier_normal, BiLstm, Dropout};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub word_embedding: ParamId,
    /// Two rows: outside / inside the answer span.
    pub answer_tag_embedding: ParamId,
    /// Two rows: predicted non-supporting / supporting sentence.
    pub sf_tag_embedding: ParamId,
    pub layer1: BiLstm,
    pub layer2: BiLstm,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderDims {
    pub vocab: usize,
    pub word: usize,
    pub answer_tag: usize,
    pub sf_tag: usize,
    pub hidden: usize,
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, rng: &mut R, dims: EncoderDims) -> Self {
        let word_embedding = params.add("embedding.word", xavier_normal(rng, dims.vocab, dims.word));
        let answer_tag_embedding = params.add("embedding.answer_tag", xavier_normal(rng, 2, dims.answer_tag));
        let sf_tag_embedding = params.add("embedding.sf_tag", xavier_normal(rng, 2, dims.sf_tag));
        let layer1 = BiLstm::new(params, rng, "encoder.layer1", dims.word + dims.answer_tag, dims.hidden);
        let layer2_in = 2 * dims.hidden + dims.word + dims.answer_tag + dims.sf_tag;
        let layer2 = BiLstm::new(params, rng, "encoder.layer2", layer2_in, dims.hidden);
        Self { word_embedding, answer_tag_embedding, sf_tag_embedding, layer1, layer2 }
    }

    /// Per-direction hidden size `H`; states are `2H` wide.
    pub fn hidden(&self) -> usize {
        self.layer1.hidden()
    }
}

/// First-layer output plus the embeddings it consumed.
#[derive(Debug, Clone, Copy)]
pub struct Layer1Output<'g> {
    /// `N x 2H`.
    pub z: Var<'g>,
    /// Word embeddings `u`, `N x d_word`.
    pub words: Var<'g>,
    /// Answer-tag embeddings `a`, `N x d_tag`.
    pub answer_tags: Var<'g>,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput<'g> {
    pub z: Var<'g>,
    pub h: Var<'g>,
    pub words: Var<'g>,
    pub answer_tags: Var<'g>,
    pub sf_tags: Var<'g>,
}

pub fn encode_layer1<'g>(
    g: &'g Graph<'g>,
    p: &EncoderParams,
    word_ids: &[usize],
    answer_tags: &[u8],
    dropout: &mut Dropout,
) -> Result<Layer1Output<'g>> {
    if word_ids.is_empty() {
        return Err(Error::Empty("encoder input has no tokens"));
    }
    if word_ids.len() != answer_tags.len() {
        return Err(Error::Shape(format!("{} word ids but {} answer tags", word_ids.len(), answer_tags.len())));
    }
    let tags: Vec<usize> = answer_tags.iter().map(|&t| usize::from(t != 0)).collect();
    let words = dropout.apply(g, g.lookup(p.word_embedding, word_ids));
    let answer = g.lookup(p.answer_tag_embedding, &tags);
    let z = p.layer1.forward(g, g.concat_cols(&[words, answer]));
    Ok(Layer1Output { z: dropout.apply(g, z), words, answer_tags: answer })
}

/// Checks that `bounds` are ordered, non-empty and cover exactly `[0, n)`.
pub fn check_bounds(bounds: &[(usize, usize)], n: usize) -> Result<()> {
    let mut expected = 0;
    for &(s, e) in bounds {
        if s != expected || e <= s {
            return Err(Error::Bounds(format!("{bounds:?} do not partition [0, {n})")));
        }
        expected = e;
    }
    if expected != n {
        return Err(Error::Bounds(format!("{bounds:?} do not partition [0, {n})")));
    }
    Ok(())
}

/// Broadcasts each sentence's hard prediction to all of its words.
pub fn sf_tag_encoding<'g>(
    g: &'g Graph<'g>,
    p: &EncoderParams,
    predictions: &[bool],
    bounds: &[(usize, usize)],
    n: usize,
) -> Result<Var<'g>> {
    check_bounds(bounds, n)?;
    if predictions.len() != bounds.len() {
        return Err(Error::Shape(format!("{} predictions for {} sentences", predictions.len(), bounds.len())));
    }
    let rows: Vec<usize> = bounds
        .iter()
        .zip(predictions)
        .flat_map(|(&(s, e), &pred)| std::iter::repeat_n(usize::from(pred), e - s))
        .collect();
    Ok(g.lookup(p.sf_tag_embedding, &rows))
}

pub fn encode_layer2<'g>(
    g: &'g Graph<'g>,
    p: &EncoderParams,
    z: Var<'g>,
    words: Var<'g>,
    answer_tags: Var<'g>,
    sf_tags: Var<'g>,
    dropout: &mut Dropout,
) -> Result<Var<'g>> {
    let n = z.shape().0;
    let parts = [z, words, answer_tags, sf_tags];
    if parts.iter().any(|v| v.shape().0 != n) {
        return Err(Error::Shape(format!(
            "layer-2 inputs have lengths {:?}",
            parts.iter().map(|v| v.shape().0).collect::<Vec<_>>()
        )));
    }
    let width: usize = parts.iter().map(|v| v.shape().1).sum();
    let expected = p.layer2.input_dim(g.params());
    if width != expected {
        return Err(Error::Shape(format!("layer-2 input width {width}, expected {expected}")));
    }
    let h = p.layer2.forward(g, g.concat_cols(&parts));
    Ok(dropout.apply(g, h))
}

/// Reads whitespace-separated `token v1 ... vd` lines into the embedding
/// table. Rows for tokens absent from the file keep their initial values.
/// Returns the number of rows replaced.
pub fn load_word_vectors(table: &mut Mat, vocab: &Vocabulary, path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dim = table.ncols();
    let mut seen: HashMap<usize, ()> = HashMap::new();
    for (line_no, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let Some(id) = vocab.get(token) else { continue };
        let values: Vec<f64> = fields
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { index: line_no, message: format!("bad vector value: {e}") })?;
        if values.len() != dim {
            return Err(Error::Parse {
                index: line_no,
                message: format!("vector for '{token}' has {} values, expected {dim}", values.len()),
            });
        }
        table.row_mut(id).assign(&ndarray::Array1::from(values));
        seen.insert(id, ());
    }
    Ok(seen.len())
}
