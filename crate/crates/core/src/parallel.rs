//! Data-parallel gradient computation with an order-fixed reduction, so the
//! summed gradient does not depend on thread scheduling.

use rayon::prelude::*;

use crate::autograd::{Graph, ParamGrads, ParamSet, Var};
use crate::Result;

pub struct BatchGradients<S> {
    /// Mean of the per-item gradients.
    pub grads: ParamGrads,
    /// Per-item loss values, in item order.
    pub losses: Vec<f64>,
    pub stats: Vec<S>,
}

impl<S> BatchGradients<S> {
    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len().max(1) as f64
    }
}

/// Builds one graph per item, differentiates its scalar loss and averages
/// the gradients over the batch in item order.
pub fn batch_gradients<T, S, F>(params: &ParamSet, items: &[T], f: F) -> Result<BatchGradients<S>>
where
    T: Sync,
    S: Send,
    F: for<'g> Fn(&'g Graph<'g>, usize, &T) -> Result<(Var<'g>, S)> + Sync,
{
    let per_item: Vec<Result<(ParamGrads, f64, S)>> = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let g = Graph::new(params);
            let (loss, stats) = f(&g, i, item)?;
            let value = loss.item();
            Ok((g.backward(loss).into_params(), value, stats))
        })
        .collect();
    let mut grads = ParamGrads::empty(params.len());
    let mut losses = Vec::with_capacity(items.len());
    let mut stats = Vec::with_capacity(items.len());
    for r in per_item {
        let (g, l, s) = r?;
        grads.accumulate(&g);
        losses.push(l);
        stats.push(s);
    }
    if !items.is_empty() {
        grads.scale(1.0 / items.len() as f64);
    }
    Ok(BatchGradients { grads, losses, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Mat;

    #[test]
    fn mean_gradient_matches_sequential() {
        let mut params = ParamSet::new();
        let w = params.add("w", Mat::from_elem((1, 3), 0.5));
        let items: Vec<f64> = (0..37).map(|i| i as f64 * 0.1 - 1.0).collect();
        let out = batch_gradients(&params, &items, |g, _, &x| {
            let loss = g.param(w).scale(x).tanh().sum();
            Ok((loss, ()))
        })
        .unwrap();
        let expected: f64 =
            items.iter().map(|&x| x * (1.0 - (0.5 * x).tanh().powi(2))).sum::<f64>() / items.len() as f64;
        let got = out.grads.dense(&params, w);
        for v in got.iter() {
            assert!((v - expected).abs() < 1e-12);
        }
        let again = batch_gradients(&params, &items, |g, _, &x| Ok((g.param(w).scale(x).tanh().sum(), ()))).unwrap();
        assert_eq!(again.grads.dense(&params, w), got);
    }
}
