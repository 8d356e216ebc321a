//! Losses and the reward history behind the adaptive self-critical baseline.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::autograd::Var;

/// Recent sampled and greedy rewards over a sliding window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardHistory {
    capacity: usize,
    sampled: VecDeque<f64>,
    greedy: VecDeque<f64>,
    sum_sampled: f64,
    sum_greedy: f64,
    since_resum: usize,
}

impl RewardHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "history capacity must be positive");
        Self {
            capacity,
            sampled: VecDeque::with_capacity(capacity),
            greedy: VecDeque::with_capacity(capacity),
            sum_sampled: 0.0,
            sum_greedy: 0.0,
            since_resum: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.sampled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sampled.is_empty()
    }

    pub fn push(&mut self, sampled: f64, greedy: f64) {
        if self.sampled.len() == self.capacity {
            self.sum_sampled -= self.sampled.pop_front().expect("full");
            self.sum_greedy -= self.greedy.pop_front().expect("full");
        }
        self.sampled.push_back(sampled);
        self.greedy.push_back(greedy);
        self.sum_sampled += sampled;
        self.sum_greedy += greedy;
        self.since_resum += 1;
        // Refresh the running sums once per window so rounding cannot drift.
        if self.since_resum >= self.capacity {
            self.sum_sampled = self.sampled.iter().sum();
            self.sum_greedy = self.greedy.iter().sum();
            self.since_resum = 0;
        }
    }

    /// `(Σ sampled, Σ greedy)` over the window.
    pub fn sums(&self) -> (f64, f64) {
        (self.sum_sampled, self.sum_greedy)
    }

    pub fn sampled(&self) -> impl Iterator<Item = &f64> {
        self.sampled.iter()
    }

    pub fn greedy(&self) -> impl Iterator<Item = &f64> {
        self.greedy.iter()
    }

    /// `Σ sampled / Σ greedy`, or `None` when empty or the denominator is zero.
    pub fn factor(&self) -> Option<f64> {
        (!self.is_empty() && self.sum_greedy != 0.0).then(|| self.sum_sampled / self.sum_greedy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Greedy reward scaled by `α · Σr_s / Σr_g`.
    Adaptive,
    /// Greedy reward as is.
    Plain,
}

/// `r_s − α·(Σr_s/Σr_g)·r_g` when the adaptive baseline is enabled and
/// defined, else `r_s − r_g`.
pub fn scst_advantage(r_s: f64, r_g: f64, history: &RewardHistory, alpha: f64, adaptive: bool) -> (f64, Baseline) {
    match history.factor() {
        Some(f) if adaptive => (r_s - alpha * f * r_g, Baseline::Adaptive),
        _ => (r_s - r_g, Baseline::Plain),
    }
}

/// `−advantage · R`; rewards are constants, so only `R` carries gradient.
pub fn adaptive_scst_loss<'g>(advantage: f64, log_prob: Var<'g>) -> Var<'g> {
    log_prob.scale(-advantage)
}

pub fn mtl_loss<'g>(ml: Var<'g>, sp: Var<'g>, beta: f64) -> Var<'g> {
    ml.add(sp.scale(beta))
}

pub fn mixed_loss<'g>(rl: Var<'g>, ml: Var<'g>, sp: Var<'g>, gammas: (f64, f64, f64)) -> Var<'g> {
    rl.scale(gammas.0).add(ml.scale(gammas.1)).add(sp.scale(gammas.2))
}
