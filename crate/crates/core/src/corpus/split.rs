use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Level, QAExample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<QAExample>,
    pub dev: Vec<QAExample>,
    pub test: Vec<QAExample>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[QAExample] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Largest-remainder apportionment of `total` across groups in proportion to
/// `sizes`, never exceeding `caps`.
fn apportion(total: usize, sizes: &[usize], caps: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let quotas: Vec<f64> = sizes.iter().map(|&s| s as f64 * total as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().zip(caps).map(|(q, &cap)| (q.floor() as usize).min(cap)).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut missing = total.saturating_sub(alloc.iter().sum());
    while missing > 0 {
        let before = missing;
        for &g in &order {
            if missing == 0 {
                break;
            }
            if alloc[g] < caps[g] {
                alloc[g] += 1;
                missing -= 1;
            }
        }
        if before == missing {
            break;
        }
    }
    alloc
}

/// 80/10/10 split stratified by difficulty level, deterministic in `seed`.
/// Split sizes are `round(0.1 n)` for dev and test, the rest for train.
/// Each split lists its examples in pool order.
pub fn split_dataset(examples: Vec<QAExample>, seed: u64) -> Result<Splits> {
    let n = examples.len();
    if n < 10 {
        return Err(Error::Invalid(format!("need at least 10 examples to split, got {n}")));
    }
    let n_dev = (n as f64 * 0.1).round() as usize;
    let n_test = n_dev;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<Vec<usize>> =
        Level::ALL.iter().map(|&level| (0..n).filter(|&i| examples[i].level == level).collect()).collect();
    for group in &mut groups {
        group.shuffle(&mut rng);
    }
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let dev_alloc = apportion(n_dev, &sizes, &sizes);
    let remaining: Vec<usize> = sizes.iter().zip(&dev_alloc).map(|(s, d)| s - d).collect();
    let test_alloc = apportion(n_test, &sizes, &remaining);

    let mut assignment = vec![Split::Train; n];
    for (g, group) in groups.iter().enumerate() {
        for &i in &group[..dev_alloc[g]] {
            assignment[i] = Split::Dev;
        }
        for &i in &group[dev_alloc[g]..dev_alloc[g] + test_alloc[g]] {
            assignment[i] = Split::Test;
        }
    }
    let mut splits = Splits { train: Vec::new(), dev: Vec::new(), test: Vec::new() };
    for (ex, split) in examples.into_iter().zip(assignment) {
        match split {
            Split::Train => splits.train.push(ex),
            Split::Dev => splits.dev.push(ex),
            Split::Test => splits.test.push(ex),
        }
    }
    Ok(splits)
}
