use criterion::{criterion_group, criterion_main, Criterion};
use mhqg_core::metrics::{bootstrap_significance, corpus_bleu, corpus_rouge_l};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(n: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(8..20);
            (0..len).map(|_| rng.gen_range(0..200)).collect()
        })
        .collect()
}

fn scores(c: &mut Criterion) {
    let hyps = corpus(1000, 1);
    let refs = corpus(1000, 2);
    c.bench_function("corpus_bleu_1000", |b| b.iter(|| corpus_bleu(&hyps, &refs, 4).unwrap()));
    c.bench_function("corpus_rouge_l_1000", |b| b.iter(|| corpus_rouge_l(&hyps, &refs).unwrap()));
    let a: Vec<f64> = (0..1000).map(|i| (i % 7) as f64).collect();
    let bb: Vec<f64> = (0..1000).map(|i| (i % 5) as f64).collect();
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(10);
    group.bench_function("10000_iterations", |b| b.iter(|| bootstrap_significance(&a, &bb, 10_000, 3).unwrap()));
    group.finish();
}

criterion_group!(benches, scores);
criterion_main!(benches);
