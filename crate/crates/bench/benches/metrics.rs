use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use improver_bench::{corpus, nested_term, showcase_originals};
use improver_core::canon::{canonical_goal, term_digest};
use improver_core::metrics::{metric_length, metric_modularity};
use improver_core::tree::build_tree;

fn canonicalization(c: &mut Criterion) {
    let term = nested_term(32);
    c.bench_function("term_digest/depth32", |b| b.iter(|| term_digest(black_box(&term))));
    let records = showcase_originals();
    let goals: Vec<_> = records.iter().flat_map(|r| r.goals.values()).collect();
    c.bench_function("canonical_goal/showcase", |b| {
        b.iter(|| goals.iter().map(canonical_goal).collect::<Vec<_>>())
    });
}

fn metrics(c: &mut Criterion) {
    let records = showcase_originals();
    c.bench_function("build_tree/showcase", |b| {
        b.iter(|| records.iter().map(|r| build_tree(black_box(r)).unwrap().step_count).sum::<usize>())
    });
    c.bench_function("metric_modularity/showcase", |b| {
        b.iter(|| records.iter().map(|r| metric_modularity(black_box(r)).unwrap().0).sum::<f64>())
    });
    let corpus = corpus();
    c.bench_function("metric_length/corpus", |b| {
        b.iter(|| corpus.iter().map(|r| metric_length(black_box(r))).sum::<f64>())
    });
}

criterion_group!(benches, canonicalization, metrics);
criterion_main!(benches);
