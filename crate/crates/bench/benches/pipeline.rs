use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stgan::eval::{roc_auc, roc_auc_ovr, classify_level};
use stgan::model::{forward, init_params, Bound, GraphBatch, ModelConfig, Variant};
use stgan::ndgrad::Tape;
use stgan::stgraph::{GraphConfig, GraphNode};
use stgan_bench::{graph, nodes, raw_records};

fn graph_construction(c: &mut Criterion) {
    let nodes = nodes(2000);
    let cfg = GraphConfig::default();
    c.bench_function("build_graph/2000", |b| b.iter(|| graph(black_box(&nodes), &cfg)));

    let g = graph(&nodes[..1999], &cfg);
    let last = GraphNode::from(&nodes[1999]);
    c.bench_function("expand/one_node_into_1999", |b| {
        b.iter_batched(|| g.clone(), |mut g| g.expand(black_box(last)).unwrap(), BatchSize::LargeInput)
    });
}

fn forward_backward(c: &mut Criterion) {
    let nodes = nodes(500);
    let g = graph(&nodes, &GraphConfig::default());
    let slot = stgan::dataset::FeatureSchema::default().distress_slot();
    let batch = GraphBatch::full(&g, &nodes, slot).unwrap();
    let rows: Arc<[usize]> = (0..nodes.len()).collect();
    let targets: Arc<[f64]> = nodes.iter().map(|n| n.y).collect();
    let mut group = c.benchmark_group("epoch/500_nodes");
    group.sample_size(20);
    for variant in [Variant::Stgan, Variant::Gat, Variant::Gcn] {
        let cfg = ModelConfig { variant, ..Default::default() };
        let params = init_params(&cfg, nodes[0].x_full.len(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        group.bench_function(variant.name(), |b| {
            b.iter(|| {
                let mut tape = Tape::new();
                let vars = params.register(&mut tape);
                let out = forward(&mut tape, &Bound { params: &params, vars: &vars }, &batch, &cfg).unwrap();
                let loss = tape.mae(out.pred, rows.clone(), targets.clone()).unwrap();
                black_box(tape.backward(loss).unwrap())
            })
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let labels: Vec<bool> = (0..10_000).map(|_| rng.random_bool(0.3)).collect();
    let scores: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..1.0)).collect();
    c.bench_function("roc_auc/10k", |b| b.iter(|| roc_auc(black_box(&labels), black_box(&scores))));

    let records = raw_records(2000);
    let truth: Vec<_> = records.iter().map(|r| classify_level(r.detect_info).unwrap()).collect();
    let pred: Vec<f64> = records.iter().map(|r| r.detect_info + rng.random_range(-1.0..1.0)).collect();
    c.bench_function("roc_auc_ovr/2000", |b| b.iter(|| roc_auc_ovr(black_box(&truth), black_box(&pred))));
}

criterion_group!(benches, graph_construction, forward_backward, metrics);
criterion_main!(benches);
