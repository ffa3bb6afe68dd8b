use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use msgraph_bench::{attack_log, benign_log, two_level};
use msgraph_core::can_log::{windowize, Windowing};
use msgraph_core::detect::{change_point_detect, CpdConfig};
use msgraph_core::msg_graph::{compute_msg, edge_vectors};
use msgraph_core::pipeline::similarity_from_frames;
use msgraph_core::seq_model::{LstmModel, ModelConfig};
use msgraph_core::similarity::{cosine_similarity, pearson_correlation, Metric};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graphs(c: &mut Criterion) {
    let frames = benign_log(10_000, 1);
    let mut group = c.benchmark_group("compute_msg");
    for size in [100, 200, 1000] {
        let windows = windowize(&frames, size).unwrap().windows;
        group.bench_with_input(BenchmarkId::from_parameter(size), &windows[0], |b, w| b.iter(|| compute_msg(black_box(w))));
    }
    group.finish();
}

fn similarity(c: &mut Criterion) {
    let frames = benign_log(1_000, 2);
    let windows = windowize(&frames, 100).unwrap().windows;
    let (g1, g2) = (compute_msg(&windows[0]).unwrap(), compute_msg(&windows[1]).unwrap());
    let (x, y) = edge_vectors(&g1, &g2);
    c.bench_function("edge_vectors", |b| b.iter(|| edge_vectors(black_box(&g1), black_box(&g2))));
    c.bench_function("cosine", |b| b.iter(|| cosine_similarity(black_box(&x), black_box(&y))));
    c.bench_function("pearson", |b| b.iter(|| pearson_correlation(black_box(&x), black_box(&y))));

    let (frames, labels) = attack_log(50_000, 3);
    c.bench_function("series_50k_frames", |b| {
        b.iter(|| similarity_from_frames(black_box(&frames), Some(&labels), Windowing::disjoint(100), Metric::Pearson))
    });
}

fn change_point(c: &mut Criterion) {
    let values = two_level(200);
    let config = CpdConfig { samples: 2_000, burn_in: 500, ..CpdConfig::default() };
    c.bench_function("cpd_400_values_2500_draws", |b| b.iter(|| change_point_detect(black_box(&values), &config)));
}

fn lstm(c: &mut Criterion) {
    let model = LstmModel::new(ModelConfig::default(), 0).unwrap();
    let seq: Vec<f64> = (0..10).map(|i| 0.9 - 0.01 * f64::from(i)).collect();
    c.bench_function("lstm_inference", |b| b.iter(|| model.probability(black_box(&seq))));
    c.bench_function("lstm_forward_backward", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut grads = vec![0.0; model.params().len()];
        b.iter(|| {
            let masks = model.sample_masks(&mut rng);
            let cache = model.forward_cached(black_box(&seq), Some(masks));
            model.backward(&cache, 1.0, &mut grads)
        })
    });
}

criterion_group!(benches, graphs, similarity, change_point, lstm);
criterion_main!(benches);
