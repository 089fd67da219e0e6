use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use probefl_core::dataset::synthetic_dataset;
use probefl_core::federation::{fedavg, local_train, TrainConfig};
use probefl_core::filter::{euclidean_distance, make_probe, probe_model, ProbeMode};
use probefl_core::nn::{model_backward, model_forward, ModelParams};
use probefl_core::{seed, Shard, Tensor};

fn batch(n: usize) -> (Tensor, Vec<usize>) {
    let ds = synthetic_dataset(1, n, 10).unwrap();
    let data = ds.iter().flat_map(|e| e.image.data().to_vec()).collect();
    let labels = ds.iter().map(|e| e.label).collect();
    (Tensor::from_vec(&[n, 1, 28, 28], data).unwrap(), labels)
}

fn nn_benches(c: &mut Criterion) {
    let params = ModelParams::init(&mut seed::rng(0));
    let (x, y) = batch(32);
    c.bench_function("forward_batch32", |b| b.iter(|| model_forward(black_box(&params), &x).unwrap()));
    c.bench_function("backward_batch32", |b| b.iter(|| model_backward(black_box(&params), &x, &y).unwrap()));

    let shard = Shard {
        client_id: 0,
        examples: synthetic_dataset(2, 64, 10).unwrap(),
        source_indices: (0..64).collect(),
    };
    let cfg = TrainConfig { epochs_per_round: 1, ..TrainConfig::default() };
    c.bench_function("local_train_64x1", |b| {
        b.iter(|| local_train(&params, &shard, &cfg, &mut seed::rng(3)).unwrap())
    });
}

fn aggregation_benches(c: &mut Criterion) {
    let models: Vec<ModelParams> = (0..14).map(|i| ModelParams::init(&mut seed::rng(i))).collect();
    let refs: Vec<(usize, &ModelParams)> = models.iter().enumerate().collect();
    c.bench_function("fedavg_14", |b| b.iter(|| fedavg(black_box(&refs)).unwrap()));

    let probe = make_probe(7);
    c.bench_function("probe_model", |b| {
        b.iter(|| probe_model(black_box(&models[0]), &probe, ProbeMode::Softmax).unwrap())
    });
    let p = probe_model(&models[0], &probe, ProbeMode::Softmax).unwrap();
    let q = probe_model(&models[1], &probe, ProbeMode::Softmax).unwrap();
    c.bench_function("euclidean_distance_10", |b| b.iter(|| euclidean_distance(black_box(&p), &q).unwrap()));
}

criterion_group!(benches, nn_benches, aggregation_benches);
criterion_main!(benches);
