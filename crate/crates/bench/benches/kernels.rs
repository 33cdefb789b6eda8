use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use prnet_bench::{bench_config, gaussian_batch};
use prnet_core::channel::{generate_all_modes, sample_paths};
use prnet_core::estimation::transmit;
use prnet_core::nn::{adam_step, AdamState};
use prnet_core::{ComplexNetwork, Pipeline, RealNetwork, Regressor};

fn channel(c: &mut Criterion) {
    let config = bench_config();
    let pipeline = Pipeline::new(&config).unwrap();
    let paths = sample_paths(3, config.clusters, config.rays_per_cluster, config.spread_rad()).unwrap();
    c.bench_function("all_mode_channel_desk", |b| {
        b.iter(|| generate_all_modes(pipeline.geometry(), black_box(&paths), pipeline.gains()).unwrap())
    });

    let estimator = pipeline.estimator(25.0).unwrap();
    let tensor = pipeline.tensor(9).unwrap();
    let composite = prnet_core::estimation::composite_channel(&tensor, pipeline.layout().group_map()).unwrap();
    let received = transmit(&composite, pipeline.pilots(), 25.0, 4).unwrap();
    c.bench_function("lmmse_apply_desk", |b| b.iter(|| estimator.apply(black_box(&received)).unwrap()));
    c.bench_function("build_sample_desk", |b| {
        b.iter(|| pipeline.build_sample(black_box(17), 25.0, &estimator).unwrap())
    });
}

fn networks(c: &mut Criterion) {
    let config = bench_config();
    let mut group = c.benchmark_group("train_step");
    for batch in [1usize, 32, 128] {
        let x = gaussian_batch(1, config.input_len(), batch);
        let t = gaussian_batch(2, config.output_len(), batch);

        let mut complex = ComplexNetwork::new(&config.prnet_dims(), 5).unwrap();
        let mut adam = AdamState::new(1e-3);
        group.bench_with_input(BenchmarkId::new("prnet", batch), &batch, |b, _| {
            b.iter(|| {
                let (_, g) = complex.loss_and_gradients(&x, &t).unwrap();
                adam_step(&mut complex, &g, &mut adam).unwrap();
            })
        });

        let mut real =
            RealNetwork::for_complex(config.input_len(), &config.baseline_widths(), config.output_len(), 5).unwrap();
        let mut adam = AdamState::new(1e-3);
        group.bench_with_input(BenchmarkId::new("dnn", batch), &batch, |b, _| {
            b.iter(|| {
                let (_, g) = real.loss_and_gradients(&x, &t).unwrap();
                adam_step(&mut real, &g, &mut adam).unwrap();
            })
        });
    }
    group.finish();

    let net = ComplexNetwork::new(&config.prnet_dims(), 5).unwrap();
    let x = gaussian_batch(3, config.input_len(), 819);
    c.bench_function("prnet_predict_test_split", |b| b.iter(|| net.predict(black_box(&x)).unwrap()));
}

criterion_group!(benches, channel, networks);
criterion_main!(benches);
