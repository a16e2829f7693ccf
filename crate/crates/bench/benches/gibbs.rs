use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use vafactor_bench::fixture;
use vafactor_core::predict::predict_cause;
use vafactor_core::relevance::{CmiEstimator, Predictor};
use vafactor_core::{ChainConfig, GibbsSampler, RngStream};

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    for k in [1, 3] {
        let data = fixture(400, 20, k, 4, 1);
        let cfg = ChainConfig { n_factors: k, ..ChainConfig::default() };
        let sampler = GibbsSampler::new(&data.dataset, cfg).unwrap();
        let mut state = sampler.initial_state().unwrap();
        let mut t = 0;
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| {
                t += 1;
                sampler.sweep(&mut state, t).unwrap();
            })
        });
    }
    group.finish();
}

fn predict(c: &mut Criterion) {
    let data = fixture(200, 30, 2, 5, 2);
    let d = &data.dataset;
    let i = d.target_rows()[0];
    let mut group = c.benchmark_group("predict_cause");
    for r in [100, 1000] {
        group.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, &r| {
            let mut rng = RngStream::new(3, 0);
            b.iter(|| {
                black_box(predict_cause(
                    &data.params,
                    &data.standardizer,
                    d.x_row(i),
                    d.mask_row(i),
                    d.age[i],
                    d.sex[i],
                    r,
                    &mut rng,
                ))
            })
        });
    }
    group.finish();
}

fn cmi(c: &mut Criterion) {
    let data = fixture(50, 15, 2, 4, 4);
    let mut rng = RngStream::new(5, 0);
    let est = CmiEstimator::new(&data.params, &data.standardizer, 200, &mut rng);
    let preds = Predictor::all(15);
    c.bench_function("cmi_all_predictors_1000", |b| {
        b.iter(|| black_box(est.estimate_with_rng(&preds, 1000, &mut rng)))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = sweep, predict, cmi
}
criterion_main!(benches);
