use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use sand_bench::fixture;
use sand_core::collinearity::{center, vif_prune};
use sand_core::importance::{gini_importance, ForestParams, Step5Dataset};
use sand_core::scoring::fit_scatter;
use sand_core::threshold::fit_gpd;

fn scoring(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_all");
    group.sample_size(10);
    for t in [10_000, 100_000] {
        let (train, test) = fixture(40, 20_000, t, 1);
        let (centered, mu) = center(&train).unwrap();
        let fit = fit_scatter(&centered, mu).unwrap();
        group.throughput(Throughput::Elements(t as u64));
        group.bench_with_input(BenchmarkId::from_parameter(t), &test, |b, x| {
            b.iter(|| fit.score_all_raw(black_box(x)).unwrap())
        });
    }
    group.finish();
}

fn fitting(c: &mut Criterion) {
    let (train, _) = fixture(40, 100_000, 10, 2);
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("vif_prune_40x1e4", |b| {
        let small = train.rows(0..10_000).unwrap();
        b.iter(|| vif_prune(black_box(&small), 5.0).unwrap())
    });
    group.bench_function("center_fit_scatter_40x1e5", |b| {
        b.iter(|| {
            let (centered, mu) = center(black_box(&train)).unwrap();
            fit_scatter(&centered, mu).unwrap()
        })
    });
    group.finish();
}

fn gpd(c: &mut Criterion) {
    // inverse-CDF draws at shape 0.2, scale 1
    let y: Vec<f64> = (1..=1000)
        .map(|i| {
            let u = i as f64 / 1001.0;
            ((1.0 - u).powf(-0.2) - 1.0) / 0.2
        })
        .collect();
    c.bench_function("fit_gpd_1000", |b| b.iter(|| fit_gpd(black_box(&y)).unwrap()));
}

fn forest(c: &mut Criterion) {
    let (train, _) = fixture(38, 2000, 10, 3);
    let targets: Vec<u8> = (0..2000).map(|i| u8::from((800..1000).contains(&i))).collect();
    let mut features = train.values().to_vec();
    for t in 800..1000 {
        for v in [9, 12, 14] {
            features[t * 38 + v] += 4.0;
        }
    }
    let data = Step5Dataset::from_rows(train.names().to_vec(), features, targets).unwrap();
    let mut group = c.benchmark_group("importance");
    group.sample_size(10);
    group.bench_function("rf_gini_100_trees_2000x38", |b| {
        b.iter(|| gini_importance(black_box(&data), &ForestParams::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, scoring, fitting, gpd, forest);
criterion_main!(benches);
