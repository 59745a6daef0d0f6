use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvp_bench::{fused_rows, numeric_schema, pooled_vectors, regression_columns};
use mvp_core::gbdt::{fit_gbdt, fit_tree, TreeParams};
use mvp_core::visual::pca_fit;
use mvp_core::GbdtConfig;

fn bench_fit_tree(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_tree");
    for n in [1_000, 10_000] {
        let (cols, y) = regression_columns(n, 32, 7);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                fit_tree(
                    black_box(&cols),
                    black_box(&y),
                    TreeParams {
                        max_depth: 6,
                        min_samples_leaf: 8,
                    },
                )
            })
        });
    }
    g.finish();
}

fn bench_pca(c: &mut Criterion) {
    let mut g = c.benchmark_group("pca_fit");
    g.sample_size(10);
    for d in [64, 256] {
        let x = pooled_vectors(2_000, d, 3);
        g.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| pca_fit(black_box(&x), 64).unwrap())
        });
    }
    g.finish();
}

fn bench_boosting(c: &mut Criterion) {
    let (cols, y) = regression_columns(5_000, 32, 11);
    let rows = fused_rows(&cols);
    let schema = numeric_schema(32);
    let cfg = GbdtConfig {
        n_trees: 50,
        ..Default::default()
    };
    let mut g = c.benchmark_group("gbdt");
    g.sample_size(10);
    g.bench_function("fit_50_trees_5000x32", |b| {
        b.iter(|| fit_gbdt(black_box(&rows), &y, &schema, &cfg).unwrap())
    });
    let model = fit_gbdt(&rows, &y, &schema, &cfg).unwrap();
    g.bench_function("predict_5000", |b| {
        b.iter(|| rows.iter().map(|r| model.predict(r).unwrap()).sum::<f64>())
    });
    g.finish();
}

criterion_group!(benches, bench_fit_tree, bench_pca, bench_boosting);
criterion_main!(benches);
