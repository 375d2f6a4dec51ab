use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use qhspot_bench::{lm, market, random_design};
use qhspot_core::backtest::run_block;
use qhspot_core::estimators::{fit_en_path, lambda_max, LambdaGrid};
use qhspot_core::portfolio::{meanvar_weight, MeanVarInputs, Moments};
use qhspot_core::transform::{mlog, mlog_inverse};
use qhspot_core::Side;

fn transform(c: &mut Criterion) {
    let zs: Vec<f64> = (0..10_000).map(|i| (i as f64 - 5000.0) / 97.0).collect();
    c.bench_function("mlog_roundtrip_10k", |b| {
        b.iter(|| zs.iter().map(|&z| mlog_inverse(mlog(black_box(z), 1.0 / 3.0), 1.0 / 3.0)).sum::<f64>())
    });
}

fn elastic_net(c: &mut Criterion) {
    let design = random_design(365, 100, 7);
    let grid = LambdaGrid::exponential(lambda_max(&design, 0.5).unwrap(), 1e-3, 100).unwrap();
    c.bench_function("en_path_365x100_100lambda", |b| {
        b.iter(|| fit_en_path(black_box(&design), &grid, 0.5).unwrap())
    });
}

fn block(c: &mut Criterion) {
    let (data, cfg) = market(lm());
    let (refit, days) = cfg.plan.blocks().remove(0);
    c.bench_function("run_block_expert_lm_7days", |b| {
        b.iter(|| run_block(black_box(&data), &cfg, refit, &days).unwrap())
    });
}

fn meanvar(c: &mut Criterion) {
    let inputs: Vec<MeanVarInputs> = (0..1000)
        .map(|i| {
            let t = i as f64 / 1000.0;
            MeanVarInputs {
                mu1: 30.0 + 10.0 * t,
                mu2: 35.0 - 5.0 * t,
                moments: Moments {
                    var1: 40.0 + t,
                    var2: 90.0,
                    cov: 30.0 * (1.0 - 2.0 * t),
                },
                gamma: 2.0,
            }
        })
        .collect();
    c.bench_function("meanvar_weight_1k", |b| {
        b.iter_batched(
            || inputs.clone(),
            |xs| xs.iter().map(|x| meanvar_weight(x, Side::Buy).unwrap()).sum::<f64>(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(5));
    targets = transform, elastic_net, block, meanvar
}
criterion_main!(benches);
