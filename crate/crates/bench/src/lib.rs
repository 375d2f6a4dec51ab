//! Fixtures shared by the benchmarks.

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use qhspot_core::backtest::{BacktestConfig, ModelId, ModelSpec, RollingPlan, WindowPolicy};
use qhspot_core::features::{DesignMatrix, FeatureColumn, FeatureSource};
use qhspot_core::market_data::Dataset;
use qhspot_core::simulate::{simulate, SimConfig};
use qhspot_core::{FeatureSet, FeatureSetKind, ModelKind, Target};

pub fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 1, 1).unwrap()
}

/// Gaussian design with a sparse true coefficient vector.
pub fn random_design(n: usize, p: usize, seed: u64) -> DesignMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nd = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..n * p).map(|_| nd.sample(&mut rng)).collect();
    let response = (0..n)
        .map(|i| {
            let row = &x[i * p..(i + 1) * p];
            row.iter().take(5).enumerate().map(|(j, v)| v * (j + 1) as f64).sum::<f64>() + nd.sample(&mut rng)
        })
        .collect();
    DesignMatrix {
        qh: 1,
        kind: FeatureSetKind::new(FeatureSet::Expert, false, Target::EpexQhAuction),
        columns: (0..p)
            .map(|j| FeatureColumn {
                name: format!("x{j}"),
                source: FeatureSource::Weekday { day: 1 },
            })
            .collect(),
        dates: vec![start(); n],
        x,
        response,
        warnings: vec![],
    }
}

/// Simulated market with a 60-day training window and one week of test days.
pub fn market(model: ModelSpec) -> (Dataset, BacktestConfig) {
    let days = 74;
    let data = simulate(&SimConfig {
        start: start(),
        days,
        seed: 3,
        ..SimConfig::default()
    })
    .expect("simulation");
    let d = |i: i64| start() + Duration::days(i);
    let cfg = BacktestConfig {
        plan: RollingPlan {
            initial_train: (d(7), d(66)),
            test_range: (d(67), d(days as i64 - 1)),
            refit_every: 7,
            window_policy: WindowPolicy::Sliding,
        },
        models: vec![ModelId(model)],
        targets: vec![Target::EpexQhAuction],
        jobs: 1,
        ..BacktestConfig::default()
    };
    (data, cfg)
}

pub fn lm() -> ModelSpec {
    ModelSpec::new(ModelKind::Lm, FeatureSet::Expert, true)
}
