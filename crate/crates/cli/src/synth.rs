use std::path::{Path, PathBuf};

use chrono::Duration;
use log::info;

use qhspot_core::backtest::{ModelId, RollingPlan};
use qhspot_core::features::MAX_LAG;
use qhspot_core::market_data::save_dataset;
use qhspot_core::simulate::simulate;
use qhspot_core::{Error, Result};

use crate::config::{DataSource, RunConfig};

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, Default)]
pub struct SynthOptions {
    /// Training window length; two thirds of the usable days when absent.
    pub train_days: Option<usize>,
    pub refit_every: Option<u32>,
    pub models: Option<Vec<ModelId>>,
}

/// Simulate a market per `cfg.synth`, write one long CSV per series into
/// `dir` and a ready-to-run `config.json` pointing at them.
pub fn synth(cfg: &RunConfig, dir: &Path, opts: &SynthOptions) -> Result<PathBuf> {
    let sim = cfg.synth;
    let lead = MAX_LAG as usize;
    let usable = sim.days.saturating_sub(lead);
    let train = opts.train_days.unwrap_or(usable * 2 / 3);
    if train < 30 || train >= usable {
        return Err(Error::Config(format!(
            "{} simulated days leave no room for a {train}-day training window (needs at least 30 days and one test day after {lead} lag days)",
            sim.days
        )));
    }
    let data = simulate(&sim)?;
    let manifest = save_dataset(&data, dir)?;

    let mut out = cfg.clone();
    out.data = manifest
        .series
        .iter()
        .map(|e| {
            (
                e.id,
                DataSource {
                    path: PathBuf::from(&e.file),
                    schema: qhspot_core::market_data::CsvSchema::Long,
                },
            )
        })
        .collect();
    let d = |i: usize| sim.start + Duration::days(i as i64);
    out.backtest.plan = RollingPlan {
        initial_train: (d(lead), d(lead + train - 1)),
        test_range: (d(lead + train), d(sim.days - 1)),
        refit_every: opts.refit_every.unwrap_or(cfg.backtest.plan.refit_every),
        window_policy: cfg.backtest.plan.window_policy,
    };
    if let Some(models) = &opts.models {
        out.backtest.models = models.clone();
    }
    out.validate()?;
    let path = dir.join(CONFIG_FILE);
    out.save(&path)?;
    info!(
        "{} simulated days in {}; training {}..{}, testing {}..{}",
        sim.days,
        dir.display(),
        out.backtest.plan.initial_train.0,
        out.backtest.plan.initial_train.1,
        out.backtest.plan.test_range.0,
        out.backtest.plan.test_range.1
    );
    Ok(path)
}
