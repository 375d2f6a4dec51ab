use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use qhspot_core::backtest::ModelSpec;
use qhspot_core::evaluation::{mean_ttest, sharpe_equality, TestResult};
use qhspot_core::portfolio::{
    base_strategy, common_slots, dataset_prices, meanvar_strategy, naive_strategy, perfect_strategy, rolling_moments,
    savings, summarize, write_ledger, Realized, SlotKey,
};
use qhspot_core::{Error, ForecastPanel, ModelKind, Result, SeriesId, Side, StrategyKind, StrategyLedger, Target};

use crate::backtest::load;
use crate::config::RunConfig;
use crate::evaluate::load_panel;
use crate::output::{create_dir, csv_writer, finish, io_err, opt, record, write_json};

pub const SUMMARY_HEADER: [&str; 9] = [
    "strategy",
    "side",
    "n",
    "price",
    "min_price",
    "max_price",
    "std_dev",
    "sharpe",
    "total_cashflow_eur",
];
pub const TTEST_HEADER: [&str; 7] = ["strategy", "benchmark", "statistic", "p_value", "n", "degenerate", "detail"];
pub const SHARPE_HEADER: [&str; 7] = ["strategy_1", "strategy_2", "statistic", "p_value", "n", "degenerate", "detail"];
pub const SAVINGS_HEADER: [&str; 4] = ["strategy", "benchmark", "volume_mw", "savings_eur"];
pub const SPREAD_HEADER: [&str; 6] = ["source", "qh", "n", "buy_price", "sell_price", "spread"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioReport {
    pub volume_mw: f64,
    pub slots: usize,
    pub strategies: Vec<String>,
    pub sources: Vec<String>,
}

fn both_venues(panel: &ForecastPanel) -> Vec<String> {
    panel
        .models()
        .into_iter()
        .filter(|m| panel.select(m, Target::EpexQhAuction).next().is_some())
        .filter(|m| panel.select(m, Target::EpexQhIdVwap).next().is_some())
        .collect()
}

fn is_naive(model: &str) -> bool {
    model
        .parse::<ModelSpec>()
        .is_ok_and(|s| s.estimator == ModelKind::NaiveExaa)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn test_fields(r: std::result::Result<TestResult, Error>, n: usize) -> [String; 4] {
    match r {
        Ok(r) => [r.statistic.to_string(), r.p_value.to_string(), r.n.to_string(), r.degenerate.to_string()],
        Err(_) => ["NaN".into(), "NaN".into(), n.to_string(), "true".into()],
    }
}

fn test_detail(r: &std::result::Result<TestResult, Error>) -> String {
    match r {
        Ok(r) => r.detail.clone(),
        Err(e) => e.to_string(),
    }
}

/// Build every strategy ledger over the slots they share, then write the
/// ledgers, the summary table, mean and Sharpe tests, savings against the
/// benchmarks and the Base high/low spreads to `<output>/portfolio`.
pub fn portfolio(cfg: &RunConfig, volume: Option<f64>) -> Result<PortfolioReport> {
    cfg.validate()?;
    let pc = &cfg.portfolio;
    let volume = volume.unwrap_or(pc.volume_mw);
    if !(volume >= 0.0 && volume.is_finite()) {
        return Err(Error::Config(format!("volume must be non-negative, got {volume}")));
    }
    let panel = load_panel(cfg)?;
    let data = load(cfg)?;
    let realized = Realized::from_panel(&panel);
    let keys: BTreeSet<SlotKey> = realized
        .auction
        .keys()
        .filter(|k| realized.intraday.contains_key(k))
        .copied()
        .collect();
    if keys.is_empty() {
        return Err(Error::Data("the panel has no slot with realized prices for both venues".into()));
    }

    let mut ledgers: Vec<StrategyLedger> = Vec::new();
    for (kind, id) in [
        (StrategyKind::NaiveExaa, SeriesId::ExaaQh),
        (StrategyKind::NaiveAuqh, SeriesId::EpexQhAuction),
        (StrategyKind::NaiveIdqh, SeriesId::EpexQhIdVwap),
        (StrategyKind::NaiveRebap, SeriesId::Rebap),
    ] {
        if !data.contains(id) {
            warn!("{kind} omitted: {id} is not in the dataset");
            continue;
        }
        ledgers.push(naive_strategy(kind, id, &dataset_prices(&data, id, &keys)?, volume));
    }
    ledgers.push(perfect_strategy(&realized, Side::Buy, volume));
    ledgers.push(perfect_strategy(&realized, Side::Sell, volume));

    let available = both_venues(&panel);
    let sources: Vec<String> = match &pc.sources {
        Some(s) => {
            if let Some(bad) = s.iter().find(|m| !available.contains(m)) {
                return Err(Error::Config(format!("portfolio source {bad} lacks forecasts for both venues")));
            }
            s.clone()
        }
        None => available.into_iter().filter(|m| !is_naive(m)).collect(),
    };
    if !sources.is_empty() {
        let days: Vec<NaiveDate> = keys.iter().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().collect();
        let window = pc.moment_window.unwrap_or(cfg.backtest.plan.train_days() as usize);
        let moments = rolling_moments(&data, &days, window)?;
        for src in &sources {
            for side in [Side::Buy, Side::Sell] {
                ledgers.push(base_strategy(&panel, src, side, volume)?);
            }
            for side in [Side::Buy, Side::Sell] {
                ledgers.push(meanvar_strategy(&panel, src, side, &moments, pc.gamma, volume)?);
            }
        }
    } else {
        warn!("no forecast models with both venues in the panel; Base and MeanVar omitted");
    }

    let common = common_slots(&ledgers);
    if common.is_empty() {
        return Err(Error::Data("strategies share no slots".into()));
    }
    if common.len() < keys.len() {
        info!("{} of {} slots are shared by every strategy", common.len(), keys.len());
    }
    let ledgers: Vec<StrategyLedger> = ledgers.iter().map(|l| l.restricted(&common)).collect();
    let by_name: BTreeMap<&str, &StrategyLedger> = ledgers.iter().map(|l| (l.name.as_str(), l)).collect();
    for b in &pc.benchmarks {
        if !by_name.contains_key(b.as_str()) {
            return Err(Error::Config(format!("benchmark {b} is not among the built strategies")));
        }
    }

    let dir = cfg.portfolio_dir();
    let ledger_dir = dir.join("ledgers");
    create_dir(&ledger_dir)?;
    for l in &ledgers {
        let path = ledger_dir.join(format!("{}.csv", l.name));
        let f = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        write_ledger(l, std::io::BufWriter::new(f), true)?;
    }

    let path = dir.join("summary.csv");
    let mut w = csv_writer(&path, &SUMMARY_HEADER)?;
    for l in &ledgers {
        let s = summarize(l, pc.sd_convention)?;
        record(
            &mut w,
            &path,
            &[
                s.strategy,
                format!("{:?}", s.side).to_lowercase(),
                s.n.to_string(),
                s.price.to_string(),
                s.min_price.to_string(),
                s.max_price.to_string(),
                s.std_dev.to_string(),
                opt(s.sharpe),
                s.total_cashflow_eur.to_string(),
            ],
        )?;
    }
    finish(w, &path)?;

    write_tests(&ledgers, &pc.benchmarks, pc.significance_level, &dir)?;

    let path = dir.join("savings.csv");
    let mut w = csv_writer(&path, &SAVINGS_HEADER)?;
    for b in &pc.benchmarks {
        let bench = by_name[b.as_str()];
        for l in &ledgers {
            if l.name == bench.name {
                continue;
            }
            record(&mut w, &path, &[l.name.clone(), b.clone(), volume.to_string(), savings(l, bench)?.to_string()])?;
        }
    }
    finish(w, &path)?;

    write_spreads(&ledgers, &sources, &dir.join("spread.csv"))?;

    let report = PortfolioReport {
        volume_mw: volume,
        slots: common.len(),
        strategies: ledgers.iter().map(|l| l.name.clone()).collect(),
        sources,
    };
    write_json(&dir.join("report.json"), &report)?;
    info!("{} strategies over {} slots written to {}", report.strategies.len(), report.slots, dir.display());
    Ok(report)
}

fn write_tests(ledgers: &[StrategyLedger], benchmarks: &[String], level: f64, dir: &Path) -> Result<()> {
    let path = dir.join("ttest.csv");
    let mut w = csv_writer(&path, &TTEST_HEADER)?;
    for l in ledgers.iter().filter(|l| l.kind.needs_forecasts()) {
        for b in benchmarks {
            let Some(bench) = ledgers.iter().find(|x| &x.name == b) else { continue };
            let r = mean_ttest(&l.prices(), &bench.prices(), level);
            let detail = test_detail(&r);
            let fields: Vec<String> = [l.name.clone(), b.clone()]
                .into_iter()
                .chain(test_fields(r, l.entries.len() + bench.entries.len()))
                .chain([detail])
                .collect();
            record(&mut w, &path, &fields)?;
        }
    }
    finish(w, &path)?;

    let path = dir.join("sharpe_test.csv");
    let mut w = csv_writer(&path, &SHARPE_HEADER)?;
    for (i, a) in ledgers.iter().enumerate() {
        for b in &ledgers[i + 1..] {
            let r = sharpe_equality(&a.prices(), &b.prices(), level);
            let detail = test_detail(&r);
            let fields: Vec<String> = [a.name.clone(), b.name.clone()]
                .into_iter()
                .chain(test_fields(r, a.entries.len()))
                .chain([detail])
                .collect();
            record(&mut w, &path, &fields)?;
        }
    }
    finish(w, &path)
}

/// Average Base sell minus Base buy price per source, overall and per
/// quarter-hour.
fn write_spreads(ledgers: &[StrategyLedger], sources: &[String], path: &Path) -> Result<()> {
    let mut w = csv_writer(path, &SPREAD_HEADER)?;
    for src in sources {
        let find = |kind| {
            ledgers
                .iter()
                .find(|l| l.kind == kind && l.forecast_source.as_deref() == Some(src))
        };
        let (Some(buy), Some(sell)) = (find(StrategyKind::BaseBuy), find(StrategyKind::BaseSell)) else {
            continue;
        };
        let mut per_qh: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for e in &buy.entries {
            per_qh.entry(e.qh).or_default().0.push(e.price);
        }
        for e in &sell.entries {
            per_qh.entry(e.qh).or_default().1.push(e.price);
        }
        let (b, s) = (mean(&buy.prices()), mean(&sell.prices()));
        let mut rows = vec![(String::new(), buy.entries.len(), b, s)];
        rows.extend(per_qh.into_iter().map(|(qh, (bp, sp))| (qh.to_string(), bp.len(), mean(&bp), mean(&sp))));
        for (qh, n, b, s) in rows {
            record(&mut w, path, &[src.clone(), qh, n.to_string(), b.to_string(), s.to_string(), (s - b).to_string()])?;
        }
    }
    finish(w, path)
}
