use std::collections::BTreeSet;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use qhspot_core::backtest::read_panel;
use qhspot_core::evaluation::{dacc_of, directions, dm_statistic, loss_differentials, metrics_table, per_qh_metrics, pt_test};
use qhspot_core::{Error, ForecastPanel, Result, Target};

use crate::backtest::PANEL_FILE;
use crate::config::RunConfig;
use crate::output::{create_dir, csv_writer, finish, opt, record, write_json};

pub const METRICS_HEADER: [&str; 5] = ["target", "model", "n", "rmse", "mae"];
pub const METRICS_QH_HEADER: [&str; 6] = ["target", "model", "qh", "n", "rmse", "mae"];
pub const DM_HEADER: [&str; 11] = [
    "target",
    "model_1",
    "model_2",
    "loss",
    "qh",
    "statistic",
    "p_value",
    "p_value_one_sided",
    "n",
    "degenerate",
    "detail",
];
pub const DACC_HEADER: [&str; 7] = ["model", "qh", "hits", "n", "dacc", "predicted_ties", "realized_ties"];
pub const PT_HEADER: [&str; 6] = ["model", "statistic", "p_value", "n", "degenerate", "detail"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub panel_rows: usize,
    pub models: Vec<String>,
    pub targets: Vec<Target>,
    pub files: Vec<String>,
}

pub(crate) fn load_panel(cfg: &RunConfig) -> Result<ForecastPanel> {
    let path = cfg.backtest_dir().join(PANEL_FILE);
    if !path.exists() {
        return Err(Error::Data(format!("no panel at {}; run `qhspot backtest` first", path.display())));
    }
    let rows = read_panel(&path)?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no rows", path.display())));
    }
    Ok(ForecastPanel { rows, skips: vec![] })
}

/// Accuracy tables, per-quarter-hour metrics and the DM, DAcc and PT tests
/// for the backtest panel, written to `<output>/evaluation`.
pub fn evaluate(cfg: &RunConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let panel = load_panel(cfg)?;
    let dir = cfg.evaluation_dir();
    create_dir(&dir)?;
    let models = panel.models();
    let targets = panel.targets();
    let ev = &cfg.evaluation;

    let path = dir.join("metrics.csv");
    let mut w = csv_writer(&path, &METRICS_HEADER)?;
    for m in metrics_table(&panel)? {
        record(&mut w, &path, &[m.target.to_string(), m.model, m.n.to_string(), m.rmse.to_string(), m.mae.to_string()])?;
    }
    finish(w, &path)?;

    let path = dir.join("metrics_qh.csv");
    let mut w = csv_writer(&path, &METRICS_QH_HEADER)?;
    for &target in &targets {
        for model in &models {
            let Ok(rows) = per_qh_metrics(&panel, model, target) else { continue };
            for m in rows {
                record(
                    &mut w,
                    &path,
                    &[target.to_string(), m.model, opt(m.qh), m.n.to_string(), m.rmse.to_string(), m.mae.to_string()],
                )?;
            }
        }
    }
    finish(w, &path)?;

    write_dm(&panel, cfg, &models, &targets, &dir.join("dm.csv"))?;
    write_directional(&panel, &models, ev.significance_level, &dir)?;

    let report = EvaluationReport {
        panel_rows: panel.rows.len(),
        models,
        targets,
        files: ["metrics.csv", "metrics_qh.csv", "dm.csv", "dacc.csv", "pt.csv"].map(String::from).to_vec(),
    };
    write_json(&dir.join("report.json"), &report)?;
    info!("evaluation of {} panel rows written to {}", report.panel_rows, dir.display());
    Ok(report)
}

fn write_dm(panel: &ForecastPanel, cfg: &RunConfig, models: &[String], targets: &[Target], path: &Path) -> Result<()> {
    let ev = &cfg.evaluation;
    let pairs: Vec<(String, String)> = match &ev.dm_pairs {
        Some(p) => p.clone(),
        None => {
            let mut out = Vec::new();
            for (i, a) in models.iter().enumerate() {
                for b in &models[i + 1..] {
                    out.push((a.clone(), b.clone()));
                }
            }
            out
        }
    };
    let known: BTreeSet<&String> = models.iter().collect();
    for (a, b) in &pairs {
        for m in [a, b] {
            if !known.contains(m) {
                return Err(Error::Config(format!("DM pair names {m}, which is not in the panel")));
            }
        }
    }
    let mut w = csv_writer(path, &DM_HEADER)?;
    for &target in targets {
        for (a, b) in &pairs {
            for &loss in &ev.dm_loss {
                for (qh, diff) in loss_differentials(panel, a, b, target, loss) {
                    let head = [target.to_string(), a.clone(), b.clone(), loss.to_string(), qh.to_string()];
                    let tail = match dm_statistic(&diff, ev.dm_lag, ev.significance_level) {
                        Ok(r) => [
                            r.statistic.to_string(),
                            r.p_value.to_string(),
                            opt(r.p_value_one_sided),
                            r.n.to_string(),
                            r.degenerate.to_string(),
                            r.detail,
                        ],
                        Err(e) => [
                            "NaN".into(),
                            "NaN".into(),
                            String::new(),
                            diff.len().to_string(),
                            "true".into(),
                            e.to_string(),
                        ],
                    };
                    let fields: Vec<String> = head.into_iter().chain(tail).collect();
                    record(&mut w, path, &fields)?;
                }
            }
        }
    }
    finish(w, path)
}

fn write_directional(panel: &ForecastPanel, models: &[String], level: f64, dir: &Path) -> Result<()> {
    let dacc_path = dir.join("dacc.csv");
    let pt_path = dir.join("pt.csv");
    let mut dw = csv_writer(&dacc_path, &DACC_HEADER)?;
    let mut pw = csv_writer(&pt_path, &PT_HEADER)?;
    for model in models {
        let dirs = directions(panel, model)?;
        if dirs.obs.is_empty() && dirs.predicted_ties == 0 && dirs.realized_ties == 0 {
            continue;
        }
        match dacc_of(&dirs) {
            Ok(d) => {
                let hits = d.per_qh.iter().map(|q| q.1).sum::<usize>();
                record(
                    &mut dw,
                    &dacc_path,
                    &[
                        model.clone(),
                        String::new(),
                        hits.to_string(),
                        d.n.to_string(),
                        d.overall.to_string(),
                        d.predicted_ties.to_string(),
                        d.realized_ties.to_string(),
                    ],
                )?;
                for (qh, hits, n, acc) in d.per_qh {
                    record(
                        &mut dw,
                        &dacc_path,
                        &[model.clone(), qh.to_string(), hits.to_string(), n.to_string(), acc.to_string(), String::new(), String::new()],
                    )?;
                }
            }
            Err(e) => warn!("{model}: no directional accuracy ({e})"),
        }
        let pred: Vec<bool> = dirs.obs.iter().map(|o| o.predicted_auction_high).collect();
        let real: Vec<bool> = dirs.obs.iter().map(|o| o.realized_auction_high).collect();
        let fields = match pt_test(&pred, &real, level) {
            Ok(r) => [
                model.clone(),
                r.statistic.to_string(),
                r.p_value.to_string(),
                r.n.to_string(),
                r.degenerate.to_string(),
                r.detail,
            ],
            Err(e) => [model.clone(), "NaN".into(), "NaN".into(), pred.len().to_string(), "true".into(), e.to_string()],
        };
        record(&mut pw, &pt_path, &fields)?;
    }
    finish(dw, &dacc_path)?;
    finish(pw, &pt_path)
}
