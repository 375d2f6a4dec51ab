//! Rolling-origin estimation and the out-of-sample forecast panel.
//!
//! The model used for test day `d` is fitted on the window that ends the day
//! before the latest scheduled refit day `r(d) <= d`. The schedule depends
//! only on the plan, so any block of days can be recomputed independently.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorKind, Result};
use crate::estimators::{fit_en, fit_naive, fit_ols, EnConfig, FittedModel, ModelKind, ModelSummary};
use crate::features::{
    decision_time_guard, design_columns, publication_offset_min, FeatureContext, FeatureSet, FeatureSetKind,
    Target,
};
use crate::market_data::{Dataset, SeriesId, SLOTS_PER_DAY};
use crate::transform::{apply_pipeline, fit_spec, FitMode, TransformKind, TransformSpec, DEFAULT_C};

pub const MIN_WINDOW_DAYS: i64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    #[default]
    Sliding,
    Expanding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingPlan {
    pub initial_train: (NaiveDate, NaiveDate),
    pub test_range: (NaiveDate, NaiveDate),
    #[serde(default = "one")]
    pub refit_every: u32,
    #[serde(default)]
    pub window_policy: WindowPolicy,
}

fn one() -> u32 {
    1
}

impl Default for RollingPlan {
    fn default() -> Self {
        let d = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
        RollingPlan {
            initial_train: (d(2015, 10, 8), d(2016, 10, 6)),
            test_range: (d(2016, 10, 7), d(2018, 5, 31)),
            refit_every: 1,
            window_policy: WindowPolicy::Sliding,
        }
    }
}

impl RollingPlan {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.initial_train;
        let (s, e) = self.test_range;
        if a > b || s > e {
            return Err(Error::Config("empty training or test range".into()));
        }
        if b >= s {
            return Err(Error::Config(format!("training window ends {b}, not before the first test day {s}")));
        }
        if self.refit_every == 0 {
            return Err(Error::Config("refit_every must be at least 1".into()));
        }
        if self.train_days() < MIN_WINDOW_DAYS {
            return Err(Error::Config(format!(
                "training window of {} days is shorter than {MIN_WINDOW_DAYS}",
                self.train_days()
            )));
        }
        Ok(())
    }

    pub fn train_days(&self) -> i64 {
        (self.initial_train.1 - self.initial_train.0).num_days() + 1
    }

    pub fn test_days(&self) -> Vec<NaiveDate> {
        let (s, e) = self.test_range;
        (0..=(e - s).num_days()).map(|i| s + Duration::days(i)).collect()
    }

    /// Latest scheduled refit day on or before `day`.
    pub fn refit_day(&self, day: NaiveDate) -> NaiveDate {
        let offset = (day - self.test_range.0).num_days();
        let k = offset.div_euclid(self.refit_every as i64);
        self.test_range.0 + Duration::days(k * self.refit_every as i64)
    }

    /// Inclusive training window for a model refitted on `refit`.
    pub fn window(&self, refit: NaiveDate) -> (NaiveDate, NaiveDate) {
        let shift = refit - self.test_range.0;
        let end = self.initial_train.1 + shift;
        match self.window_policy {
            WindowPolicy::Sliding => (self.initial_train.0 + shift, end),
            WindowPolicy::Expanding => (self.initial_train.0, end),
        }
    }

    /// Test days grouped by refit day, in order.
    pub fn blocks(&self) -> Vec<(NaiveDate, Vec<NaiveDate>)> {
        let mut out: Vec<(NaiveDate, Vec<NaiveDate>)> = Vec::new();
        for d in self.test_days() {
            let r = self.refit_day(d);
            match out.last_mut() {
                Some((last, days)) if *last == r => days.push(d),
                _ => out.push((r, vec![d])),
            }
        }
        out
    }
}

/// A forecasting model: estimator plus design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelSpec {
    pub estimator: ModelKind,
    pub features: FeatureSet,
    pub exaa_enriched: bool,
}

impl ModelSpec {
    pub fn naive() -> Self {
        ModelSpec {
            estimator: ModelKind::NaiveExaa,
            features: FeatureSet::Expert,
            exaa_enriched: true,
        }
    }

    pub fn new(estimator: ModelKind, features: FeatureSet, exaa_enriched: bool) -> Self {
        if estimator == ModelKind::NaiveExaa {
            return Self::naive();
        }
        ModelSpec {
            estimator,
            features,
            exaa_enriched,
        }
    }

    /// The eight regression models plus the naive benchmark.
    pub fn all() -> Vec<ModelSpec> {
        let mut out = vec![Self::naive()];
        for features in [FeatureSet::Expert, FeatureSet::Full] {
            for estimator in [ModelKind::Lm, ModelKind::En] {
                for enriched in [false, true] {
                    out.push(Self::new(estimator, features, enriched));
                }
            }
        }
        out
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    pub fn feature_kind(&self, target: Target) -> FeatureSetKind {
        FeatureSetKind::new(self.features, self.exaa_enriched, target)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.estimator == ModelKind::NaiveExaa {
            return f.write_str("Naive_EXAA");
        }
        let set = match self.features {
            FeatureSet::Expert => "Expert",
            FeatureSet::Full => "Full",
        };
        write!(f, "{set}_{}", self.estimator)?;
        if self.exaa_enriched {
            f.write_str("_EXAA")?;
        }
        Ok(())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("naive_exaa") || s.eq_ignore_ascii_case("naive") {
            return Ok(Self::naive());
        }
        let bad = || Error::Config(format!("unknown model id '{s}' (expected e.g. Expert_EN_EXAA)"));
        let parts: Vec<&str> = s.split('_').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(bad());
        }
        let features = match parts[0].to_ascii_lowercase().as_str() {
            "expert" => FeatureSet::Expert,
            "full" => FeatureSet::Full,
            _ => return Err(bad()),
        };
        let estimator = match parts[1].parse::<ModelKind>()? {
            ModelKind::NaiveExaa => return Err(bad()),
            k => k,
        };
        let enriched = match parts.get(2) {
            None => false,
            Some(p) if p.eq_ignore_ascii_case("exaa") => true,
            Some(_) => return Err(bad()),
        };
        Ok(Self::new(estimator, features, enriched))
    }
}

impl Serialize for ModelId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.id())
    }
}

impl<'de> Deserialize<'de> for ModelId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(ModelId).map_err(serde::de::Error::custom)
    }
}

/// A [`ModelSpec`] serialized as its id string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelId(pub ModelSpec);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub plan: RollingPlan,
    pub models: Vec<ModelId>,
    pub targets: Vec<Target>,
    #[serde(default)]
    pub transform_mode: FitMode,
    #[serde(default)]
    pub transform_kind: TransformKind,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub en: EnConfig,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub jobs: usize,
}

fn default_c() -> f64 {
    DEFAULT_C
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            plan: RollingPlan::default(),
            models: ModelSpec::all().into_iter().map(ModelId).collect(),
            targets: Target::ALL.to_vec(),
            transform_mode: FitMode::TrainingOnly,
            transform_kind: TransformKind::Mlog,
            c: DEFAULT_C,
            en: EnConfig::default(),
            jobs: 0,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        if self.models.is_empty() || self.targets.is_empty() {
            return Err(Error::Config("at least one model and one target are required".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::Config(format!("mlog parameter c must be positive, got {}", self.c)));
        }
        if !(self.en.alpha > 0.0 && self.en.alpha <= 1.0) {
            return Err(Error::Config(format!("elastic-net α must lie in (0, 1], got {}", self.en.alpha)));
        }
        Ok(())
    }

    /// Series needed by the configured models and targets.
    pub fn required_series(&self) -> Vec<SeriesId> {
        let mut ids = BTreeSet::new();
        for m in &self.models {
            for &t in &self.targets {
                ids.insert(t.series());
                if m.0.estimator == ModelKind::NaiveExaa {
                    ids.insert(SeriesId::ExaaQh);
                } else {
                    ids.extend(m.0.feature_kind(t).required_series());
                }
            }
        }
        ids.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub date: NaiveDate,
    /// 1-based quarter-hour.
    pub qh: usize,
    pub target: Target,
    pub model: String,
    pub prediction: f64,
    /// Prediction on the transformed scale; NaN when read back from CSV.
    pub prediction_transformed: f64,
    pub realized: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub date: NaiveDate,
    /// `None` when the whole day was skipped.
    pub qh: Option<usize>,
    pub target: Target,
    pub model: String,
    pub reason: String,
}

/// Fitted per-quarter-hour model of one refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub refit_day: NaiveDate,
    pub window: (NaiveDate, NaiveDate),
    pub model: String,
    pub target: Target,
    #[serde(flatten)]
    pub summary: ModelSummary,
}

/// Publication-time audit of every feature column used in a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GuardAudit {
    pub columns_checked: usize,
    /// Latest publication time of any value read, in minutes relative to
    /// the delivery day's midnight.
    pub latest_publication_min: Option<i64>,
    pub violations: Vec<String>,
}

impl GuardAudit {
    pub fn merge(&mut self, other: GuardAudit) {
        self.columns_checked += other.columns_checked;
        self.latest_publication_min = match (self.latest_publication_min, other.latest_publication_min) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.violations.extend(other.violations);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForecastPanel {
    pub rows: Vec<PanelRow>,
    pub skips: Vec<SkipRecord>,
}

impl ForecastPanel {
    pub fn extend(&mut self, other: ForecastPanel) {
        self.rows.extend(other.rows);
        self.skips.extend(other.skips);
    }

    /// Sort rows by (date, qh, target, model) and skips likewise.
    pub fn sort(&mut self) {
        self.rows
            .sort_by(|a, b| (a.date, a.qh, a.target, &a.model).cmp(&(b.date, b.qh, b.target, &b.model)));
        self.skips
            .sort_by(|a, b| (a.date, a.qh, a.target, &a.model).cmp(&(b.date, b.qh, b.target, &b.model)));
    }

    pub fn models(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.model.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn targets(&self) -> Vec<Target> {
        let set: BTreeSet<Target> = self.rows.iter().map(|r| r.target).collect();
        set.into_iter().collect()
    }

    pub fn select<'a>(&'a self, model: &'a str, target: Target) -> impl Iterator<Item = &'a PanelRow> + 'a {
        self.rows.iter().filter(move |r| r.model == model && r.target == target)
    }

    /// Rows of one (model, target) keyed by (date, qh).
    pub fn lookup(&self, model: &str, target: Target) -> BTreeMap<(NaiveDate, usize), &PanelRow> {
        self.rows
            .iter()
            .filter(|r| r.model == model && r.target == target)
            .map(|r| ((r.date, r.qh), r))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockOutput {
    pub panel: ForecastPanel,
    pub fits: Vec<FitRecord>,
    pub audit: GuardAudit,
    pub transforms: Vec<TransformSpec>,
}

fn audit_columns(kind: &FeatureSetKind, qh: usize) -> Result<GuardAudit> {
    let mut audit = GuardAudit::default();
    for col in design_columns(kind, qh) {
        audit.columns_checked += 1;
        for (series, lag) in col.source.reads() {
            let published = publication_offset_min(series)? - 1440 * lag as i64;
            audit.latest_publication_min = Some(audit.latest_publication_min.map_or(published, |m| m.max(published)));
        }
        if !decision_time_guard(kind.target, &col)? {
            audit.violations.push(format!("{} qh {qh}: {} is published after the decision time", kind.target, col.name));
        }
    }
    Ok(audit)
}

/// Transform every series needed by `cfg`, fitted on `window` (or on the
/// whole dataset in full-period mode).
pub fn transform_dataset(
    data: &Dataset,
    cfg: &BacktestConfig,
    window: (NaiveDate, NaiveDate),
) -> Result<(Dataset, BTreeMap<SeriesId, TransformSpec>)> {
    let fit_window = match cfg.transform_mode {
        FitMode::TrainingOnly => (window.0.max(data.first_date()), window.1),
        FitMode::FullPeriod => (data.first_date(), data.last_date()),
    };
    let needed: BTreeSet<SeriesId> = cfg.required_series().into_iter().collect();
    let mut specs = BTreeMap::new();
    let transformed = data.map_series(|s| {
        if !needed.contains(&s.id) {
            return Ok(s.clone());
        }
        let spec = fit_spec(s, fit_window, cfg.transform_mode)?
            .with_c(cfg.c)
            .with_kind(cfg.transform_kind);
        specs.insert(s.id, spec);
        apply_pipeline(s, &spec)
    })?;
    Ok((transformed, specs))
}

fn is_skippable(e: &Error) -> bool {
    e.kind() == ErrorKind::Data
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))
}

/// Fit every configured model on the window for `refit` and predict `days`.
pub fn run_block(data: &Dataset, cfg: &BacktestConfig, refit: NaiveDate, days: &[NaiveDate]) -> Result<BlockOutput> {
    let pool = pool(cfg.jobs)?;
    run_block_in(&pool, data, cfg, refit, days)
}

fn run_block_in(
    pool: &rayon::ThreadPool,
    data: &Dataset,
    cfg: &BacktestConfig,
    refit: NaiveDate,
    days: &[NaiveDate],
) -> Result<BlockOutput> {
    let window = cfg.plan.window(refit);
    if window.1 > data.last_date() {
        return Err(Error::data(format!("training window ends {} after the data ({})", window.1, data.last_date())));
    }
    let mut out = BlockOutput::default();
    let skip_all = |out: &mut BlockOutput, model: &str, target: Target, reason: &str| {
        for &d in days {
            out.panel.skips.push(SkipRecord {
                date: d,
                qh: None,
                target,
                model: model.to_string(),
                reason: reason.to_string(),
            });
        }
    };

    let (tdata, specs) = match transform_dataset(data, cfg, window) {
        Ok(v) => v,
        Err(e) if is_skippable(&e) => {
            for m in &cfg.models {
                for &t in &cfg.targets {
                    skip_all(&mut out, &m.0.id(), t, &format!("transform failed: {e}"));
                }
            }
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    out.transforms = specs.values().copied().collect();

    // days that can be evaluated at all
    let mut live_days = Vec::new();
    for &d in days {
        if data.day_index(d).is_none() {
            for m in &cfg.models {
                for &t in &cfg.targets {
                    out.panel.skips.push(SkipRecord {
                        date: d,
                        qh: None,
                        target: t,
                        model: m.0.id(),
                        reason: "day outside the dataset".into(),
                    });
                }
            }
        } else {
            live_days.push(d);
        }
    }

    let mut contexts: BTreeMap<FeatureSetKind, std::result::Result<FeatureContext<'_>, String>> = BTreeMap::new();
    for &target in &cfg.targets {
        let raw_target = data.get(target.series())?;
        let spec_t = specs[&target.series()];
        for m in &cfg.models {
            let spec = m.0;
            let id = spec.id();
            let realized = |d: NaiveDate, qh: usize| -> std::result::Result<f64, String> {
                let i = raw_target.day_index(d).unwrap() * SLOTS_PER_DAY + qh - 1;
                if raw_target.gap_mask[i] {
                    Err("realized value is imputed".into())
                } else {
                    Ok(raw_target.values[i])
                }
            };

            if spec.estimator == ModelKind::NaiveExaa {
                for &d in &live_days {
                    for qh in 1..=SLOTS_PER_DAY {
                        match realized(d, qh).and_then(|y| Ok((y, fit_naive(data, qh, d).map_err(|e| e.to_string())?))) {
                            Ok((y, p)) => out.panel.rows.push(PanelRow {
                                date: d,
                                qh,
                                target,
                                model: id.clone(),
                                prediction: p,
                                prediction_transformed: spec_t.forward(p),
                                realized: y,
                            }),
                            Err(reason) => out.panel.skips.push(SkipRecord {
                                date: d,
                                qh: Some(qh),
                                target,
                                model: id.clone(),
                                reason,
                            }),
                        }
                    }
                }
                continue;
            }

            let kind = spec.feature_kind(target);
            let ctx = contexts.entry(kind).or_insert_with(|| {
                let mut ctx = FeatureContext::new(&tdata, kind, window).map_err(|e| e.to_string())?;
                for &d in &live_days {
                    ctx.matched_day(d).map_err(|e| e.to_string())?;
                }
                Ok(ctx)
            });
            let ctx = match ctx {
                Ok(c) => &*c,
                Err(reason) => {
                    skip_all(&mut out, &id, target, &format!("design failed: {reason}"));
                    continue;
                }
            };

            type QhResult = Result<(Option<FittedModel>, Vec<std::result::Result<(f64, f64, f64), String>>, GuardAudit)>;
            let per_qh: Vec<QhResult> = pool.install(|| {
                (1..=SLOTS_PER_DAY)
                    .into_par_iter()
                    .map(|qh| -> QhResult {
                        let audit = audit_columns(&kind, qh)?;
                        if let Some(v) = audit.violations.first() {
                            return Err(Error::Config(format!("lookahead in feature design: {v}")));
                        }
                        let fitted = ctx.design(qh).and_then(|design| match spec.estimator {
                            ModelKind::Lm => fit_ols(&design),
                            ModelKind::En => fit_en(&design, &cfg.en),
                            ModelKind::NaiveExaa => unreachable!(),
                        });
                        let model = match fitted {
                            Ok(m) => m,
                            Err(e) if is_skippable(&e) => {
                                let reason = format!("fit failed: {e}");
                                return Ok((None, vec![Err(reason); live_days.len()], audit));
                            }
                            Err(e) => {
                                return Err(Error::numerical(format!("{id} {target} qh {qh} refit {refit}: {e}")))
                            }
                        };
                        let preds = live_days
                            .iter()
                            .map(|&d| {
                                let y = realized(d, qh)?;
                                let row = ctx.features(qh, d).map_err(|e| e.to_string())?;
                                let t = model.predict_row(&row).map_err(|e| e.to_string())?;
                                Ok((t, spec_t.inverse(t), y))
                            })
                            .collect();
                        Ok((Some(model), preds, audit))
                    })
                    .collect()
            });
            for (qh0, res) in per_qh.into_iter().enumerate() {
                let qh = qh0 + 1;
                let (model, preds, audit) = res?;
                out.audit.merge(audit);
                if let Some(model) = model {
                    out.fits.push(FitRecord {
                        refit_day: refit,
                        window,
                        model: id.clone(),
                        target,
                        summary: model.summary(),
                    });
                }
                for (&d, p) in live_days.iter().zip(preds) {
                    match p {
                        Ok((t, raw, y)) => out.panel.rows.push(PanelRow {
                            date: d,
                            qh,
                            target,
                            model: id.clone(),
                            prediction: raw,
                            prediction_transformed: t,
                            realized: y,
                        }),
                        Err(reason) => out.panel.skips.push(SkipRecord {
                            date: d,
                            qh: Some(qh),
                            target,
                            model: id.clone(),
                            reason,
                        }),
                    }
                }
            }
        }
    }
    out.panel.sort();
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BacktestOutput {
    pub panel: ForecastPanel,
    pub fits: Vec<FitRecord>,
    pub audit: GuardAudit,
    pub refits: usize,
}

/// Run the whole plan.
pub fn run(data: &Dataset, cfg: &BacktestConfig) -> Result<BacktestOutput> {
    cfg.validate()?;
    data.require(&cfg.required_series())?;
    let pool = pool(cfg.jobs)?;
    let mut out = BacktestOutput::default();
    for (refit, days) in cfg.plan.blocks() {
        let block = run_block_in(&pool, data, cfg, refit, &days)?;
        out.panel.extend(block.panel);
        out.fits.extend(block.fits);
        out.audit.merge(block.audit);
        out.refits += 1;
    }
    out.panel.sort();
    Ok(out)
}

pub const PANEL_HEADER: [&str; 6] = ["date", "qh", "target", "model", "prediction", "realized"];
pub const SKIP_HEADER: [&str; 5] = ["date", "qh", "target", "model", "reason"];

pub fn write_panel_rows<W: Write>(rows: &[PanelRow], writer: W, header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let err = |e| Error::csv("<panel>", e);
    if header {
        w.write_record(PANEL_HEADER).map_err(err)?;
    }
    for r in rows {
        w.write_record([
            r.date.to_string(),
            r.qh.to_string(),
            r.target.to_string(),
            r.model.clone(),
            r.prediction.to_string(),
            r.realized.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<panel>", e))
}

/// Long CSV `date,qh,target,model,prediction,realized` in (date, qh, target,
/// model) order.
pub fn export_panel(panel: &ForecastPanel, path: &Path) -> Result<()> {
    if panel.rows.is_empty() {
        return Err(Error::data("refusing to export an empty panel"));
    }
    let mut sorted = panel.clone();
    sorted.sort();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_panel_rows(&sorted.rows, std::io::BufWriter::new(file), true).map_err(|e| relabel(e, path))
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        Error::Io { source, .. } => Error::io(path, source),
        e => e,
    }
}

pub fn read_panel(path: &Path) -> Result<Vec<PanelRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != PANEL_HEADER {
        return Err(Error::Schema(format!("{}: expected header {}", path.display(), PANEL_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = i + 2;
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("{}: bad {what}", path.display()),
        };
        let num = |k: usize, what: &str| rec[k].parse::<f64>().map_err(|_| bad(what));
        rows.push(PanelRow {
            date: rec[0].parse().map_err(|_| bad("date"))?,
            qh: rec[1].parse().map_err(|_| bad("qh"))?,
            target: rec[2].parse().map_err(|_| bad("target"))?,
            model: rec[3].to_string(),
            prediction: num(4, "prediction")?,
            prediction_transformed: f64::NAN,
            realized: num(5, "realized")?,
        });
    }
    Ok(rows)
}

pub fn write_skips<W: Write>(skips: &[SkipRecord], writer: W, header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let err = |e| Error::csv("<skips>", e);
    if header {
        w.write_record(SKIP_HEADER).map_err(err)?;
    }
    for s in skips {
        w.write_record([
            s.date.to_string(),
            s.qh.map(|q| q.to_string()).unwrap_or_default(),
            s.target.to_string(),
            s.model.clone(),
            s.reason.clone(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<skips>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate, Dgp, SimConfig};

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn small_plan(refit_every: u32) -> RollingPlan {
        RollingPlan {
            initial_train: (d(2016, 1, 8), d(2016, 2, 11)),
            test_range: (d(2016, 2, 12), d(2016, 2, 13)),
            refit_every,
            window_policy: WindowPolicy::Sliding,
        }
    }

    #[test]
    fn plan_schedule() {
        let p = RollingPlan {
            refit_every: 3,
            ..RollingPlan::default()
        };
        p.validate().unwrap();
        let t0 = p.test_range.0;
        assert_eq!(p.refit_day(t0), t0);
        assert_eq!(p.refit_day(t0 + Duration::days(2)), t0);
        assert_eq!(p.refit_day(t0 + Duration::days(3)), t0 + Duration::days(3));
        assert_eq!(p.window(t0), p.initial_train);
        let w = p.window(t0 + Duration::days(3));
        assert_eq!((w.1 - w.0).num_days() + 1, p.train_days());
        assert!(w.1 < t0 + Duration::days(3));
        let blocks = p.blocks();
        assert_eq!(blocks.iter().map(|b| b.1.len()).sum::<usize>(), p.test_days().len());
        assert_eq!(blocks.len(), p.test_days().len().div_ceil(3));
        let e = RollingPlan {
            window_policy: WindowPolicy::Expanding,
            ..p
        };
        assert_eq!(e.window(t0 + Duration::days(30)).0, p.initial_train.0);
    }

    #[test]
    fn plan_validation() {
        let mut p = RollingPlan::default();
        p.initial_train.1 = p.test_range.0;
        assert!(p.validate().is_err());
        let short = RollingPlan {
            initial_train: (d(2016, 1, 1), d(2016, 1, 20)),
            test_range: (d(2016, 1, 21), d(2016, 1, 22)),
            ..RollingPlan::default()
        };
        assert!(matches!(short.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn model_ids_roundtrip() {
        for m in ModelSpec::all() {
            assert_eq!(m.id().parse::<ModelSpec>().unwrap(), m);
        }
        assert_eq!(ModelSpec::all().len(), 9);
        assert_eq!("Expert_EN_EXAA".parse::<ModelSpec>().unwrap().id(), "Expert_EN_EXAA");
        assert!("Expert_XX".parse::<ModelSpec>().is_err());
        let json = serde_json::to_string(&ModelId(ModelSpec::naive())).unwrap();
        assert_eq!(json, "\"Naive_EXAA\"");
    }

    #[test]
    fn naive_is_exact_when_target_is_exaa() {
        let mut data = simulate(&SimConfig {
            days: 50,
            dgp: Dgp::Market,
            ..SimConfig::default()
        })
        .unwrap();
        let exaa = data.get(SeriesId::ExaaQh).unwrap().values.clone();
        data = data
            .map_series(|s| {
                let mut s = s.clone();
                if s.id == SeriesId::EpexQhAuction {
                    s.values = exaa.clone();
                }
                Ok(s)
            })
            .unwrap();
        let cfg = BacktestConfig {
            plan: small_plan(1),
            models: vec![ModelId(ModelSpec::naive()), ModelId("Expert_LM".parse().unwrap())],
            targets: vec![Target::EpexQhAuction],
            jobs: 1,
            ..BacktestConfig::default()
        };
        let out = run(&data, &cfg).unwrap();
        assert_eq!(out.panel.rows.len(), 2 * 2 * 96);
        assert!(out.panel.skips.is_empty());
        for r in out.panel.select("Naive_EXAA", Target::EpexQhAuction) {
            assert_eq!(r.prediction, r.realized);
        }
        assert_eq!(out.refits, 2);
        assert!(out.audit.violations.is_empty());
        assert!(out.audit.latest_publication_min.unwrap() <= -540);
    }

    #[test]
    fn days_outside_data_are_skipped() {
        let data = simulate(&SimConfig {
            days: 45,
            ..SimConfig::default()
        })
        .unwrap();
        let mut plan = small_plan(1);
        plan.test_range = (d(2016, 2, 14), d(2016, 2, 16));
        let cfg = BacktestConfig {
            plan,
            models: vec![ModelId(ModelSpec::naive())],
            targets: vec![Target::EpexQhAuction],
            jobs: 1,
            ..BacktestConfig::default()
        };
        // dataset ends 2016-02-14
        let out = run(&data, &cfg).unwrap();
        assert_eq!(out.panel.rows.len(), 96);
        assert_eq!(out.panel.skips.len(), 2);
        assert!(out.panel.skips.iter().all(|s| s.qh.is_none() && s.date > d(2016, 2, 14)));
    }

    #[test]
    fn export_is_deterministic() {
        let data = simulate(&SimConfig {
            days: 45,
            ..SimConfig::default()
        })
        .unwrap();
        let cfg = BacktestConfig {
            plan: small_plan(1),
            models: vec![ModelId(ModelSpec::naive()), ModelId("Expert_EN".parse().unwrap())],
            targets: vec![Target::EpexQhAuction],
            en: EnConfig {
                lambda_steps: 50,
                ..EnConfig::default()
            },
            jobs: 2,
            ..BacktestConfig::default()
        };
        let a = run(&data, &cfg).unwrap();
        let b = run(&data, &BacktestConfig { jobs: 1, ..cfg.clone() }).unwrap();
        assert_eq!(a.panel.rows.len(), 2 * 96 * 2);
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        export_panel(&a.panel, &pa).unwrap();
        export_panel(&b.panel, &pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
        let back = read_panel(&pa).unwrap();
        assert_eq!(back.len(), a.panel.rows.len());
        for (x, y) in back.iter().zip(&a.panel.rows) {
            assert_eq!((x.date, x.qh, x.target, &x.model, x.prediction, x.realized), (y.date, y.qh, y.target, &y.model, y.prediction, y.realized));
        }
        assert!(export_panel(&ForecastPanel::default(), &pa).is_err());
    }

    #[test]
    fn block_recomputation_matches_full_run() {
        let data = simulate(&SimConfig {
            days: 48,
            ..SimConfig::default()
        })
        .unwrap();
        let mut plan = small_plan(2);
        plan.test_range.1 = d(2016, 2, 15);
        let cfg = BacktestConfig {
            plan,
            models: vec![ModelId("Expert_LM_EXAA".parse().unwrap())],
            targets: vec![Target::EpexQhIdVwap],
            jobs: 1,
            ..BacktestConfig::default()
        };
        let full = run(&data, &cfg).unwrap();
        let (refit, days) = cfg.plan.blocks()[1].clone();
        let block = run_block(&data, &cfg, refit, &days).unwrap();
        let tail: Vec<_> = full.panel.rows.iter().filter(|r| r.date >= refit).cloned().collect();
        assert_eq!(tail.len(), block.panel.rows.len());
        for (a, b) in tail.iter().zip(&block.panel.rows) {
            assert_eq!(a.prediction, b.prediction);
        }
        assert_eq!(full.refits, 2);
    }
}
