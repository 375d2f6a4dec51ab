//! Per-quarter-hour design matrices for the Expert and Full feature sets.
//!
//! Every column carries a [`FeatureSource`] describing which series and day
//! offset it reads, so causality can be audited with [`decision_time_guard`].
//! Designs are built from an already transformed [`Dataset`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{weekday_number, Dataset, SeriesId, SLOTS_PER_DAY};

/// Number of principal components kept per PCA block.
pub const PCA_COMPONENTS: usize = 3;
/// Longest day lag used by any feature.
pub const MAX_LAG: u32 = 7;
/// 1-based quarter-hours that carry PV columns.
pub const PV_QH_RANGE: std::ops::RangeInclusive<usize> = 29..=76;

/// Decision time for both targets, minutes relative to delivery-day midnight (d-1 15:00).
pub const DECISION_TIME_MIN: i64 = -9 * 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Target {
    EpexQhAuction,
    EpexQhIdVwap,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::EpexQhAuction, Target::EpexQhIdVwap];

    pub fn series(self) -> SeriesId {
        match self {
            Target::EpexQhAuction => SeriesId::EpexQhAuction,
            Target::EpexQhIdVwap => SeriesId::EpexQhIdVwap,
        }
    }

    pub fn as_str(self) -> &'static str {
        self.series().as_str()
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<SeriesId>()? {
            SeriesId::EpexQhAuction => Ok(Target::EpexQhAuction),
            SeriesId::EpexQhIdVwap => Ok(Target::EpexQhIdVwap),
            other => Err(Error::Config(format!("{other} is not a forecast target"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureSet {
    Expert,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureSetKind {
    pub kind: FeatureSet,
    pub exaa_enriched: bool,
    pub target: Target,
}

impl FeatureSetKind {
    pub fn new(kind: FeatureSet, exaa_enriched: bool, target: Target) -> Self {
        FeatureSetKind {
            kind,
            exaa_enriched,
            target,
        }
    }

    pub fn own_lags(&self) -> Vec<u32> {
        match self.kind {
            FeatureSet::Expert => vec![1, 2, 7],
            FeatureSet::Full => (1..=7).collect(),
        }
    }

    /// Lags for same-day-available price series (EPEX DA, EXAA, and the QH
    /// auction when forecasting the intraday VWAP).
    pub fn exogenous_lags(&self) -> Vec<u32> {
        match self.kind {
            FeatureSet::Expert => vec![0, 1, 2, 7],
            FeatureSet::Full => (0..=7).collect(),
        }
    }

    /// ISO weekday numbers with a dummy column.
    pub fn weekdays(&self) -> Vec<u32> {
        match self.kind {
            FeatureSet::Expert => vec![1, 6, 7],
            FeatureSet::Full => (1..=7).collect(),
        }
    }

    /// Series required to build this design.
    pub fn required_series(&self) -> Vec<SeriesId> {
        let mut ids = vec![
            SeriesId::ExaaQh,
            SeriesId::EpexDaH,
            SeriesId::EpexQhAuction,
            SeriesId::LoadFcst,
            SeriesId::WindFcst,
            SeriesId::PvFcst,
        ];
        if self.target == Target::EpexQhIdVwap {
            ids.push(SeriesId::EpexQhIdVwap);
        }
        ids
    }

    /// Day-vector blocks summarized by PCA (Expert) or included raw (Full),
    /// as `(series, day lag)`.
    pub fn day_blocks(&self) -> Vec<(SeriesId, u32)> {
        let mut blocks = Vec::new();
        if self.exaa_enriched {
            blocks.push((SeriesId::ExaaQh, 0));
        }
        blocks.push((SeriesId::EpexDaH, 0));
        match self.target {
            Target::EpexQhAuction => blocks.push((SeriesId::EpexQhAuction, 1)),
            Target::EpexQhIdVwap => {
                blocks.push((SeriesId::EpexQhAuction, 0));
                blocks.push((SeriesId::EpexQhIdVwap, 1));
            }
        }
        blocks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureSource {
    /// Value of `series` on day `d - day_lag` at 0-based `slot`.
    Value { series: SeriesId, day_lag: u32, slot: usize },
    DailyMin { series: SeriesId, day_lag: u32 },
    DailyMax { series: SeriesId, day_lag: u32 },
    /// Score of principal component `component` (0-based) of the day vector.
    Pca { series: SeriesId, day_lag: u32, component: usize },
    /// ISO weekday dummy, Monday = 1.
    Weekday { day: u32 },
    /// Price of `series` at `slot` on the most similar earlier load day.
    SimilarLoadDay { series: SeriesId, slot: usize },
}

impl FeatureSource {
    /// `(series, day lag)` pairs read by this feature.
    pub fn reads(&self) -> Vec<(SeriesId, u32)> {
        match *self {
            FeatureSource::Value { series, day_lag, .. }
            | FeatureSource::DailyMin { series, day_lag }
            | FeatureSource::DailyMax { series, day_lag }
            | FeatureSource::Pca { series, day_lag, .. } => vec![(series, day_lag)],
            FeatureSource::Weekday { .. } => vec![],
            // the candidate days are at least one day old, the matching uses
            // the delivery-day load forecast
            FeatureSource::SimilarLoadDay { series, .. } => vec![(series, 1), (SeriesId::LoadFcst, 0)],
        }
    }

    fn is_dummy(&self) -> bool {
        matches!(self, FeatureSource::Weekday { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub source: FeatureSource,
}

/// Publication time of a series' values for a delivery day, in minutes
/// relative to that day's midnight.
pub fn publication_offset_min(series: SeriesId) -> Result<i64> {
    Ok(match series {
        SeriesId::WindFcst | SeriesId::PvFcst => -16 * 60,
        SeriesId::LoadFcst => -14 * 60,
        SeriesId::ExaaQh => -(13 * 60 + 40),
        SeriesId::EpexDaH => -(11 * 60 + 18),
        SeriesId::EpexQhAuction => -(9 * 60 + 20),
        // continuous trading happens on the delivery day itself
        SeriesId::EpexQhIdVwap => 0,
        SeriesId::Rebap => {
            return Err(Error::data("REBAP has no publication rule and cannot be a feature"))
        }
    })
}

/// True iff every value read by `column` for delivery day d is published by
/// d-1 15:00.
pub fn decision_time_guard(_target: Target, column: &FeatureColumn) -> Result<bool> {
    for (series, lag) in column.source.reads() {
        let published = publication_offset_min(series)? - 1440 * lag as i64;
        if published > DECISION_TIME_MIN {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaFactors {
    pub source: SeriesId,
    /// 96 × k, column-major per component.
    pub loadings: Vec<Vec<f64>>,
    pub mean_day: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PcaFactors {
    pub fn k(&self) -> usize {
        self.loadings.len()
    }

    /// `loadingsᵀ · (day − mean_day)`.
    pub fn scores(&self, day: &[f64]) -> Vec<f64> {
        self.loadings
            .iter()
            .map(|l| l.iter().zip(day).zip(&self.mean_day).map(|((a, x), m)| a * (x - m)).sum())
            .collect()
    }
}

/// Top-`k` principal components of day vectors (rows, each of length 96).
///
/// Components with numerically zero variance are dropped with a warning.
/// Each loading is signed so that its largest-magnitude entry is positive.
pub fn pca_fit(source: SeriesId, days: &[&[f64]], k: usize) -> Result<PcaFactors> {
    if days.len() < k + 1 {
        return Err(Error::data(format!(
            "PCA on {source} needs at least {} days, got {}",
            k + 1,
            days.len()
        )));
    }
    let n = days.len();
    let p = SLOTS_PER_DAY;
    if days.iter().any(|d| d.len() != p || d.iter().any(|v| !v.is_finite())) {
        return Err(Error::data(format!("PCA on {source}: day vectors must be 96 finite values")));
    }
    let mut mean = vec![0.0; p];
    for d in days {
        for (m, v) in mean.iter_mut().zip(d.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, p, |i, j| days[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let total: f64 = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let scale = days.iter().flat_map(|d| d.iter()).fold(0.0f64, |m, v| m.max(v * v));
    let lead = eig.eigenvalues[order[0]].max(0.0);
    let significant = |lambda: f64| lambda > 1e-10 * lead && lead > 1e-14 * (1.0 + scale);

    let mut factors = PcaFactors {
        source,
        loadings: Vec::new(),
        mean_day: mean,
        eigenvalues: Vec::new(),
        explained_variance_ratio: Vec::new(),
        warnings: Vec::new(),
    };
    for &idx in order.iter().take(k) {
        let lambda = eig.eigenvalues[idx];
        if !significant(lambda) {
            break;
        }
        let col = eig.eigenvectors.column(idx);
        let mut loading = col.as_slice().to_vec();
        let pivot = (0..p).fold(0, |best, j| if loading[j].abs() > loading[best].abs() { j } else { best });
        if loading[pivot] < 0.0 {
            loading.iter_mut().for_each(|v| *v = -*v);
        }
        factors.loadings.push(loading);
        factors.eigenvalues.push(lambda);
        factors.explained_variance_ratio.push(lambda / total);
    }
    if factors.k() < k {
        factors.warnings.push(format!(
            "PCA on {source}: rank {} below requested {k} components",
            factors.k()
        ));
    }
    Ok(factors)
}

/// Index of the history day closest (Euclidean) to `target_load`; ties go
/// to the most recent (highest index) day.
pub fn similar_load_day(history: &[&[f64]], target_load: &[f64]) -> Result<usize> {
    if history.is_empty() {
        return Err(Error::data("similar load day: empty history"));
    }
    let mut best = (f64::INFINITY, 0);
    for (i, day) in history.iter().enumerate() {
        let dist: f64 = day.iter().zip(target_load).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist <= best.0 {
            best = (dist, i);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// 1-based quarter-hour.
    pub qh: usize,
    pub kind: FeatureSetKind,
    pub columns: Vec<FeatureColumn>,
    pub dates: Vec<NaiveDate>,
    /// Row-major, `dates.len() × columns.len()`.
    pub x: Vec<f64>,
    pub response: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Subset of rows, keeping columns.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let p = self.n_cols();
        let mut x = Vec::with_capacity(rows.len() * p);
        for &r in rows {
            x.extend_from_slice(self.row(r));
        }
        DesignMatrix {
            qh: self.qh,
            kind: self.kind,
            columns: self.columns.clone(),
            dates: rows.iter().map(|&r| self.dates[r]).collect(),
            x,
            response: rows.iter().map(|&r| self.response[r]).collect(),
            warnings: vec![],
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::csv("<design>", e);
        let mut header = vec!["date".to_string(), "response".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header).map_err(err)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.dates[i].to_string(), self.response[i].to_string()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<design>", e))
    }
}

/// Column list for `kind` at 1-based quarter-hour `qh`.
pub fn design_columns(kind: &FeatureSetKind, qh: usize) -> Vec<FeatureColumn> {
    assert!((1..=SLOTS_PER_DAY).contains(&qh), "qh {qh} outside 1..=96");
    let slot = qh - 1;
    let ramp_slot = if qh <= 4 { slot } else { slot - 4 };
    let target = kind.target.series();
    let mut cols = Vec::new();
    let mut push = |name: String, source: FeatureSource| cols.push(FeatureColumn { name, source });
    let value = |series, day_lag, slot| FeatureSource::Value { series, day_lag, slot };

    for lag in kind.own_lags() {
        push(format!("{target}_lag{lag}"), value(target, lag, slot));
    }
    if kind.target == Target::EpexQhIdVwap {
        let au = SeriesId::EpexQhAuction;
        for lag in kind.exogenous_lags() {
            push(format!("{au}_lag{lag}"), value(au, lag, slot));
        }
    }
    let ramp = |push: &mut dyn FnMut(String, FeatureSource), id: SeriesId| {
        push(format!("{id}_qh"), value(id, 0, slot));
        push(format!("{id}_qh_minus_1h"), value(id, 0, ramp_slot));
    };
    ramp(&mut push, SeriesId::WindFcst);
    if PV_QH_RANGE.contains(&qh) {
        ramp(&mut push, SeriesId::PvFcst);
    }
    for id in [SeriesId::EpexDaH, SeriesId::ExaaQh] {
        for lag in kind.exogenous_lags() {
            if id == SeriesId::ExaaQh && lag == 0 && !kind.exaa_enriched {
                continue;
            }
            push(format!("{id}_lag{lag}"), value(id, lag, slot));
        }
    }
    push(
        format!("{target}_min_lag1"),
        FeatureSource::DailyMin { series: target, day_lag: 1 },
    );
    push(
        format!("{target}_max_lag1"),
        FeatureSource::DailyMax { series: target, day_lag: 1 },
    );
    ramp(&mut push, SeriesId::LoadFcst);
    for (id, lag) in kind.day_blocks() {
        match kind.kind {
            FeatureSet::Expert => {
                for c in 0..PCA_COMPONENTS {
                    push(
                        format!("pca_{id}_lag{lag}_pc{}", c + 1),
                        FeatureSource::Pca { series: id, day_lag: lag, component: c },
                    );
                }
            }
            FeatureSet::Full => {
                for s in 0..SLOTS_PER_DAY {
                    push(format!("{id}_lag{lag}_qh{:02}", s + 1), value(id, lag, s));
                }
            }
        }
    }
    const DAY_NAMES: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];
    for day in kind.weekdays() {
        push(format!("dow_{}", DAY_NAMES[day as usize - 1]), FeatureSource::Weekday { day });
    }
    push(
        "similar_load_day_price".to_string(),
        FeatureSource::SimilarLoadDay { series: target, slot },
    );
    cols
}

/// Shared state for building the 96 per-quarter-hour designs of one rolling
/// step: PCA factors fitted on the training rows and similar-load-day matches.
#[derive(Debug, Clone)]
pub struct FeatureContext<'a> {
    data: &'a Dataset,
    kind: FeatureSetKind,
    rows: Vec<NaiveDate>,
    pca: BTreeMap<(SeriesId, u32), PcaFactors>,
    similar: BTreeMap<NaiveDate, NaiveDate>,
    candidate_start: NaiveDate,
    warnings: Vec<String>,
}

impl<'a> FeatureContext<'a> {
    /// `window` is the inclusive range of training days. Days whose lag-7
    /// history is not in `data` are dropped.
    pub fn new(data: &'a Dataset, kind: FeatureSetKind, window: (NaiveDate, NaiveDate)) -> Result<Self> {
        data.require(&kind.required_series())?;
        let earliest = data.first_date() + Duration::days(MAX_LAG as i64);
        let first = window.0.max(earliest);
        let last = window.1.min(data.last_date());
        if first > last {
            return Err(Error::data(format!(
                "design window {}..{} has no day with {MAX_LAG} days of history",
                window.0, window.1
            )));
        }
        let rows: Vec<NaiveDate> = (0..=(last - first).num_days())
            .map(|i| first + Duration::days(i))
            .collect();
        let candidate_start = (window.0 - Duration::days(MAX_LAG as i64)).max(data.first_date());
        let mut ctx = FeatureContext {
            data,
            kind,
            rows,
            pca: BTreeMap::new(),
            similar: BTreeMap::new(),
            candidate_start,
            warnings: Vec::new(),
        };
        if kind.kind == FeatureSet::Expert {
            for (id, lag) in kind.day_blocks() {
                let series = data.get(id)?;
                let days: Vec<&[f64]> = ctx
                    .rows
                    .iter()
                    .map(|&t| series.day_at(t - Duration::days(lag as i64)).expect("row has history"))
                    .collect();
                let f = pca_fit(id, &days, PCA_COMPONENTS)?;
                ctx.warnings.extend(f.warnings.iter().cloned());
                ctx.pca.insert((id, lag), f);
            }
        }
        let rows = ctx.rows.clone();
        for t in rows {
            ctx.similar_day(t)?;
        }
        Ok(ctx)
    }

    pub fn rows(&self) -> &[NaiveDate] {
        &self.rows
    }

    pub fn kind(&self) -> FeatureSetKind {
        self.kind
    }

    pub fn pca(&self) -> &BTreeMap<(SeriesId, u32), PcaFactors> {
        &self.pca
    }

    fn similar_day(&mut self, date: NaiveDate) -> Result<NaiveDate> {
        if let Some(d) = self.similar.get(&date) {
            return Ok(*d);
        }
        let load = self.data.get(SeriesId::LoadFcst)?;
        let target_load = load
            .day_at(date)
            .ok_or_else(|| Error::data(format!("no load forecast for {date}")))?;
        let candidates: Vec<NaiveDate> = (0..(date - self.candidate_start).num_days())
            .map(|i| self.candidate_start + Duration::days(i))
            .collect();
        let history: Vec<&[f64]> = candidates.iter().map(|&c| load.day_at(c).unwrap()).collect();
        let idx = similar_load_day(&history, target_load)?;
        self.similar.insert(date, candidates[idx]);
        Ok(candidates[idx])
    }

    /// The similar-load day matched to `date`, computing it on demand.
    pub fn matched_day(&mut self, date: NaiveDate) -> Result<NaiveDate> {
        self.similar_day(date)
    }

    fn value(&self, source: &FeatureSource, date: NaiveDate) -> Result<f64> {
        let day_of = |series: SeriesId, lag: u32| -> Result<&[f64]> {
            let day = date - Duration::days(lag as i64);
            self.data
                .get(series)?
                .day_at(day)
                .ok_or_else(|| Error::data(format!("{series} has no data for {day}")))
        };
        Ok(match *source {
            FeatureSource::Value { series, day_lag, slot } => day_of(series, day_lag)?[slot],
            FeatureSource::DailyMin { series, day_lag } => {
                day_of(series, day_lag)?.iter().copied().fold(f64::INFINITY, f64::min)
            }
            FeatureSource::DailyMax { series, day_lag } => {
                day_of(series, day_lag)?.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
            FeatureSource::Pca { series, day_lag, component } => {
                let f = self
                    .pca
                    .get(&(series, day_lag))
                    .ok_or_else(|| Error::data(format!("no PCA fitted for {series} lag {day_lag}")))?;
                if component < f.k() {
                    f.scores(day_of(series, day_lag)?)[component]
                } else {
                    0.0
                }
            }
            FeatureSource::Weekday { day } => (weekday_number(date) == day) as u8 as f64,
            FeatureSource::SimilarLoadDay { series, slot } => {
                let s = *self
                    .similar
                    .get(&date)
                    .ok_or_else(|| Error::data(format!("no similar-load match for {date}")))?;
                self.data.get(series)?.day_at(s).unwrap()[slot]
            }
        })
    }

    /// Feature values for one delivery day.
    pub fn row(&mut self, qh: usize, date: NaiveDate) -> Result<Vec<f64>> {
        if date < self.data.first_date() + Duration::days(MAX_LAG as i64) {
            return Err(Error::data(format!("{date} lacks {MAX_LAG} days of history")));
        }
        self.similar_day(date)?;
        self.features(qh, date)
    }

    /// Like [`row`](Self::row) but without computing the similar-load match;
    /// call [`matched_day`](Self::matched_day) for `date` first.
    pub fn features(&self, qh: usize, date: NaiveDate) -> Result<Vec<f64>> {
        if date < self.data.first_date() + Duration::days(MAX_LAG as i64) {
            return Err(Error::data(format!("{date} lacks {MAX_LAG} days of history")));
        }
        let cols = design_columns(&self.kind, qh);
        cols.iter().map(|c| self.value(&c.source, date)).collect()
    }

    /// Training design at 1-based `qh` over the context's rows.
    pub fn design(&self, qh: usize) -> Result<DesignMatrix> {
        let columns = design_columns(&self.kind, qh);
        let target = self.data.get(self.kind.target.series())?;
        let p = columns.len();
        let mut x = Vec::with_capacity(self.rows.len() * p);
        let mut response = Vec::with_capacity(self.rows.len());
        for &t in &self.rows {
            for c in &columns {
                x.push(self.value(&c.source, t)?);
            }
            response.push(target.get(t, qh - 1).unwrap());
        }
        let mut warnings = self.warnings.clone();
        let n = self.rows.len();
        for (j, c) in columns.iter().enumerate() {
            if c.source.is_dummy() || n == 0 {
                continue;
            }
            let first = x[j];
            if (0..n).all(|i| x[i * p + j] == first) {
                warnings.push(format!("column {} is constant in the training window", c.name));
            }
        }
        Ok(DesignMatrix {
            qh,
            kind: self.kind,
            columns,
            dates: self.rows.clone(),
            x,
            response,
            warnings,
        })
    }
}

/// One-shot design for `qh` over `window` (see [`FeatureContext::new`]).
pub fn build_design(
    dataset: &Dataset,
    kind: FeatureSetKind,
    qh: usize,
    window: (NaiveDate, NaiveDate),
) -> Result<DesignMatrix> {
    if !(1..=SLOTS_PER_DAY).contains(&qh) {
        return Err(Error::Config(format!("qh {qh} outside 1..=96")));
    }
    FeatureContext::new(dataset, kind, window)?.design(qh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expert(target: Target) -> FeatureSetKind {
        FeatureSetKind::new(FeatureSet::Expert, true, target)
    }

    #[test]
    fn pv_columns_only_in_daytime() {
        let k = expert(Target::EpexQhAuction);
        let night = design_columns(&k, 10);
        assert!(!night.iter().any(|c| c.name.starts_with("PV_FCST")));
        let day = design_columns(&k, 40);
        assert_eq!(day.iter().filter(|c| c.name.starts_with("PV_FCST")).count(), 2);
        assert_eq!(day.len(), night.len() + 2);
    }

    #[test]
    fn expert_auction_column_golden_list() {
        let names: Vec<String> = design_columns(&expert(Target::EpexQhAuction), 10)
            .into_iter()
            .map(|c| c.name)
            .collect();
        let golden = [
            "EPEX_QH_AUCTION_lag1",
            "EPEX_QH_AUCTION_lag2",
            "EPEX_QH_AUCTION_lag7",
            "WIND_FCST_qh",
            "WIND_FCST_qh_minus_1h",
            "EPEX_DA_H_lag0",
            "EPEX_DA_H_lag1",
            "EPEX_DA_H_lag2",
            "EPEX_DA_H_lag7",
            "EXAA_QH_lag0",
            "EXAA_QH_lag1",
            "EXAA_QH_lag2",
            "EXAA_QH_lag7",
            "EPEX_QH_AUCTION_min_lag1",
            "EPEX_QH_AUCTION_max_lag1",
            "LOAD_FCST_qh",
            "LOAD_FCST_qh_minus_1h",
            "pca_EXAA_QH_lag0_pc1",
            "pca_EXAA_QH_lag0_pc2",
            "pca_EXAA_QH_lag0_pc3",
            "pca_EPEX_DA_H_lag0_pc1",
            "pca_EPEX_DA_H_lag0_pc2",
            "pca_EPEX_DA_H_lag0_pc3",
            "pca_EPEX_QH_AUCTION_lag1_pc1",
            "pca_EPEX_QH_AUCTION_lag1_pc2",
            "pca_EPEX_QH_AUCTION_lag1_pc3",
            "dow_mon",
            "dow_sat",
            "dow_sun",
            "similar_load_day_price",
        ];
        assert_eq!(names, golden);
    }

    #[test]
    fn full_column_counts_are_stable() {
        let full = FeatureSetKind::new(FeatureSet::Full, true, Target::EpexQhAuction);
        assert_eq!(design_columns(&full, 10).len(), 325);
        assert_eq!(design_columns(&full, 40).len(), 327);
        let id = FeatureSetKind::new(FeatureSet::Full, true, Target::EpexQhIdVwap);
        assert_eq!(design_columns(&id, 10).len(), 429);
        let no_exaa = FeatureSetKind::new(FeatureSet::Full, false, Target::EpexQhAuction);
        assert_eq!(design_columns(&no_exaa, 10).len(), 325 - 97);
    }

    #[test]
    fn ramp_feature_falls_back_in_first_hour() {
        let cols = design_columns(&expert(Target::EpexQhAuction), 3);
        let lagged = cols.iter().find(|c| c.name == "WIND_FCST_qh_minus_1h").unwrap();
        assert_eq!(
            lagged.source,
            FeatureSource::Value { series: SeriesId::WindFcst, day_lag: 0, slot: 2 }
        );
        let cols = design_columns(&expert(Target::EpexQhAuction), 9);
        let lagged = cols.iter().find(|c| c.name == "LOAD_FCST_qh_minus_1h").unwrap();
        assert_eq!(
            lagged.source,
            FeatureSource::Value { series: SeriesId::LoadFcst, day_lag: 0, slot: 4 }
        );
    }

    #[test]
    fn guard_examples() {
        let col = |series, day_lag| FeatureColumn {
            name: String::new(),
            source: FeatureSource::Value { series, day_lag, slot: 0 },
        };
        let t = Target::EpexQhIdVwap;
        assert!(decision_time_guard(t, &col(SeriesId::ExaaQh, 0)).unwrap());
        assert!(decision_time_guard(t, &col(SeriesId::EpexQhAuction, 0)).unwrap());
        assert!(!decision_time_guard(t, &col(SeriesId::EpexQhIdVwap, 0)).unwrap());
        assert!(decision_time_guard(t, &col(SeriesId::EpexQhIdVwap, 1)).unwrap());
        assert!(decision_time_guard(t, &col(SeriesId::Rebap, 1)).is_err());
    }

    #[test]
    fn every_design_column_is_causal() {
        for kind in [FeatureSet::Expert, FeatureSet::Full] {
            for target in Target::ALL {
                for enriched in [false, true] {
                    let k = FeatureSetKind::new(kind, enriched, target);
                    for qh in 1..=96 {
                        for c in design_columns(&k, qh) {
                            assert!(decision_time_guard(target, &c).unwrap(), "{}", c.name);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn similar_load_day_examples() {
        let zero = [0.0; 96];
        let one = [1.0; 96];
        let target = [0.4; 96];
        assert_eq!(similar_load_day(&[&zero, &one], &target).unwrap(), 0);
        assert_eq!(similar_load_day(&[&one, &target, &zero], &target).unwrap(), 1);
        let half = [0.5; 96];
        assert_eq!(similar_load_day(&[&zero, &one], &half).unwrap(), 1);
        assert!(similar_load_day(&[], &half).is_err());
    }

    fn shape(f: impl Fn(usize) -> f64) -> Vec<f64> {
        (0..96).map(f).collect()
    }

    #[test]
    fn pca_rank_one() {
        let base = shape(|j| (j as f64 / 10.0).sin() + 2.0);
        let days: Vec<Vec<f64>> = (1..=20).map(|k| base.iter().map(|v| v * k as f64).collect()).collect();
        let refs: Vec<&[f64]> = days.iter().map(Vec::as_slice).collect();
        let f = pca_fit(SeriesId::ExaaQh, &refs, 3).unwrap();
        assert_eq!(f.k(), 1);
        assert!(f.explained_variance_ratio[0] > 0.999);
        assert!(!f.warnings.is_empty());
        let norm: f64 = base.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cos: f64 = f.loadings[0].iter().zip(&base).map(|(a, b)| a * b).sum::<f64>() / norm;
        assert!((cos.abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pca_two_orthogonal_shapes() {
        let a = shape(|j| if j % 2 == 0 { 1.0 } else { -1.0 });
        let b = shape(|j| if (j / 2) % 2 == 0 { 1.0 } else { -1.0 });
        let days: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let (s, t) = ((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos());
                (0..96).map(|j| s * a[j] + t * b[j]).collect()
            })
            .collect();
        let refs: Vec<&[f64]> = days.iter().map(Vec::as_slice).collect();
        let f = pca_fit(SeriesId::ExaaQh, &refs, 3).unwrap();
        assert_eq!(f.k(), 2);
        for v in [&a, &b] {
            let norm2: f64 = v.iter().map(|x| x * x).sum();
            let proj: f64 = f
                .loadings
                .iter()
                .map(|l| l.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<f64>().powi(2))
                .sum();
            assert!((norm2 - proj).abs() / norm2 < 1e-8);
        }
        // orthonormal loadings with a positive dominant entry
        for (i, l) in f.loadings.iter().enumerate() {
            for (j, m) in f.loadings.iter().enumerate() {
                let dot: f64 = l.iter().zip(m.iter()).map(|(x, y)| x * y).sum();
                assert!((dot - (i == j) as u8 as f64).abs() < 1e-10);
            }
            let pivot = l.iter().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { *v } else { acc });
            assert!(pivot > 0.0);
        }
        let again = pca_fit(SeriesId::ExaaQh, &refs, 3).unwrap();
        assert_eq!(again, f);
    }

    #[test]
    fn pca_constant_days() {
        let days = vec![vec![5.0; 96]; 10];
        let refs: Vec<&[f64]> = days.iter().map(Vec::as_slice).collect();
        let f = pca_fit(SeriesId::ExaaQh, &refs, 3).unwrap();
        assert_eq!(f.k(), 0);
        assert_eq!(f.warnings.len(), 1);
    }
}
