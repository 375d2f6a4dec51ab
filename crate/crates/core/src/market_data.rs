//! Market and fundamental series on a daily × 96 quarter-hour grid.
//!
//! All series are gridded on Europe/Berlin wall-clock time. Input timestamps
//! must carry an explicit UTC offset so the two DST transition days can be
//! resolved:
//!
//! * fall-back day: the repeated hour is averaged slot by slot, the four
//!   affected slots are flagged in `gap_mask`;
//! * spring-forward day: the skipped hour has no observations, its four slots
//!   are flagged and filled by [`impute_gaps`].
//!
//! Hourly-native series (EPEX day-ahead, TSO wind and PV forecasts) may be
//! supplied hourly; they are widened with [`broadcast_hourly`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, NaiveDateTime, TimeZone, Timelike};
use chrono_tz::Europe::Berlin;
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of delivery quarter-hours in a normalized day.
pub const SLOTS_PER_DAY: usize = 96;

/// Minimum number of days in an assembled dataset (lag-7 features need 8).
pub const MIN_DATASET_DAYS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SeriesId {
    ExaaQh,
    EpexDaH,
    EpexQhAuction,
    EpexQhIdVwap,
    LoadFcst,
    WindFcst,
    PvFcst,
    Rebap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Unit {
    EurPerMwh,
    Mw,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::EurPerMwh => "EUR_PER_MWH",
            Unit::Mw => "MW",
        }
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EUR_PER_MWH" | "EUR/MWH" => Ok(Unit::EurPerMwh),
            "MW" => Ok(Unit::Mw),
            other => Err(Error::Schema(format!("unknown unit '{other}'"))),
        }
    }
}

impl SeriesId {
    pub const ALL: [SeriesId; 8] = [
        SeriesId::ExaaQh,
        SeriesId::EpexDaH,
        SeriesId::EpexQhAuction,
        SeriesId::EpexQhIdVwap,
        SeriesId::LoadFcst,
        SeriesId::WindFcst,
        SeriesId::PvFcst,
        SeriesId::Rebap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SeriesId::ExaaQh => "EXAA_QH",
            SeriesId::EpexDaH => "EPEX_DA_H",
            SeriesId::EpexQhAuction => "EPEX_QH_AUCTION",
            SeriesId::EpexQhIdVwap => "EPEX_QH_ID_VWAP",
            SeriesId::LoadFcst => "LOAD_FCST",
            SeriesId::WindFcst => "WIND_FCST",
            SeriesId::PvFcst => "PV_FCST",
            SeriesId::Rebap => "REBAP",
        }
    }

    pub fn unit(self) -> Unit {
        match self {
            SeriesId::LoadFcst | SeriesId::WindFcst | SeriesId::PvFcst => Unit::Mw,
            _ => Unit::EurPerMwh,
        }
    }

    pub fn is_hourly_native(self) -> bool {
        matches!(self, SeriesId::EpexDaH | SeriesId::WindFcst | SeriesId::PvFcst)
    }
}

impl fmt::Display for SeriesId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeriesId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        SeriesId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Schema(format!("unknown series id '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Hourly,
    QuarterHourly,
}

impl Resolution {
    pub fn slots_per_day(self) -> usize {
        match self {
            Resolution::Hourly => 24,
            Resolution::QuarterHourly => SLOTS_PER_DAY,
        }
    }
}

/// One series on a day-major grid. `values[d * slots + s]` holds slot `s`
/// (0-based) of day `start_date + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct QhSeries {
    pub id: SeriesId,
    pub start_date: NaiveDate,
    pub resolution: Resolution,
    pub values: Vec<f64>,
    /// True where the value was imputed or DST-adjusted rather than read.
    pub gap_mask: Vec<bool>,
}

impl QhSeries {
    /// A gap-free quarter-hourly series.
    pub fn from_values(id: SeriesId, start_date: NaiveDate, values: Vec<f64>) -> Result<Self> {
        if !values.len().is_multiple_of(SLOTS_PER_DAY) {
            return Err(Error::Integrity(format!(
                "{id}: {} values is not a whole number of 96-slot days",
                values.len()
            )));
        }
        let gap_mask = vec![false; values.len()];
        Ok(QhSeries {
            id,
            start_date,
            resolution: Resolution::QuarterHourly,
            values,
            gap_mask,
        })
    }

    pub fn slots_per_day(&self) -> usize {
        self.resolution.slots_per_day()
    }

    pub fn day_count(&self) -> usize {
        self.values.len() / self.slots_per_day()
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + Duration::days(self.day_count() as i64 - 1)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.day_count()).map(move |d| self.start_date + Duration::days(d as i64))
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.start_date).num_days();
        (d >= 0 && (d as usize) < self.day_count()).then_some(d as usize)
    }

    pub fn day(&self, index: usize) -> &[f64] {
        let n = self.slots_per_day();
        &self.values[index * n..(index + 1) * n]
    }

    pub fn day_at(&self, date: NaiveDate) -> Option<&[f64]> {
        self.day_index(date).map(|i| self.day(i))
    }

    /// Value at `date`, 0-based `slot`.
    pub fn get(&self, date: NaiveDate, slot: usize) -> Option<f64> {
        self.day_at(date).and_then(|d| d.get(slot).copied())
    }

    pub fn has_gaps(&self) -> bool {
        self.gap_mask.iter().any(|&g| g)
    }

    /// Sub-series restricted to `[first, last]`, which must lie inside the series.
    pub fn trimmed(&self, first: NaiveDate, last: NaiveDate) -> Result<QhSeries> {
        let (a, b) = match (self.day_index(first), self.day_index(last)) {
            (Some(a), Some(b)) if a <= b => (a, b),
            _ => {
                return Err(Error::data(format!(
                    "{}: range {first}..{last} outside {}..{}",
                    self.id,
                    self.start_date,
                    self.end_date()
                )))
            }
        };
        let n = self.slots_per_day();
        Ok(QhSeries {
            id: self.id,
            start_date: first,
            resolution: self.resolution,
            values: self.values[a * n..(b + 1) * n].to_vec(),
            gap_mask: self.gap_mask[a * n..(b + 1) * n].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvSchema {
    Long,
    Wide,
}

impl FromStr for CsvSchema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long" => Ok(CsvSchema::Long),
            "wide" => Ok(CsvSchema::Wide),
            other => Err(Error::Config(format!("unknown csv schema '{other}'"))),
        }
    }
}

/// Number of wall-clock quarter-hours on `date` in Europe/Berlin (92, 96 or 100).
pub fn local_day_slots(date: NaiveDate) -> usize {
    let start = local_midnight_utc(date);
    let end = local_midnight_utc(date + Duration::days(1));
    ((end - start).num_minutes() / 15) as usize
}

fn local_midnight_utc(date: NaiveDate) -> DateTime<Tz> {
    // Berlin transitions happen at 02:00/03:00, midnight is always unique.
    Berlin
        .from_local_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"))
        .single()
        .expect("Europe/Berlin midnight is unambiguous")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapReason {
    DstFallBackAverage,
    DstSpringForward,
    MissingInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputationRecord {
    pub series: SeriesId,
    pub date: NaiveDate,
    /// 1-based quarter-hour.
    pub qh: usize,
    pub reason: GapReason,
}

/// Explains every flagged slot of `series`, classifying by calendar position.
pub fn imputation_log(series: &QhSeries) -> Vec<ImputationRecord> {
    let n = series.slots_per_day();
    let per_hour = n / 24;
    let mut out = Vec::new();
    for (i, _) in series.gap_mask.iter().enumerate().filter(|(_, &g)| g) {
        let date = series.start_date + Duration::days((i / n) as i64);
        let slot = i % n;
        let hour = slot / per_hour;
        let reason = match local_day_slots(date) {
            100 if hour == 2 => GapReason::DstFallBackAverage,
            92 if hour == 2 => GapReason::DstSpringForward,
            _ => GapReason::MissingInput,
        };
        out.push(ImputationRecord {
            series: series.id,
            date,
            qh: slot * (SLOTS_PER_DAY / n) + 1,
            reason,
        });
    }
    out
}

/// Widen a 24-slot series to 96 slots by repeating each hour four times.
///
/// Returns the widened series and a flag that is `true` when the input was
/// already quarter-hourly (the input is returned unchanged).
pub fn broadcast_hourly(hourly: &QhSeries) -> Result<(QhSeries, bool)> {
    if hourly.resolution == Resolution::QuarterHourly {
        return Ok((hourly.clone(), true));
    }
    if hourly.values.is_empty() {
        return Err(Error::data(format!("{}: no hourly values", hourly.id)));
    }
    let widen = |v: &[f64]| v.iter().flat_map(|&x| [x; 4]).collect::<Vec<_>>();
    let values = widen(&hourly.values);
    let gap_mask = hourly.gap_mask.iter().flat_map(|&g| [g; 4]).collect();
    Ok((
        QhSeries {
            id: hourly.id,
            start_date: hourly.start_date,
            resolution: Resolution::QuarterHourly,
            values,
            gap_mask,
        },
        false,
    ))
}

/// Fill non-finite gap slots in chronological slot order.
///
/// Interior gaps are linearly interpolated between the nearest valued
/// neighbours; leading and trailing gaps take the nearest value. Slots that
/// already hold a value (e.g. an averaged DST hour) are used as anchors and
/// left as they are.
pub fn impute_gaps(series: &QhSeries) -> Result<QhSeries> {
    let mut out = series.clone();
    for (v, &g) in out.values.iter().zip(&out.gap_mask) {
        if !g && !v.is_finite() {
            return Err(Error::Integrity(format!(
                "{}: non-finite value in a slot not marked as gap",
                series.id
            )));
        }
    }
    let anchors: Vec<usize> = (0..out.values.len())
        .filter(|&i| out.values[i].is_finite())
        .collect();
    if anchors.is_empty() {
        return Err(Error::data(format!("{}: series consists only of gaps", series.id)));
    }
    let first = anchors[0];
    let last = *anchors.last().unwrap();
    let v = &mut out.values;
    for i in 0..first {
        v[i] = v[first];
    }
    for i in last + 1..v.len() {
        v[i] = v[last];
    }
    for w in anchors.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a < 2 {
            continue;
        }
        let (ya, yb) = (v[a], v[b]);
        let span = (b - a) as f64;
        for (k, x) in v[a + 1..b].iter_mut().enumerate() {
            *x = ya + (yb - ya) * (k + 1) as f64 / span;
        }
    }
    Ok(out)
}

/// A set of series trimmed to a common inclusive date range.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    series: BTreeMap<SeriesId, QhSeries>,
    first: NaiveDate,
    last: NaiveDate,
}

impl Dataset {
    pub fn first_date(&self) -> NaiveDate {
        self.first
    }

    pub fn last_date(&self) -> NaiveDate {
        self.last
    }

    pub fn day_count(&self) -> usize {
        (self.last - self.first).num_days() as usize + 1
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> {
        let first = self.first;
        (0..self.day_count()).map(move |d| first + Duration::days(d as i64))
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.first).num_days();
        (d >= 0 && (d as usize) < self.day_count()).then_some(d as usize)
    }

    pub fn contains(&self, id: SeriesId) -> bool {
        self.series.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = SeriesId> + '_ {
        self.series.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &QhSeries> {
        self.series.values()
    }

    pub fn get(&self, id: SeriesId) -> Result<&QhSeries> {
        self.series
            .get(&id)
            .ok_or_else(|| Error::data(format!("required series {id} missing from dataset")))
    }

    pub fn require(&self, ids: &[SeriesId]) -> Result<()> {
        let missing: Vec<_> = ids
            .iter()
            .filter(|id| !self.contains(**id))
            .map(|id| id.as_str())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::data(format!("missing required series: {}", missing.join(", "))))
        }
    }

    /// Replace every series through `f`, keeping the date range.
    pub fn map_series<F>(&self, mut f: F) -> Result<Dataset>
    where
        F: FnMut(&QhSeries) -> Result<QhSeries>,
    {
        let mut series = BTreeMap::new();
        for s in self.series.values() {
            let mapped = f(s)?;
            if mapped.start_date != self.first || mapped.day_count() != self.day_count() {
                return Err(Error::Integrity(format!("{}: mapped series changed range", s.id)));
            }
            series.insert(mapped.id, mapped);
        }
        Ok(Dataset {
            series,
            first: self.first,
            last: self.last,
        })
    }

    pub fn imputation_log(&self) -> Vec<ImputationRecord> {
        self.series.values().flat_map(imputation_log).collect()
    }
}

/// Trim series to their common date range. Hourly series are broadcast first.
pub fn assemble(series_list: Vec<QhSeries>) -> Result<Dataset> {
    if series_list.is_empty() {
        return Err(Error::data("no series to assemble"));
    }
    let mut widened = Vec::with_capacity(series_list.len());
    for s in series_list {
        widened.push(broadcast_hourly(&s)?.0);
    }
    let first = widened.iter().map(|s| s.start_date).max().unwrap();
    let last = widened.iter().map(|s| s.end_date()).min().unwrap();
    if first > last {
        return Err(Error::data("empty date intersection"));
    }
    let days = (last - first).num_days() as usize + 1;
    if days < MIN_DATASET_DAYS {
        return Err(Error::data(format!(
            "date intersection {first}..{last} has {days} days, at least {MIN_DATASET_DAYS} required"
        )));
    }
    let mut series = BTreeMap::new();
    for s in widened {
        let id = s.id;
        if series.insert(id, s.trimmed(first, last)?).is_some() {
            return Err(Error::Integrity(format!("series {id} supplied twice")));
        }
    }
    Ok(Dataset { series, first, last })
}

pub fn ingest_csv(path: &Path, schema: CsvSchema) -> Result<Vec<QhSeries>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match schema {
        CsvSchema::Long => read_long(file, None),
        CsvSchema::Wide => read_wide(file),
    }
    .map_err(|e| match e {
        Error::Csv { source, .. } => Error::csv(path, source),
        other => other,
    })
}

#[derive(Debug, Default)]
struct SlotObs {
    // first and second occurrence of an ambiguous wall-clock time
    first: Option<f64>,
    second: Option<f64>,
}

fn parse_timestamp(raw: &str, line: usize) -> Result<DateTime<FixedOffset>> {
    let raw = raw.trim();
    DateTime::parse_from_rfc3339(raw)
        .or_else(|_| DateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M%:z"))
        .or_else(|_| DateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%:z"))
        .map_err(|e| Error::Parse {
            line,
            message: format!("malformed timestamp '{raw}': {e}"),
        })
}

/// Read the canonical long format `timestamp,series,value[,unit]`.
///
/// `range` forces the grid extent; otherwise it spans the first to the last
/// observed local date of each series.
pub fn read_long<R: Read>(reader: R, range: Option<(NaiveDate, NaiveDate)>) -> Result<Vec<QhSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv("<long csv>", e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (ts_col, id_col, val_col) = match (col("timestamp"), col("series"), col("value")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(Error::Schema(
                "long csv header must contain timestamp,series,value".into(),
            ))
        }
    };
    let unit_col = col("unit");

    // (series) -> (date, hour, quarter) -> obs
    type Cells = BTreeMap<(NaiveDate, u32, u32), SlotObs>;
    let mut per_series: BTreeMap<SeriesId, (Cells, bool)> = BTreeMap::new();

    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let ts = parse_timestamp(field(ts_col), line)?;
        let id: SeriesId = field(id_col).parse().map_err(|e: Error| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if let Some(uc) = unit_col {
            let unit: Unit = field(uc).parse()?;
            if unit != id.unit() {
                return Err(Error::Schema(format!(
                    "line {line}: unit {} does not match {id} ({})",
                    unit.as_str(),
                    id.unit().as_str()
                )));
            }
        }
        let raw = field(val_col);
        let value = if raw.is_empty() || raw.eq_ignore_ascii_case("nan") {
            None
        } else {
            Some(raw.parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("bad value '{raw}': {e}"),
            })?)
        };
        if let Some(v) = value {
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value '{raw}'"),
                });
            }
        }

        let local = ts.with_timezone(&Berlin);
        if local.second() != 0 || local.minute() % 15 != 0 {
            return Err(Error::Parse {
                line,
                message: format!("timestamp '{}' is not on the quarter-hour grid", field(ts_col)),
            });
        }
        let naive = local.naive_local();
        let second_occurrence = match Berlin.from_local_datetime(&naive) {
            chrono::LocalResult::Ambiguous(_, later) => later == local,
            _ => false,
        };

        let (cells, quarter_hourly) = per_series.entry(id).or_insert_with(|| (BTreeMap::new(), false));
        if local.minute() != 0 {
            *quarter_hourly = true;
        }
        let key = (naive.date(), naive.hour(), naive.minute() / 15);
        let obs = cells.entry(key).or_default();
        let slot_ref = if second_occurrence { &mut obs.second } else { &mut obs.first };
        if slot_ref.is_some() {
            return Err(Error::Integrity(format!(
                "line {line}: duplicate observation for {id} at {}",
                field(ts_col)
            )));
        }
        // Missing values still occupy the key so duplicates are caught.
        *slot_ref = Some(value.unwrap_or(f64::NAN));
    }

    let mut out = Vec::new();
    for (id, (cells, qh_seen)) in per_series {
        let resolution = if qh_seen || !id.is_hourly_native() {
            Resolution::QuarterHourly
        } else {
            Resolution::Hourly
        };
        let (first, last) = match range {
            Some(r) => r,
            None => {
                let first = cells.keys().next().unwrap().0;
                let last = cells.keys().next_back().unwrap().0;
                (first, last)
            }
        };
        let days = (last - first).num_days() + 1;
        if days <= 0 {
            return Err(Error::data(format!("{id}: empty date range")));
        }
        let n = resolution.slots_per_day();
        let mut values = vec![f64::NAN; days as usize * n];
        let mut gap_mask = vec![true; days as usize * n];
        for ((date, hour, quarter), obs) in &cells {
            if *date < first || *date > last {
                continue;
            }
            if resolution == Resolution::Hourly && *quarter != 0 {
                continue;
            }
            let d = (*date - first).num_days() as usize;
            let slot = match resolution {
                Resolution::Hourly => *hour as usize,
                Resolution::QuarterHourly => (*hour * 4 + *quarter) as usize,
            };
            let idx = d * n + slot;
            let observed = [obs.first, obs.second];
            let finite: Vec<f64> = observed.iter().flatten().copied().filter(|v| v.is_finite()).collect();
            match (obs.first.is_some() && obs.second.is_some(), finite.as_slice()) {
                (true, [a, b]) => {
                    values[idx] = 0.5 * (a + b);
                    gap_mask[idx] = true;
                }
                (true, [a]) => {
                    values[idx] = *a;
                    gap_mask[idx] = true;
                }
                (false, [a]) => {
                    values[idx] = *a;
                    gap_mask[idx] = false;
                }
                _ => {}
            }
        }
        let series = QhSeries {
            id,
            start_date: first,
            resolution,
            values,
            gap_mask,
        };
        let series = broadcast_hourly(&series)?.0;
        out.push(impute_gaps(&series)?);
    }
    Ok(out)
}

/// Read the wide convenience format `date,qh,<series...>` (qh in 1..=96,
/// already on the wall-clock grid).
pub fn read_wide<R: Read>(reader: R) -> Result<Vec<QhSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv("<wide csv>", e))?.clone();
    if headers.len() < 3
        || !headers[0].eq_ignore_ascii_case("date")
        || !headers[1].eq_ignore_ascii_case("qh")
    {
        return Err(Error::Schema("wide csv header must be date,qh,<series...>".into()));
    }
    let ids: Vec<SeriesId> = headers.iter().skip(2).map(str::parse).collect::<Result<_>>()?;
    let mut rows: BTreeMap<(NaiveDate, usize), Vec<Option<f64>>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            message: format!("bad date '{}': {e}", &rec[0]),
        })?;
        let qh: usize = rec[1].parse().map_err(|e| Error::Parse {
            line,
            message: format!("bad qh '{}': {e}", &rec[1]),
        })?;
        if !(1..=SLOTS_PER_DAY).contains(&qh) {
            return Err(Error::Parse {
                line,
                message: format!("qh {qh} outside 1..=96"),
            });
        }
        let mut cells = Vec::with_capacity(ids.len());
        for c in 2..headers.len() {
            let raw = rec.get(c).unwrap_or("");
            cells.push(if raw.is_empty() {
                None
            } else {
                Some(raw.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("bad value '{raw}': {e}"),
                })?)
            });
        }
        if rows.insert((date, qh), cells).is_some() {
            return Err(Error::Integrity(format!("line {line}: duplicate row {date} qh {qh}")));
        }
    }
    let Some(((first, _), _)) = rows.first_key_value() else {
        return Err(Error::data("wide csv has no rows"));
    };
    let first = *first;
    let last = rows.last_key_value().unwrap().0 .0;
    let days = (last - first).num_days() as usize + 1;
    let mut out = Vec::new();
    for (k, id) in ids.iter().enumerate() {
        let mut values = vec![f64::NAN; days * SLOTS_PER_DAY];
        let mut gap_mask = vec![true; days * SLOTS_PER_DAY];
        for ((date, qh), cells) in &rows {
            if let Some(v) = cells[k].filter(|v| v.is_finite()) {
                let idx = (*date - first).num_days() as usize * SLOTS_PER_DAY + qh - 1;
                values[idx] = v;
                gap_mask[idx] = false;
            }
        }
        let s = QhSeries {
            id: *id,
            start_date: first,
            resolution: Resolution::QuarterHourly,
            values,
            gap_mask,
        };
        out.push(impute_gaps(&s)?);
    }
    Ok(out)
}

/// Write a series in the long format with Berlin offsets.
///
/// Imputed slots are omitted (they are re-derived on ingest); a repeated
/// fall-back hour is written under both offsets.
pub fn write_long<W: Write>(series: &QhSeries, writer: W) -> Result<()> {
    let (series, _) = broadcast_hourly(series)?;
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::csv(format!("<{}>", series.id), e);
    w.write_record(["timestamp", "series", "value"]).map_err(io)?;
    for (d, date) in series.dates().enumerate() {
        for slot in 0..SLOTS_PER_DAY {
            let idx = d * SLOTS_PER_DAY + slot;
            let naive: NaiveDateTime = date.and_hms_opt(0, 0, 0).unwrap() + Duration::minutes(15 * slot as i64);
            let stamps: Vec<DateTime<Tz>> = match Berlin.from_local_datetime(&naive) {
                chrono::LocalResult::Single(t) if !series.gap_mask[idx] => vec![t],
                chrono::LocalResult::Ambiguous(a, b) => vec![a, b],
                _ => vec![],
            };
            for t in stamps {
                w.write_record([
                    t.format("%Y-%m-%dT%H:%M:%S%:z").to_string(),
                    series.id.as_str().to_string(),
                    series.values[idx].to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(format!("<{}>", series.id), e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub id: SeriesId,
    pub unit: Unit,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub series: Vec<SeriesEntry>,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub imputation_log: Vec<ImputationRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Persist as one long CSV per series plus `manifest.json`.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for s in dataset.iter() {
        let file = format!("{}.csv", s.id);
        let path = dir.join(&file);
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_long(s, std::io::BufWriter::new(f))?;
        entries.push(SeriesEntry {
            id: s.id,
            unit: s.id.unit(),
            file,
        });
    }
    let manifest = DatasetManifest {
        series: entries,
        first_date: dataset.first_date(),
        last_date: dataset.last_date(),
        imputation_log: dataset.imputation_log(),
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    let mut series = Vec::new();
    for entry in &manifest.series {
        let p = dir.join(&entry.file);
        let f = File::open(&p).map_err(|e| Error::io(&p, e))?;
        let mut read = read_long(f, Some((manifest.first_date, manifest.last_date)))?;
        match read.iter().position(|s| s.id == entry.id) {
            Some(i) => series.push(read.swap_remove(i)),
            None => return Err(Error::Integrity(format!("{}: no rows for {}", p.display(), entry.id))),
        }
    }
    assemble(series)
}

/// ISO weekday number, Monday = 1.
pub fn weekday_number(date: NaiveDate) -> u32 {
    date.weekday().number_from_monday()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn long_rows(date: NaiveDate, id: &str, f: impl Fn(usize) -> f64) -> String {
        let mut s = String::from("timestamp,series,value\n");
        let start = local_midnight_utc(date).with_timezone(&chrono::Utc);
        let n = local_day_slots(date);
        for i in 0..n {
            let t = (start + Duration::minutes(15 * i as i64)).with_timezone(&Berlin);
            s.push_str(&format!("{},{id},{}\n", t.format("%Y-%m-%dT%H:%M:%S%:z"), f(i)));
        }
        s
    }

    #[test]
    fn complete_day_has_no_gaps() {
        let csv = long_rows(d(2017, 1, 5), "EXAA_QH", |i| i as f64);
        let s = read_long(csv.as_bytes(), None).unwrap().remove(0);
        assert_eq!(s.day_count(), 1);
        assert_eq!(s.values.len(), 96);
        assert!(!s.has_gaps());
        assert_eq!(s.values[95], 95.0);
    }

    #[test]
    fn dst_day_lengths() {
        assert_eq!(local_day_slots(d(2017, 3, 26)), 92);
        assert_eq!(local_day_slots(d(2017, 10, 29)), 100);
        assert_eq!(local_day_slots(d(2017, 6, 1)), 96);
    }

    #[test]
    fn fall_back_hour_is_averaged_per_slot() {
        // Raw slots 0..100 with value = raw index; local 02:00-02:45 appears at
        // raw 8..11 (CEST) and 12..15 (CET).
        let csv = long_rows(d(2017, 10, 29), "EPEX_QH_AUCTION", |i| i as f64);
        let s = read_long(csv.as_bytes(), None).unwrap().remove(0);
        assert_eq!(s.values.len(), 96);
        for k in 0..4 {
            assert_eq!(s.values[8 + k], (8 + k + 12 + k) as f64 / 2.0);
            assert!(s.gap_mask[8 + k]);
        }
        assert!(!s.gap_mask[7] && !s.gap_mask[12]);
        assert_eq!(s.values[12], 16.0);
        let log = imputation_log(&s);
        assert_eq!(log.len(), 4);
        assert!(log.iter().all(|r| r.reason == GapReason::DstFallBackAverage));
    }

    #[test]
    fn spring_forward_hour_is_imputed() {
        let csv = long_rows(d(2017, 3, 26), "EPEX_QH_AUCTION", |i| i as f64);
        let s = read_long(csv.as_bytes(), None).unwrap().remove(0);
        assert_eq!(s.values.len(), 96);
        let flagged: Vec<usize> = (0..96).filter(|&i| s.gap_mask[i]).collect();
        assert_eq!(flagged, vec![8, 9, 10, 11]);
        // raw 7 -> 01:45 value 7, raw 8 -> 03:00 value 8; interpolated between
        assert_eq!(s.values[7], 7.0);
        assert_eq!(s.values[12], 8.0);
        for k in 0..4 {
            assert!((s.values[8 + k] - (7.0 + (k + 1) as f64 / 5.0)).abs() < 1e-12);
        }
        assert!(imputation_log(&s)
            .iter()
            .all(|r| r.reason == GapReason::DstSpringForward));
    }

    #[test]
    fn duplicate_slot_rejected() {
        let csv = "timestamp,series,value\n2017-01-05T00:00:00+01:00,EXAA_QH,1\n2017-01-04T23:00:00+00:00,EXAA_QH,2\n";
        match read_long(csv.as_bytes(), None) {
            Err(Error::Integrity(msg)) => assert!(msg.contains("line 3")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_timestamp_reports_line() {
        let csv = "timestamp,series,value\n2017-01-05T00:00:00+01:00,EXAA_QH,1\nyesterday,EXAA_QH,2\n";
        match read_long(csv.as_bytes(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unit_mismatch_is_schema_error() {
        let csv = "timestamp,series,value,unit\n2017-01-05T00:00:00+01:00,LOAD_FCST,1,EUR_PER_MWH\n";
        assert!(matches!(read_long(csv.as_bytes(), None), Err(Error::Schema(_))));
    }

    #[test]
    fn hourly_series_is_broadcast_on_ingest() {
        let mut csv = String::from("timestamp,series,value\n");
        for h in 0..24 {
            csv.push_str(&format!("2017-01-05T{h:02}:00:00+01:00,EPEX_DA_H,{}\n", 10 + h));
        }
        let s = read_long(csv.as_bytes(), None).unwrap().remove(0);
        assert_eq!(s.resolution, Resolution::QuarterHourly);
        assert_eq!(&s.values[0..5], &[10.0, 10.0, 10.0, 10.0, 11.0]);
        assert!(!s.has_gaps());
    }

    #[test]
    fn broadcast_examples() {
        let hourly = QhSeries {
            id: SeriesId::EpexDaH,
            start_date: d(2017, 1, 1),
            resolution: Resolution::Hourly,
            values: (0..24).map(|h| 42.0 + h as f64).collect(),
            gap_mask: vec![false; 24],
        };
        let (wide, noop) = broadcast_hourly(&hourly).unwrap();
        assert!(!noop);
        assert_eq!(&wide.values[0..4], &[42.0; 4]);
        for h in 0..24 {
            assert!(wide.values[h * 4..h * 4 + 4].iter().all(|&v| v == 42.0 + h as f64));
        }
        let (again, noop) = broadcast_hourly(&wide).unwrap();
        assert!(noop);
        assert_eq!(again, wide);

        let empty = QhSeries {
            values: vec![],
            gap_mask: vec![],
            ..hourly
        };
        let err = broadcast_hourly(&empty).unwrap_err();
        assert!(err.to_string().contains("no hourly values"));
    }

    fn gapped(values: &[Option<f64>]) -> QhSeries {
        QhSeries {
            id: SeriesId::LoadFcst,
            start_date: d(2017, 1, 1),
            resolution: Resolution::QuarterHourly,
            values: values.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            gap_mask: values.iter().map(Option::is_none).collect(),
        }
    }

    #[test]
    fn impute_examples() {
        let s = impute_gaps(&gapped(&[Some(10.0), None, Some(14.0)])).unwrap();
        assert_eq!(s.values, vec![10.0, 12.0, 14.0]);
        let s = impute_gaps(&gapped(&[None, Some(5.0), Some(6.0)])).unwrap();
        assert_eq!(s.values, vec![5.0, 5.0, 6.0]);
        let s = impute_gaps(&gapped(&[Some(0.0), None, None, None, Some(8.0)])).unwrap();
        assert_eq!(s.values, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(s.gap_mask, vec![false, true, true, true, false]);
        assert!(impute_gaps(&gapped(&[None, None])).is_err());
    }

    fn flat(id: SeriesId, first: NaiveDate, days: usize) -> QhSeries {
        QhSeries::from_values(id, first, vec![1.0; days * 96]).unwrap()
    }

    #[test]
    fn assemble_intersects_ranges() {
        let a = flat(SeriesId::ExaaQh, d(2017, 1, 1), 31);
        let b = flat(SeriesId::EpexDaH, d(2017, 1, 10), 32);
        let ds = assemble(vec![a, b]).unwrap();
        assert_eq!(ds.first_date(), d(2017, 1, 10));
        assert_eq!(ds.last_date(), d(2017, 1, 31));
        assert!(ds.iter().all(|s| s.day_count() == 22));

        let a = flat(SeriesId::ExaaQh, d(2017, 1, 1), 10);
        let b = flat(SeriesId::EpexDaH, d(2017, 2, 1), 10);
        let err = assemble(vec![a, b]).unwrap_err();
        assert!(err.to_string().contains("empty date intersection"));

        let a = flat(SeriesId::ExaaQh, d(2017, 1, 1), 5);
        assert!(assemble(vec![a]).is_err());
    }

    #[test]
    fn wide_reader() {
        let mut csv = String::from("date,qh,EXAA_QH,LOAD_FCST\n");
        for qh in 1..=96 {
            let load = if qh == 2 { String::new() } else { format!("{}", qh * 10) };
            csv.push_str(&format!("2017-01-05,{qh},{}.5,{load}\n", qh));
        }
        let series = read_wide(csv.as_bytes()).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].values[0], 1.5);
        assert_eq!(series[1].values[1], 20.0);
        assert!(series[1].gap_mask[1]);
    }
}
