//! Trading strategies on the two quarter-hourly venues and their accounting.
//!
//! Venue 1 is the QH auction, venue 2 the intraday VWAP. Prices are in
//! EUR/MWh; a quarter-hour position of `v` MW moves `v * 0.25` MWh.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::backtest::ForecastPanel;
use crate::error::{Error, Result};
use crate::evaluation::{sharpe, std_dev, SdConvention};
use crate::features::Target;
use crate::market_data::{Dataset, SeriesId, SLOTS_PER_DAY};

pub const QH_HOURS: f64 = 0.25;
pub const DEFAULT_GAMMA: f64 = 2.0;
pub const DEFAULT_VOLUME_MW: f64 = 50.0;
pub const GOLDEN_TOLERANCE: f64 = 1e-10;
pub const MIN_MOMENT_WINDOW: usize = 30;

pub type SlotKey = (NaiveDate, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Buy => "Buy",
            Side::Sell => "Sell",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    NaiveExaa,
    NaiveAuqh,
    NaiveIdqh,
    NaiveRebap,
    PerfectBuy,
    PerfectSell,
    BaseBuy,
    BaseSell,
    MeanVarBuy,
    MeanVarSell,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 10] = [
        StrategyKind::NaiveExaa,
        StrategyKind::NaiveAuqh,
        StrategyKind::NaiveIdqh,
        StrategyKind::NaiveRebap,
        StrategyKind::PerfectBuy,
        StrategyKind::PerfectSell,
        StrategyKind::BaseBuy,
        StrategyKind::BaseSell,
        StrategyKind::MeanVarBuy,
        StrategyKind::MeanVarSell,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::NaiveExaa => "Naive_EXAA",
            StrategyKind::NaiveAuqh => "Naive_AUQH",
            StrategyKind::NaiveIdqh => "Naive_IDQH",
            StrategyKind::NaiveRebap => "Naive_REBAP",
            StrategyKind::PerfectBuy => "Perfect_Buy",
            StrategyKind::PerfectSell => "Perfect_Sell",
            StrategyKind::BaseBuy => "Base_Buy",
            StrategyKind::BaseSell => "Base_Sell",
            StrategyKind::MeanVarBuy => "MeanVar_Buy",
            StrategyKind::MeanVarSell => "MeanVar_Sell",
        }
    }

    /// Side used for cash-flow signs and savings; naive strategies count as
    /// purchases.
    pub fn side(self) -> Side {
        match self {
            StrategyKind::PerfectSell | StrategyKind::BaseSell | StrategyKind::MeanVarSell => Side::Sell,
            _ => Side::Buy,
        }
    }

    pub fn needs_forecasts(self) -> bool {
        matches!(
            self,
            StrategyKind::BaseBuy | StrategyKind::BaseSell | StrategyKind::MeanVarBuy | StrategyKind::MeanVarSell
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

/// Where a slot's position went.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Position {
    Venue(SeriesId),
    /// Weight on the intraday VWAP; the remainder goes to the QH auction.
    Weight(f64),
}

impl Position {
    pub fn w2(&self) -> f64 {
        match self {
            Position::Venue(SeriesId::EpexQhIdVwap) => 1.0,
            Position::Venue(_) => 0.0,
            Position::Weight(w) => *w,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Position::Venue(id) => f.write_str(id.as_str()),
            Position::Weight(w) => write!(f, "{w}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub date: NaiveDate,
    pub qh: usize,
    pub position: Position,
    pub price: f64,
    pub volume_mw: f64,
    pub cashflow_eur: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyLedger {
    pub name: String,
    pub kind: StrategyKind,
    pub forecast_source: Option<String>,
    pub entries: Vec<LedgerEntry>,
    /// `(date, qh, reason)` of slots without a position.
    pub skipped: Vec<(NaiveDate, usize, String)>,
}

impl StrategyLedger {
    fn new(kind: StrategyKind, source: Option<&str>) -> Self {
        let name = match source {
            Some(s) => format!("{kind}_{s}"),
            None => kind.to_string(),
        };
        StrategyLedger {
            name,
            kind,
            forecast_source: source.map(String::from),
            entries: Vec::new(),
            skipped: Vec::new(),
        }
    }

    fn push(&mut self, key: SlotKey, position: Position, price: f64, volume: f64) {
        let sign = match self.kind.side() {
            Side::Buy => -1.0,
            Side::Sell => 1.0,
        };
        self.entries.push(LedgerEntry {
            date: key.0,
            qh: key.1,
            position,
            price,
            volume_mw: volume,
            cashflow_eur: sign * price * volume * QH_HOURS,
        });
    }

    pub fn side(&self) -> Side {
        self.kind.side()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.price).collect()
    }

    pub fn keys(&self) -> BTreeSet<SlotKey> {
        self.entries.iter().map(|e| (e.date, e.qh)).collect()
    }

    /// Keep only the slots in `keys`.
    pub fn restricted(&self, keys: &BTreeSet<SlotKey>) -> StrategyLedger {
        let mut out = self.clone();
        out.entries.retain(|e| keys.contains(&(e.date, e.qh)));
        out
    }

    pub fn with_volume(&self, volume: f64) -> StrategyLedger {
        let mut out = self.clone();
        let sign = match self.side() {
            Side::Buy => -1.0,
            Side::Sell => 1.0,
        };
        for e in &mut out.entries {
            e.volume_mw = volume;
            e.cashflow_eur = sign * e.price * volume * QH_HOURS;
        }
        out
    }
}

/// Slots common to every ledger.
pub fn common_slots(ledgers: &[StrategyLedger]) -> BTreeSet<SlotKey> {
    let mut iter = ledgers.iter();
    let Some(first) = iter.next() else {
        return BTreeSet::new();
    };
    let mut keys = first.keys();
    for l in iter {
        let other = l.keys();
        keys.retain(|k| other.contains(k));
    }
    keys
}

/// Realized prices of both venues keyed by slot, read from the panel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Realized {
    pub auction: BTreeMap<SlotKey, f64>,
    pub intraday: BTreeMap<SlotKey, f64>,
}

impl Realized {
    pub fn from_panel(panel: &ForecastPanel) -> Self {
        let mut out = Realized::default();
        for r in &panel.rows {
            let map = match r.target {
                Target::EpexQhAuction => &mut out.auction,
                Target::EpexQhIdVwap => &mut out.intraday,
            };
            map.insert((r.date, r.qh), r.realized);
        }
        out
    }
}

/// Price of `series` at every (date, qh) of `keys` from the raw dataset.
pub fn dataset_prices(data: &Dataset, series: SeriesId, keys: &BTreeSet<SlotKey>) -> Result<BTreeMap<SlotKey, f64>> {
    let s = data.get(series)?;
    let mut out = BTreeMap::new();
    for &(d, qh) in keys {
        if let Some(v) = s.get(d, qh - 1).filter(|v| v.is_finite()) {
            out.insert((d, qh), v);
        }
    }
    Ok(out)
}

/// Always trade at `prices` (a single-venue benchmark).
pub fn naive_strategy(kind: StrategyKind, venue: SeriesId, prices: &BTreeMap<SlotKey, f64>, volume: f64) -> StrategyLedger {
    let mut l = StrategyLedger::new(kind, None);
    for (&k, &p) in prices {
        l.push(k, Position::Venue(venue), p, volume);
    }
    l
}

fn pick(side: Side, a: f64, b: f64) -> bool {
    // true selects venue 2; ties stay on venue 1
    match side {
        Side::Buy => b < a,
        Side::Sell => b > a,
    }
}

/// Buy at the realized minimum or sell at the realized maximum.
pub fn perfect_strategy(realized: &Realized, side: Side, volume: f64) -> StrategyLedger {
    let kind = match side {
        Side::Buy => StrategyKind::PerfectBuy,
        Side::Sell => StrategyKind::PerfectSell,
    };
    let mut l = StrategyLedger::new(kind, None);
    for (&k, &a) in &realized.auction {
        match realized.intraday.get(&k) {
            Some(&b) => {
                if pick(side, a, b) {
                    l.push(k, Position::Venue(SeriesId::EpexQhIdVwap), b, volume);
                } else {
                    l.push(k, Position::Venue(SeriesId::EpexQhAuction), a, volume);
                }
            }
            None => l.skipped.push((k.0, k.1, "no intraday realization".into())),
        }
    }
    l
}

/// ((predicted auction, predicted intraday), (realized auction, realized intraday)).
type PairedSlot = ((f64, f64), (f64, f64));

/// Forecast pairs (auction, intraday) of `source` with their realizations.
fn forecast_pairs(panel: &ForecastPanel, source: &str) -> BTreeMap<SlotKey, PairedSlot> {
    let au = panel.lookup(source, Target::EpexQhAuction);
    let id = panel.lookup(source, Target::EpexQhIdVwap);
    au.iter()
        .filter_map(|(k, a)| {
            id.get(k)
                .map(|b| (*k, ((a.prediction, b.prediction), (a.realized, b.realized))))
        })
        .collect()
}

/// Trade in the venue with the better forecast: lower for buying, higher
/// for selling. Forecast ties go to the QH auction.
pub fn base_strategy(panel: &ForecastPanel, source: &str, side: Side, volume: f64) -> Result<StrategyLedger> {
    let kind = match side {
        Side::Buy => StrategyKind::BaseBuy,
        Side::Sell => StrategyKind::BaseSell,
    };
    let pairs = forecast_pairs(panel, source);
    if pairs.is_empty() {
        return Err(Error::data(format!("{source} has no forecasts for both venues")));
    }
    let mut l = StrategyLedger::new(kind, Some(source));
    for (k, ((fa, fb), (ra, rb))) in pairs {
        if pick(side, fa, fb) {
            l.push(k, Position::Venue(SeriesId::EpexQhIdVwap), rb, volume);
        } else {
            l.push(k, Position::Venue(SeriesId::EpexQhAuction), ra, volume);
        }
    }
    Ok(l)
}

/// Share of untied slots where the Base sell strategy picked the venue with
/// the higher realized price.
pub fn base_hit_rate(panel: &ForecastPanel, source: &str) -> Result<(f64, usize)> {
    let pairs = forecast_pairs(panel, source);
    let ledger = base_strategy(panel, source, Side::Sell, 1.0)?;
    let mut hits = 0usize;
    let mut n = 0usize;
    for e in &ledger.entries {
        let ((fa, fb), (ra, rb)) = pairs[&(e.date, e.qh)];
        if fa == fb || ra == rb {
            continue;
        }
        n += 1;
        if e.price == ra.max(rb) {
            hits += 1;
        }
    }
    if n == 0 {
        return Err(Error::data("no untied slots"));
    }
    Ok((hits as f64 / n as f64, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub var1: f64,
    pub var2: f64,
    pub cov: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanVarInputs {
    pub mu1: f64,
    pub mu2: f64,
    pub moments: Moments,
    pub gamma: f64,
}

impl MeanVarInputs {
    pub fn validate(&self) -> Result<()> {
        let m = self.moments;
        let finite = [self.mu1, self.mu2, m.var1, m.var2, m.cov, self.gamma].iter().all(|v| v.is_finite());
        if !finite || m.var1 < 0.0 || m.var2 < 0.0 || !(self.gamma > 0.0) {
            return Err(Error::data(format!("invalid mean-variance inputs {self:?}")));
        }
        if m.cov.abs() > (m.var1 * m.var2).sqrt() * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::data(format!("|cov| exceeds σ1σ2 in {self:?}")));
        }
        Ok(())
    }

    pub fn expected(&self, w2: f64) -> f64 {
        self.mu1 + w2 * (self.mu2 - self.mu1)
    }

    pub fn variance(&self, w2: f64) -> f64 {
        let w1 = 1.0 - w2;
        let m = self.moments;
        w1 * w1 * m.var1 + w2 * w2 * m.var2 + 2.0 * w1 * w2 * m.cov
    }

    /// Utility to maximize: `E - γ/2 σ²` for selling, `-(E + γ/2 σ²)` for buying.
    pub fn utility(&self, w2: f64, side: Side) -> f64 {
        let penalty = self.gamma / 2.0 * self.variance(w2);
        match side {
            Side::Sell => self.expected(w2) - penalty,
            Side::Buy => -(self.expected(w2) + penalty),
        }
    }

    /// Unconstrained stationary point, `None` when the variance of the
    /// spread is zero.
    pub fn closed_form(&self, side: Side) -> Option<f64> {
        let m = self.moments;
        let d = m.var1 - 2.0 * m.cov + m.var2;
        if d <= 0.0 {
            return None;
        }
        let drift = match side {
            Side::Sell => (self.mu2 - self.mu1) / self.gamma,
            Side::Buy => -(self.mu2 - self.mu1) / self.gamma,
        };
        Some((drift - (m.cov - m.var1)) / d)
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Optimal weight on venue 2 in [0, 1].
///
/// Golden-section search on the utility relative to `w2 = 0`; boundaries are
/// compared explicitly and exact ties resolve toward `w2 = 0`. An interior
/// search result must agree with the closed-form stationary point to 1e-6
/// and is then replaced by it.
pub fn meanvar_weight(inputs: &MeanVarInputs, side: Side) -> Result<f64> {
    inputs.validate()?;
    let m = inputs.moments;
    let d = m.var1 - 2.0 * m.cov + m.var2;
    let drift = match side {
        Side::Sell => inputs.mu2 - inputs.mu1,
        Side::Buy => inputs.mu1 - inputs.mu2,
    };
    let slope = drift - inputs.gamma * (m.cov - m.var1);
    let u = |w: f64| w * slope - inputs.gamma / 2.0 * d * w * w;
    let searched = golden_max(u, 0.0, 1.0, GOLDEN_TOLERANCE);
    let mut best = 0.0;
    for w in [searched, 1.0] {
        if u(w) > u(best) {
            best = w;
        }
    }
    if let Some(cf) = inputs.closed_form(side).filter(|w| *w > 0.0 && *w < 1.0) {
        if (cf - best).abs() > 1e-6 {
            return Err(Error::numerical(format!(
                "golden-section weight {best} disagrees with closed form {cf} for {inputs:?}"
            )));
        }
        best = cf;
    }
    Ok(best)
}

/// Per-(day, qh) population variances and covariance of the realized
/// auction and intraday prices over the `window` days before each day.
pub fn rolling_moments(data: &Dataset, days: &[NaiveDate], window: usize) -> Result<BTreeMap<SlotKey, Moments>> {
    if window < MIN_MOMENT_WINDOW {
        return Err(Error::Config(format!(
            "moment window of {window} days is shorter than {MIN_MOMENT_WINDOW}"
        )));
    }
    let au = data.get(SeriesId::EpexQhAuction)?;
    let id = data.get(SeriesId::EpexQhIdVwap)?;
    let mut out = BTreeMap::new();
    for &d in days {
        let first = d - Duration::days(window as i64);
        let (Some(i0), Some(_)) = (data.day_index(first), data.day_index(d - Duration::days(1))) else {
            return Err(Error::data(format!("moment window {first}..{} not covered by the data", d - Duration::days(1))));
        };
        for qh in 1..=SLOTS_PER_DAY {
            let xs: Vec<f64> = (0..window).map(|k| au.values[(i0 + k) * SLOTS_PER_DAY + qh - 1]).collect();
            let ys: Vec<f64> = (0..window).map(|k| id.values[(i0 + k) * SLOTS_PER_DAY + qh - 1]).collect();
            out.insert((d, qh), moments_of(&xs, &ys));
        }
    }
    Ok(out)
}

pub fn moments_of(xs: &[f64], ys: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut m = Moments {
        var1: 0.0,
        var2: 0.0,
        cov: 0.0,
    };
    for (x, y) in xs.iter().zip(ys) {
        m.var1 += (x - mx) * (x - mx);
        m.var2 += (y - my) * (y - my);
        m.cov += (x - mx) * (y - my);
    }
    m.var1 /= n;
    m.var2 /= n;
    m.cov /= n;
    m
}

/// Mean-variance allocation between the venues using `source`'s forecasts
/// as expected prices.
pub fn meanvar_strategy(
    panel: &ForecastPanel,
    source: &str,
    side: Side,
    moments: &BTreeMap<SlotKey, Moments>,
    gamma: f64,
    volume: f64,
) -> Result<StrategyLedger> {
    let kind = match side {
        Side::Buy => StrategyKind::MeanVarBuy,
        Side::Sell => StrategyKind::MeanVarSell,
    };
    let pairs = forecast_pairs(panel, source);
    if pairs.is_empty() {
        return Err(Error::data(format!("{source} has no forecasts for both venues")));
    }
    let mut l = StrategyLedger::new(kind, Some(source));
    for (k, ((fa, fb), (ra, rb))) in pairs {
        let Some(m) = moments.get(&k) else {
            l.skipped.push((k.0, k.1, "no rolling moments".into()));
            continue;
        };
        let inputs = MeanVarInputs {
            mu1: fa,
            mu2: fb,
            moments: *m,
            gamma,
        };
        let w2 = meanvar_weight(&inputs, side)?;
        l.push(k, Position::Weight(w2), (1.0 - w2) * ra + w2 * rb, volume);
    }
    Ok(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: String,
    pub side: Side,
    pub n: usize,
    pub price: f64,
    pub min_price: f64,
    pub max_price: f64,
    pub std_dev: f64,
    pub sharpe: Option<f64>,
    pub total_cashflow_eur: f64,
}

pub fn summarize(ledger: &StrategyLedger, convention: SdConvention) -> Result<Summary> {
    if ledger.entries.is_empty() {
        return Err(Error::data(format!("ledger {} is empty", ledger.name)));
    }
    let p = ledger.prices();
    Ok(Summary {
        strategy: ledger.name.clone(),
        side: ledger.side(),
        n: p.len(),
        price: p.iter().sum::<f64>() / p.len() as f64,
        min_price: p.iter().copied().fold(f64::INFINITY, f64::min),
        max_price: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        std_dev: std_dev(&p, convention),
        sharpe: sharpe(&p, convention).ok(),
        total_cashflow_eur: ledger.entries.iter().map(|e| e.cashflow_eur).sum(),
    })
}

/// Money saved (buy) or gained (sell) relative to `benchmark`:
/// `Σ (benchmark − strategy) · volume · 0.25`, negated for selling.
pub fn savings(strategy: &StrategyLedger, benchmark: &StrategyLedger) -> Result<f64> {
    if strategy.entries.is_empty() {
        return Err(Error::data(format!("ledger {} is empty", strategy.name)));
    }
    let bench: BTreeMap<SlotKey, f64> = benchmark.entries.iter().map(|e| ((e.date, e.qh), e.price)).collect();
    if bench.len() != strategy.entries.len() {
        return Err(Error::data(format!(
            "{} has {} slots, benchmark {} has {}",
            strategy.name,
            strategy.entries.len(),
            benchmark.name,
            bench.len()
        )));
    }
    let sign = match strategy.side() {
        Side::Buy => 1.0,
        Side::Sell => -1.0,
    };
    let mut total = 0.0;
    for e in &strategy.entries {
        let b = bench.get(&(e.date, e.qh)).ok_or_else(|| {
            Error::data(format!("benchmark {} lacks slot {} qh {}", benchmark.name, e.date, e.qh))
        })?;
        total += sign * (b - e.price) * e.volume_mw * QH_HOURS;
    }
    Ok(total)
}

pub const LEDGER_HEADER: [&str; 7] = ["date", "qh", "strategy", "venue_or_w2", "price", "volume_mw", "cashflow_eur"];

pub fn write_ledger<W: Write>(ledger: &StrategyLedger, writer: W, header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let err = |e| Error::csv("<ledger>", e);
    if header {
        w.write_record(LEDGER_HEADER).map_err(err)?;
    }
    for e in &ledger.entries {
        w.write_record([
            e.date.to_string(),
            e.qh.to_string(),
            ledger.name.clone(),
            e.position.to_string(),
            e.price.to_string(),
            e.volume_mw.to_string(),
            e.cashflow_eur.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<ledger>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backtest::PanelRow;
    use crate::evaluation::dacc;
    use proptest::prelude::*;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 1, 1).unwrap() + Duration::days(i)
    }

    /// (auction forecast, intraday forecast, auction realized, intraday realized) per slot.
    fn panel(model: &str, slots: &[(f64, f64, f64, f64)]) -> ForecastPanel {
        let mut rows = Vec::new();
        for (i, &(fa, fb, ra, rb)) in slots.iter().enumerate() {
            let (d, qh) = (day(i as i64 / 96), i % 96 + 1);
            for (target, p, r) in [(Target::EpexQhAuction, fa, ra), (Target::EpexQhIdVwap, fb, rb)] {
                rows.push(PanelRow {
                    date: d,
                    qh,
                    target,
                    model: model.into(),
                    prediction: p,
                    prediction_transformed: f64::NAN,
                    realized: r,
                });
            }
        }
        ForecastPanel { rows, skips: vec![] }
    }

    fn inputs(mu1: f64, mu2: f64, var1: f64, var2: f64, cov: f64) -> MeanVarInputs {
        MeanVarInputs {
            mu1,
            mu2,
            moments: Moments { var1, var2, cov },
            gamma: 2.0,
        }
    }

    #[test]
    fn base_strategy_examples() {
        let p = panel("m", &[(40.0, 38.0, 45.0, 39.0), (30.0, 30.0, 31.0, 29.0)]);
        let sell = base_strategy(&p, "m", Side::Sell, 50.0).unwrap();
        assert_eq!(sell.entries[0].position, Position::Venue(SeriesId::EpexQhAuction));
        assert_eq!(sell.entries[0].price, 45.0);
        // tied forecasts go to the auction
        assert_eq!(sell.entries[1].position, Position::Venue(SeriesId::EpexQhAuction));
        let buy = base_strategy(&p, "m", Side::Buy, 50.0).unwrap();
        assert_eq!(buy.entries[0].price, 39.0);
        assert_eq!(buy.entries[1].price, 31.0);
        assert_eq!(buy.entries[0].cashflow_eur, -39.0 * 50.0 * 0.25);
        assert_eq!(sell.entries[0].cashflow_eur, 45.0 * 50.0 * 0.25);
    }

    #[test]
    fn perfect_forecasts_reproduce_perfect_strategy() {
        let slots: Vec<_> = (0..50)
            .map(|i| {
                let a = 30.0 + (i as f64 * 1.7).sin() * 5.0;
                let b = 30.0 + (i as f64 * 0.9).cos() * 5.0;
                (a, b, a, b)
            })
            .collect();
        let p = panel("m", &slots);
        let r = Realized::from_panel(&p);
        for side in [Side::Buy, Side::Sell] {
            let base = base_strategy(&p, "m", side, 50.0).unwrap();
            let perfect = perfect_strategy(&r, side, 50.0);
            assert_eq!(base.entries, perfect.entries);
        }
        assert_eq!(dacc(&p, "m").unwrap().overall, 1.0);
        let perfect_buy = perfect_strategy(&Realized::from_panel(&panel("m", &[(0.0, 0.0, 30.0, 35.0)])), Side::Buy, 1.0);
        assert_eq!(perfect_buy.entries[0].price, 30.0);
    }

    #[test]
    fn meanvar_examples() {
        let hand = inputs(30.0, 34.0, 4.0, 16.0, 2.0);
        assert_eq!(hand.closed_form(Side::Sell), Some(0.25));
        assert!((meanvar_weight(&hand, Side::Sell).unwrap() - 0.25).abs() < 1e-8);
        // identical assets: flat objective, tie rule
        let flat = inputs(30.0, 30.0, 4.0, 4.0, 4.0);
        assert_eq!(flat.closed_form(Side::Sell), None);
        assert_eq!(meanvar_weight(&flat, Side::Sell).unwrap(), 0.0);
        assert_eq!(meanvar_weight(&flat, Side::Buy).unwrap(), 0.0);
        // dominant venue 2 for selling: clipped at 1
        let dom = inputs(30.0, 40.0, 9.0, 1.0, 0.0);
        assert!(dom.closed_form(Side::Sell).unwrap() > 1.0);
        assert_eq!(meanvar_weight(&dom, Side::Sell).unwrap(), 1.0);
        // a buyer trades the cheaper venue 1 against the calmer venue 2
        assert_eq!(dom.closed_form(Side::Buy), Some(0.4));
        assert!((meanvar_weight(&dom, Side::Buy).unwrap() - 0.4).abs() < 1e-12);
        // perfectly correlated equal variance but different means: boundary
        let lin = inputs(30.0, 31.0, 4.0, 4.0, 4.0);
        assert_eq!(meanvar_weight(&lin, Side::Sell).unwrap(), 1.0);
        assert_eq!(meanvar_weight(&lin, Side::Buy).unwrap(), 0.0);
        assert!(meanvar_weight(&inputs(30.0, 31.0, 1.0, 1.0, 5.0), Side::Sell).is_err());
    }

    #[test]
    fn rolling_moments_examples() {
        use crate::simulate::{simulate, SimConfig};
        let data = simulate(&SimConfig {
            days: 80,
            ..SimConfig::default()
        })
        .unwrap();
        let days = [day(0).with_year(2016).unwrap() + Duration::days(40)];
        assert!(rolling_moments(&data, &days, 20).is_err());
        let m = rolling_moments(&data, &days, 35).unwrap();
        assert_eq!(m.len(), 96);
        // window moves by one day: compare with direct computation
        let next = [days[0] + Duration::days(1)];
        let m2 = rolling_moments(&data, &next, 35).unwrap();
        let au = data.get(SeriesId::EpexQhAuction).unwrap();
        let id = data.get(SeriesId::EpexQhIdVwap).unwrap();
        let i0 = data.day_index(next[0]).unwrap() - 35;
        let xs: Vec<f64> = (0..35).map(|k| au.values[(i0 + k) * 96 + 9]).collect();
        let ys: Vec<f64> = (0..35).map(|k| id.values[(i0 + k) * 96 + 9]).collect();
        assert_eq!(m2[&(next[0], 10)], moments_of(&xs, &ys));
        assert!(rolling_moments(&data, &[data.first_date() + Duration::days(10)], 35).is_err());
        let flat = moments_of(&[3.0; 40], &[5.0; 40]);
        assert_eq!((flat.var1, flat.var2, flat.cov), (0.0, 0.0, 0.0));
    }

    use chrono::Datelike;

    #[test]
    fn accounting_identity() {
        let prices: BTreeMap<SlotKey, f64> = (0..601 * 96).map(|i| ((day(i / 96), (i % 96) as usize + 1), 30.0)).collect();
        let bench: BTreeMap<SlotKey, f64> = prices.iter().map(|(k, p)| (*k, p + 0.75)).collect();
        let s = naive_strategy(StrategyKind::NaiveAuqh, SeriesId::EpexQhAuction, &prices, 50.0);
        let b = naive_strategy(StrategyKind::NaiveExaa, SeriesId::ExaaQh, &bench, 50.0);
        assert_eq!(savings(&s, &b).unwrap(), 540_900.0);
        assert_eq!(savings(&s.with_volume(100.0), &b).unwrap(), 1_081_800.0);
        assert_eq!(savings(&s, &s).unwrap(), 0.0);
        let zero = s.with_volume(0.0);
        assert!(zero.entries.iter().all(|e| e.cashflow_eur == 0.0));
        let mut short = b.clone();
        short.entries.pop();
        assert!(savings(&s, &short).is_err());
    }

    #[test]
    fn summary_columns() {
        let prices: BTreeMap<SlotKey, f64> = [((day(0), 1), 30.0), ((day(0), 2), 40.0)].into_iter().collect();
        let l = naive_strategy(StrategyKind::NaiveAuqh, SeriesId::EpexQhAuction, &prices, 50.0);
        let s = summarize(&l, SdConvention::Population).unwrap();
        assert_eq!((s.price, s.min_price, s.max_price, s.std_dev), (35.0, 30.0, 40.0, 5.0));
        assert_eq!(s.sharpe, Some(7.0));
        let mut buf = Vec::new();
        write_ledger(&l, &mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("date,qh,strategy,venue_or_w2,price,volume_mw,cashflow_eur\n"));
        assert!(text.contains("2017-01-01,1,Naive_AUQH,EPEX_QH_AUCTION,30,50,-375"));
    }

    proptest! {
        #[test]
        fn sandwich_holds_per_slot(slots in prop::collection::vec((0.0f64..80.0, 0.0f64..80.0, -20.0f64..120.0, -20.0f64..120.0), 1..60)) {
            let p = panel("m", &slots);
            let r = Realized::from_panel(&p);
            for side in [Side::Buy, Side::Sell] {
                let base = base_strategy(&p, "m", side, 50.0).unwrap();
                let perfect = perfect_strategy(&r, side, 50.0);
                for (b, q) in base.entries.iter().zip(&perfect.entries) {
                    let (ra, rb) = (r.auction[&(b.date, b.qh)], r.intraday[&(b.date, b.qh)]);
                    match side {
                        Side::Buy => prop_assert!(q.price <= b.price && b.price <= ra.max(rb)),
                        Side::Sell => prop_assert!(q.price >= b.price && b.price >= ra.min(rb)),
                    }
                }
            }
        }

        #[test]
        fn meanvar_weight_in_unit_interval(
            mu1 in 0.0f64..80.0, mu2 in 0.0f64..80.0,
            s1 in 0.0f64..10.0, s2 in 0.0f64..10.0, rho in -1.0f64..1.0,
            sell in any::<bool>(),
        ) {
            let inp = inputs(mu1, mu2, s1 * s1, s2 * s2, rho * s1 * s2);
            let side = if sell { Side::Sell } else { Side::Buy };
            let w = meanvar_weight(&inp, side).unwrap();
            prop_assert!((0.0..=1.0).contains(&w));
            if let Some(cf) = inp.closed_form(side) {
                if cf > 0.0 && cf < 1.0 {
                    prop_assert!((w - cf).abs() < 1e-8, "w {} closed form {}", w, cf);
                }
            }
        }
    }
}
