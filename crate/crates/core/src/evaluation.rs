//! Forecast accuracy and significance statistics.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::backtest::ForecastPanel;
use crate::error::{Error, Result};
use crate::features::Target;
use crate::market_data::SLOTS_PER_DAY;

pub const DM_LAG: usize = 4;
pub const MIN_TEST_OBS: usize = 30;
pub const MIN_SHARPE_TEST_OBS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    /// Two-sided unless the test is one-sided by construction.
    pub p_value: f64,
    pub p_value_one_sided: Option<f64>,
    pub significance_level: f64,
    pub n: usize,
    pub degenerate: bool,
    pub detail: String,
}

impl TestResult {
    pub fn significant(&self) -> bool {
        !self.degenerate && self.p_value < self.significance_level
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

fn two_sided_normal(z: f64) -> f64 {
    (2.0 * std_normal().cdf(-z.abs())).min(1.0)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Errors `prediction - realized` of one (model, target), in panel order.
pub fn errors(panel: &ForecastPanel, model: &str, target: Target) -> Vec<f64> {
    panel.select(model, target).map(|r| r.prediction - r.realized).collect()
}

pub fn rmse_of(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::data("no evaluated slots"));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

pub fn mae_of(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::data("no evaluated slots"));
    }
    Ok(errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64)
}

pub fn rmse(panel: &ForecastPanel, model: &str, target: Target) -> Result<f64> {
    rmse_of(&errors(panel, model, target)).map_err(|_| no_slots(model, target))
}

pub fn mae(panel: &ForecastPanel, model: &str, target: Target) -> Result<f64> {
    mae_of(&errors(panel, model, target)).map_err(|_| no_slots(model, target))
}

fn no_slots(model: &str, target: Target) -> Error {
    Error::data(format!("no evaluated slots for {model} / {target}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub model: String,
    pub target: Target,
    /// 1-based quarter-hour for per-QH metrics.
    pub qh: Option<usize>,
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
}

/// Global RMSE/MAE for every (model, target) in the panel.
pub fn metrics_table(panel: &ForecastPanel) -> Result<Vec<Metrics>> {
    let mut out = Vec::new();
    for target in panel.targets() {
        for model in panel.models() {
            let e = errors(panel, &model, target);
            if e.is_empty() {
                continue;
            }
            out.push(Metrics {
                n: e.len(),
                rmse: rmse_of(&e)?,
                mae: mae_of(&e)?,
                model,
                target,
                qh: None,
            });
        }
    }
    Ok(out)
}

/// RMSE_qh / MAE_qh for one (model, target); quarter-hours without data are
/// omitted.
pub fn per_qh_metrics(panel: &ForecastPanel, model: &str, target: Target) -> Result<Vec<Metrics>> {
    let mut by_qh: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in panel.select(model, target) {
        by_qh.entry(r.qh).or_default().push(r.prediction - r.realized);
    }
    if by_qh.is_empty() {
        return Err(no_slots(model, target));
    }
    by_qh
        .into_iter()
        .map(|(qh, e)| {
            Ok(Metrics {
                model: model.to_string(),
                target,
                qh: Some(qh),
                n: e.len(),
                rmse: rmse_of(&e)?,
                mae: mae_of(&e)?,
            })
        })
        .collect()
}

/// Bartlett-weighted long-run variance of `x` with truncation `lag`
/// (population autocovariances).
pub fn bartlett_lrv(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let gamma = |k: usize| d[k..].iter().zip(&d[..n - k]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let mut lrv = gamma(0);
    for k in 1..=lag.min(n.saturating_sub(1)) {
        lrv += 2.0 * (1.0 - k as f64 / (lag as f64 + 1.0)) * gamma(k);
    }
    lrv
}

/// Diebold-Mariano statistic on a loss differential `Ω = L(e1) - L(e2)`.
/// Positive values mean the first model has larger losses; the one-sided
/// p-value tests that alternative.
pub fn dm_statistic(diff: &[f64], lag: usize, level: f64) -> Result<TestResult> {
    let n = diff.len();
    if n < MIN_TEST_OBS {
        return Err(Error::data(format!("insufficient observations: {n} < {MIN_TEST_OBS}")));
    }
    let m = mean(diff);
    let lrv = bartlett_lrv(diff, lag);
    let detail = format!("lag {lag}, Bartlett kernel");
    if !(lrv > 0.0) {
        let statistic = if m == 0.0 { 0.0 } else { m.signum() * f64::INFINITY };
        let p = if m == 0.0 { 1.0 } else { 0.0 };
        return Ok(TestResult {
            statistic,
            p_value: p,
            p_value_one_sided: Some(if m > 0.0 { 0.0 } else { 1.0 }),
            significance_level: level,
            n,
            degenerate: true,
            detail: format!("{detail}; zero long-run variance"),
        });
    }
    let statistic = m / (lrv / n as f64).sqrt();
    Ok(TestResult {
        statistic,
        p_value: two_sided_normal(statistic),
        p_value_one_sided: Some(std_normal().cdf(-statistic)),
        significance_level: level,
        n,
        degenerate: false,
        detail,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QhTest {
    pub qh: usize,
    pub result: TestResult,
}

/// Loss differentials `|e1|^p - |e2|^p` per quarter-hour over the slots
/// both models forecast, in date order.
pub fn loss_differentials(
    panel: &ForecastPanel,
    m1: &str,
    m2: &str,
    target: Target,
    p: u32,
) -> BTreeMap<usize, Vec<f64>> {
    let a = panel.lookup(m1, target);
    let b = panel.lookup(m2, target);
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (key, ra) in &a {
        if let Some(rb) = b.get(key) {
            let la = (ra.prediction - ra.realized).abs().powi(p as i32);
            let lb = (rb.prediction - rb.realized).abs().powi(p as i32);
            out.entry(key.1).or_default().push(la - lb);
        }
    }
    out
}

/// Per-quarter-hour Diebold-Mariano tests of `m1` against `m2`.
pub fn dm_test(
    panel: &ForecastPanel,
    m1: &str,
    m2: &str,
    target: Target,
    p: u32,
    lag: usize,
    level: f64,
) -> Result<Vec<QhTest>> {
    if !(p == 1 || p == 2) {
        return Err(Error::Config(format!("DM loss exponent must be 1 or 2, got {p}")));
    }
    let diffs = loss_differentials(panel, m1, m2, target, p);
    if diffs.is_empty() {
        return Err(Error::data(format!("{m1} and {m2} share no forecast slots for {target}")));
    }
    diffs
        .into_iter()
        .map(|(qh, d)| {
            dm_statistic(&d, lag, level)
                .map(|result| QhTest { qh, result })
                .map_err(|e| Error::data(format!("DM {m1} vs {m2} qh {qh}: {e}")))
        })
        .collect()
}

/// Predicted and realized ordering of the two venues for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub date: NaiveDate,
    pub qh: usize,
    /// True when the QH auction is forecast above the intraday VWAP.
    pub predicted_auction_high: bool,
    pub realized_auction_high: bool,
}

impl Direction {
    pub fn hit(&self) -> bool {
        self.predicted_auction_high == self.realized_auction_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directions {
    pub obs: Vec<Direction>,
    pub predicted_ties: usize,
    pub realized_ties: usize,
}

/// Venue orderings of `model`'s forecasts for both targets; slots where the
/// forecasts or the realizations tie are excluded and counted.
pub fn directions(panel: &ForecastPanel, model: &str) -> Result<Directions> {
    let au = panel.lookup(model, Target::EpexQhAuction);
    let id = panel.lookup(model, Target::EpexQhIdVwap);
    let mut out = Directions {
        obs: Vec::new(),
        predicted_ties: 0,
        realized_ties: 0,
    };
    for (key, a) in &au {
        let Some(b) = id.get(key) else { continue };
        if a.prediction == b.prediction {
            out.predicted_ties += 1;
            continue;
        }
        if a.realized == b.realized {
            out.realized_ties += 1;
            continue;
        }
        out.obs.push(Direction {
            date: key.0,
            qh: key.1,
            predicted_auction_high: a.prediction > b.prediction,
            realized_auction_high: a.realized > b.realized,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dacc {
    pub overall: f64,
    pub n: usize,
    /// `(qh, hits, n, dacc)` for quarter-hours with at least one untied slot.
    pub per_qh: Vec<(usize, usize, usize, f64)>,
    pub predicted_ties: usize,
    pub realized_ties: usize,
}

pub fn dacc(panel: &ForecastPanel, model: &str) -> Result<Dacc> {
    dacc_of(&directions(panel, model)?)
}

pub fn dacc_of(dirs: &Directions) -> Result<Dacc> {
    if dirs.obs.is_empty() {
        return Err(Error::data("no untied slots to compute directional accuracy"));
    }
    let mut per = vec![(0usize, 0usize); SLOTS_PER_DAY + 1];
    for o in &dirs.obs {
        per[o.qh].1 += 1;
        if o.hit() {
            per[o.qh].0 += 1;
        }
    }
    let hits: usize = per.iter().map(|p| p.0).sum();
    Ok(Dacc {
        overall: hits as f64 / dirs.obs.len() as f64,
        n: dirs.obs.len(),
        per_qh: per
            .iter()
            .enumerate()
            .filter(|(_, p)| p.1 > 0)
            .map(|(qh, p)| (qh, p.0, p.1, p.0 as f64 / p.1 as f64))
            .collect(),
        predicted_ties: dirs.predicted_ties,
        realized_ties: dirs.realized_ties,
    })
}

/// Pesaran-Timmermann test of independence between predicted and realized
/// directions; one-sided (positive dependence).
pub fn pt_test(predicted: &[bool], realized: &[bool], level: f64) -> Result<TestResult> {
    let n = predicted.len();
    if n != realized.len() {
        return Err(Error::data("direction series differ in length"));
    }
    if n < MIN_TEST_OBS {
        return Err(Error::data(format!("insufficient observations: {n} < {MIN_TEST_OBS}")));
    }
    let nf = n as f64;
    let px = predicted.iter().filter(|b| **b).count() as f64 / nf;
    let py = realized.iter().filter(|b| **b).count() as f64 / nf;
    let p_hat = predicted.iter().zip(realized).filter(|(a, b)| a == b).count() as f64 / nf;
    let p_star = py * px + (1.0 - py) * (1.0 - px);
    let v_hat = p_star * (1.0 - p_star) / nf;
    let v_star = (2.0 * py - 1.0).powi(2) * px * (1.0 - px) / nf
        + (2.0 * px - 1.0).powi(2) * py * (1.0 - py) / nf
        + 4.0 * py * px * (1.0 - py) * (1.0 - px) / (nf * nf);
    let var = v_hat - v_star;
    let degenerate_marginal = px == 0.0 || px == 1.0 || py == 0.0 || py == 1.0;
    if degenerate_marginal || !(var > 0.0) {
        return Ok(TestResult {
            statistic: f64::NAN,
            p_value: 1.0,
            p_value_one_sided: Some(1.0),
            significance_level: level,
            n,
            degenerate: true,
            detail: format!("degenerate marginals (predicted {px:.4}, realized {py:.4})"),
        });
    }
    let statistic = (p_hat - p_star) / var.sqrt();
    let p = std_normal().cdf(-statistic);
    Ok(TestResult {
        statistic,
        p_value: p,
        p_value_one_sided: Some(p),
        significance_level: level,
        n,
        degenerate: false,
        detail: format!("hit rate {p_hat:.6}, expected under independence {p_star:.6}; one-sided"),
    })
}

fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Welch two-sample t-test of equal means, two-sided.
pub fn mean_ttest(a: &[f64], b: &[f64], level: f64) -> Result<TestResult> {
    let (na, nb) = (a.len(), b.len());
    if na < MIN_TEST_OBS || nb < MIN_TEST_OBS {
        return Err(Error::data(format!(
            "insufficient observations: {} < {MIN_TEST_OBS}",
            na.min(nb)
        )));
    }
    let diff = mean(a) - mean(b);
    let (qa, qb) = (sample_var(a) / na as f64, sample_var(b) / nb as f64);
    let se2 = qa + qb;
    if !(se2 > 0.0) {
        let equal = diff == 0.0;
        return Ok(TestResult {
            statistic: if equal { 0.0 } else { diff.signum() * f64::INFINITY },
            p_value: if equal { 1.0 } else { 0.0 },
            p_value_one_sided: None,
            significance_level: level,
            n: na + nb,
            degenerate: true,
            detail: "zero variance in both samples".into(),
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na as f64 - 1.0) + qb * qb / (nb as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::numerical(format!("Student t with {df} df: {e}")))?;
    Ok(TestResult {
        statistic: t,
        p_value: (2.0 * dist.cdf(-t.abs())).min(1.0),
        p_value_one_sided: None,
        significance_level: level,
        n: na + nb,
        degenerate: false,
        detail: format!("Welch, {df:.1} df"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdConvention {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1.
    Sample,
}

pub fn std_dev(v: &[f64], convention: SdConvention) -> f64 {
    let m = mean(v);
    let ss = v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    let denom = match convention {
        SdConvention::Population => v.len() as f64,
        SdConvention::Sample => v.len() as f64 - 1.0,
    };
    (ss / denom).sqrt()
}

/// Mean over standard deviation, zero risk-free rate.
pub fn sharpe(prices: &[f64], convention: SdConvention) -> Result<f64> {
    if prices.len() < 2 {
        return Err(Error::data("Sharpe ratio needs at least two prices"));
    }
    let sd = std_dev(prices, convention);
    if !(sd > 0.0) {
        return Err(Error::data("Sharpe ratio undefined: zero standard deviation"));
    }
    Ok(mean(prices) / sd)
}

/// Delta-method test of equal Sharpe ratios for paired series, with a
/// Bartlett HAC covariance of `(a, b, a², b²)` at lag `floor(n^(1/3))`.
pub fn sharpe_equality(a: &[f64], b: &[f64], level: f64) -> Result<TestResult> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::data("Sharpe test needs matched series"));
    }
    if n < MIN_SHARPE_TEST_OBS {
        return Err(Error::data(format!("insufficient observations: {n} < {MIN_SHARPE_TEST_OBS}")));
    }
    let lag = (n as f64).cbrt().floor() as usize;
    let nf = n as f64;
    let (mu_a, mu_b) = (mean(a), mean(b));
    let ga = a.iter().map(|x| x * x).sum::<f64>() / nf;
    let gb = b.iter().map(|x| x * x).sum::<f64>() / nf;
    let (va, vb) = (ga - mu_a * mu_a, gb - mu_b * mu_b);
    if !(va > 0.0 && vb > 0.0) {
        return Ok(TestResult {
            statistic: f64::NAN,
            p_value: 1.0,
            p_value_one_sided: None,
            significance_level: level,
            n,
            degenerate: true,
            detail: "zero variance series".into(),
        });
    }
    let diff = mu_a / va.sqrt() - mu_b / vb.sqrt();
    let grad = [
        ga / va.powf(1.5),
        -gb / vb.powf(1.5),
        -mu_a / (2.0 * va.powf(1.5)),
        mu_b / (2.0 * vb.powf(1.5)),
    ];
    let y: Vec<[f64; 4]> = (0..n)
        .map(|t| [a[t] - mu_a, b[t] - mu_b, a[t] * a[t] - ga, b[t] * b[t] - gb])
        .collect();
    let mut psi = [[0.0; 4]; 4];
    for k in 0..=lag {
        let w = if k == 0 { 1.0 } else { 1.0 - k as f64 / (lag as f64 + 1.0) };
        for t in k..n {
            for i in 0..4 {
                for j in 0..4 {
                    let c = y[t][i] * y[t - k][j] / nf;
                    psi[i][j] += w * c;
                    if k > 0 {
                        psi[j][i] += w * c;
                    }
                }
            }
        }
    }
    let mut var = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            var += grad[i] * psi[i][j] * grad[j];
        }
    }
    let se = (var / nf).sqrt();
    let detail = format!("HAC Bartlett lag {lag}");
    if !(se > 0.0) {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            p_value_one_sided: None,
            significance_level: level,
            n,
            degenerate: diff != 0.0,
            detail,
        });
    }
    let statistic = diff / se;
    Ok(TestResult {
        statistic,
        p_value: two_sided_normal(statistic),
        p_value_one_sided: None,
        significance_level: level,
        n,
        degenerate: false,
        detail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backtest::PanelRow;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal as RNormal};

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2017, 1, 1).unwrap() + chrono::Duration::days(i)
    }

    fn panel_from(model: &str, target: Target, errs: &[f64]) -> ForecastPanel {
        ForecastPanel {
            rows: errs
                .iter()
                .enumerate()
                .map(|(i, e)| PanelRow {
                    date: day(i as i64),
                    qh: 1,
                    target,
                    model: model.into(),
                    prediction: 50.0 + e,
                    prediction_transformed: f64::NAN,
                    realized: 50.0,
                })
                .collect(),
            skips: vec![],
        }
    }

    #[test]
    fn rmse_mae_examples() {
        let t = Target::EpexQhAuction;
        let p = panel_from("m", t, &[0.0, 0.0]);
        assert_eq!((rmse(&p, "m", t).unwrap(), mae(&p, "m", t).unwrap()), (0.0, 0.0));
        let p = panel_from("m", t, &[2.0, 2.0, 2.0]);
        assert_eq!((rmse(&p, "m", t).unwrap(), mae(&p, "m", t).unwrap()), (2.0, 2.0));
        let p = panel_from("m", t, &[1.0, -3.0]);
        assert_eq!(mae(&p, "m", t).unwrap(), 2.0);
        assert!((rmse(&p, "m", t).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&p, "other", t).is_err());
    }

    #[test]
    fn dm_identical_and_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e: Vec<f64> = (0..200).map(|_| rng.random_range(-3.0..3.0)).collect();
        let zero = dm_statistic(&vec![0.0; 200], 4, 0.05).unwrap();
        assert_eq!((zero.statistic, zero.p_value), (0.0, 1.0));
        let e2: Vec<f64> = e.iter().map(|x| x * 0.5 + 0.1).collect();
        let d12: Vec<f64> = e.iter().zip(&e2).map(|(a, b)| a.abs() - b.abs()).collect();
        let d21: Vec<f64> = d12.iter().map(|v| -v).collect();
        let a = dm_statistic(&d12, 4, 0.05).unwrap();
        let b = dm_statistic(&d21, 4, 0.05).unwrap();
        assert_eq!(a.statistic, -b.statistic);
        assert!(dm_statistic(&d12[..20], 4, 0.05).is_err());
    }

    #[test]
    fn dm_detects_dominating_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nd = RNormal::new(0.0, 1.0).unwrap();
        let d: Vec<f64> = (0..500)
            .map(|_| {
                let e1: f64 = nd.sample(&mut rng);
                let e2 = 0.5 * e1;
                e1.abs() - e2.abs()
            })
            .collect();
        let r = dm_statistic(&d, 4, 0.05).unwrap();
        assert!(r.statistic > 0.0 && r.p_value < 0.05);
    }

    #[test]
    fn bartlett_lrv_white_noise_and_constant() {
        assert_eq!(bartlett_lrv(&[3.0; 10], 4), 0.0);
        let x = [1.0, -1.0, 1.0, -1.0];
        // γ0 = 1, γ1 = -3/4 -> 1 + 2·(1/2)·(-3/4)
        assert!((bartlett_lrv(&x, 1) - 0.25).abs() < 1e-15);
    }

    fn dir(pred: bool, real: bool) -> Direction {
        Direction {
            date: day(0),
            qh: 1,
            predicted_auction_high: pred,
            realized_auction_high: real,
        }
    }

    #[test]
    fn dacc_examples() {
        let d = Directions {
            obs: vec![dir(true, true), dir(true, false), dir(false, false)],
            predicted_ties: 0,
            realized_ties: 0,
        };
        assert!((dacc_of(&d).unwrap().overall - 2.0 / 3.0).abs() < 1e-15);
        let empty = Directions {
            obs: vec![],
            predicted_ties: 3,
            realized_ties: 0,
        };
        assert!(dacc_of(&empty).is_err());
    }

    #[test]
    fn pt_detects_dependence_and_flags_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let real: Vec<bool> = (0..400).map(|_| rng.random_bool(0.5)).collect();
        let r = pt_test(&real, &real, 0.05).unwrap();
        assert!(r.p_value < 0.001);
        let r = pt_test(&vec![true; 400], &real, 0.05).unwrap();
        assert!(r.degenerate);
        assert!(pt_test(&real[..10], &real[..10], 0.05).is_err());
    }

    #[test]
    fn ttest_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nd = RNormal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..200).map(|_| nd.sample(&mut rng)).collect();
        let r = mean_ttest(&a, &a, 0.05).unwrap();
        assert_eq!(r.p_value, 1.0);
        let n = 200.0f64;
        let b: Vec<f64> = a.iter().map(|x| x + 10.0 / n.sqrt()).collect();
        assert!(mean_ttest(&a, &b, 0.05).unwrap().p_value < 0.001);
        assert!(mean_ttest(&a[..20], &b[..20], 0.05)
            .unwrap_err()
            .to_string()
            .contains("insufficient observations"));
    }

    #[test]
    fn sharpe_examples() {
        assert!(sharpe(&[3.0, 3.0, 3.0], SdConvention::Population).is_err());
        assert_eq!(sharpe(&[30.0, 40.0], SdConvention::Population).unwrap(), 7.0);
        let p = [31.0, 35.5, 28.0, 40.25];
        let s = sharpe(&p, SdConvention::Population).unwrap();
        let scaled: Vec<f64> = p.iter().map(|x| x * 3.5).collect();
        assert!((sharpe(&scaled, SdConvention::Population).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn sharpe_equality_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nd = RNormal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..300).map(|_| 1.0 + nd.sample(&mut rng)).collect();
        let r = sharpe_equality(&a, &a, 0.05).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let a: Vec<f64> = (0..5000).map(|_| 1.0 + nd.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..5000).map(|_| 2.0 + nd.sample(&mut rng)).collect();
        assert!(sharpe_equality(&a, &b, 0.05).unwrap().p_value < 0.01);
        assert!(sharpe_equality(&a[..50], &b[..50], 0.05).is_err());
    }
}
