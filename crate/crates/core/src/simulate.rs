//! Seeded synthetic markets for tests, benchmarks and demos.

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{assemble, Dataset, QhSeries, SeriesId, SLOTS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dgp {
    /// Zero-median drivers and an AUQH price linear in them plus noise.
    Linear,
    /// Daily and weekly price shapes with persistent shocks.
    #[default]
    Market,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub start: NaiveDate,
    pub days: usize,
    pub seed: u64,
    pub dgp: Dgp,
    /// Standard deviation of the AUQH price noise.
    pub noise_sd: f64,
    /// Standard deviation of EXAA around the noise-free AUQH signal.
    pub exaa_noise_sd: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            start: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
            days: 120,
            seed: 7,
            dgp: Dgp::Market,
            noise_sd: 2.0,
            exaa_noise_sd: 1.0,
        }
    }
}

/// Coefficients of the linear generator:
/// `AUQH[d,q] = 0.8 DA + 0.5 load − 0.6 wind + 0.3 AUQH[d−1,q] + ε`.
pub const LINEAR_BETA: [f64; 4] = [0.8, 0.5, -0.6, 0.3];

struct Gen {
    rng: ChaCha8Rng,
    unit: Normal<f64>,
}

impl Gen {
    fn n(&mut self, sd: f64) -> f64 {
        sd * self.unit.sample(&mut self.rng)
    }
}

pub fn simulate(cfg: &SimConfig) -> Result<Dataset> {
    if cfg.days < 8 {
        return Err(Error::Config(format!("simulation needs at least 8 days, got {}", cfg.days)));
    }
    if !(cfg.noise_sd >= 0.0 && cfg.exaa_noise_sd >= 0.0) {
        return Err(Error::Config("noise standard deviations must be non-negative".into()));
    }
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        unit: Normal::new(0.0, 1.0).unwrap(),
    };
    let n = cfg.days * SLOTS_PER_DAY;
    let mut da = vec![0.0; n];
    let mut load = vec![0.0; n];
    let mut wind = vec![0.0; n];
    let mut pv = vec![0.0; n];
    let mut auqh = vec![0.0; n];
    let mut exaa = vec![0.0; n];
    let mut id = vec![0.0; n];
    let mut rebap = vec![0.0; n];

    match cfg.dgp {
        Dgp::Linear => {
            for d in 0..cfg.days {
                for h in 0..24 {
                    let v = g.n(10.0);
                    for q in 0..4 {
                        da[d * SLOTS_PER_DAY + h * 4 + q] = v;
                    }
                }
                for s in 0..SLOTS_PER_DAY {
                    let i = d * SLOTS_PER_DAY + s;
                    load[i] = g.n(10.0);
                    wind[i] = g.n(10.0);
                    pv[i] = g.n(5.0);
                    let prev = if d > 0 { auqh[i - SLOTS_PER_DAY] } else { 0.0 };
                    let b = LINEAR_BETA;
                    let signal = b[0] * da[i] + b[1] * load[i] + b[2] * wind[i] + b[3] * prev;
                    auqh[i] = signal + g.n(cfg.noise_sd);
                    exaa[i] = signal + g.n(cfg.exaa_noise_sd);
                    id[i] = auqh[i] + g.n(cfg.noise_sd);
                    rebap[i] = id[i] + g.n(5.0);
                }
            }
        }
        Dgp::Market => {
            let mut level = 0.0;
            for d in 0..cfg.days {
                let date = cfg.start + Duration::days(d as i64);
                let weekend = date.weekday().number_from_monday() >= 6;
                level = 0.8 * level + g.n(4.0);
                let wind_day = g.rng.random_range(2_000.0..30_000.0);
                let sun = g.rng.random_range(0.2..1.0);
                let mut hourly = [0.0; 24];
                for (h, v) in hourly.iter_mut().enumerate() {
                    let shape = 8.0 * (std::f64::consts::PI * (h as f64 - 6.0) / 12.0).sin();
                    *v = 35.0 + level + shape - if weekend { 6.0 } else { 0.0 } + g.n(2.0);
                }
                for s in 0..SLOTS_PER_DAY {
                    let i = d * SLOTS_PER_DAY + s;
                    let t = s as f64 / 4.0;
                    let day_curve = (-((t - 13.0) / 3.5).powi(2)).exp();
                    pv[i] = 25_000.0 * sun * day_curve;
                    wind[i] = (wind_day + g.n(800.0)).max(0.0);
                    load[i] = 55_000.0 + 12_000.0 * (std::f64::consts::PI * (t - 6.0) / 18.0).sin().max(0.0)
                        - if weekend { 9_000.0 } else { 0.0 }
                        + g.n(600.0);
                    da[i] = hourly[s / 4];
                    let ramp = [4.5, 1.5, -1.5, -4.5][s % 4];
                    let residual_load = (load[i] - wind[i] - pv[i]) / 1_000.0;
                    let signal = da[i] + ramp + 0.15 * (residual_load - 30.0);
                    auqh[i] = signal + g.n(cfg.noise_sd);
                    exaa[i] = signal + g.n(cfg.exaa_noise_sd);
                    id[i] = auqh[i] + 0.3 + g.n(cfg.noise_sd * 1.5);
                    rebap[i] = id[i] + g.n(15.0);
                }
            }
        }
    }

    let series = [
        (SeriesId::ExaaQh, exaa),
        (SeriesId::EpexDaH, da),
        (SeriesId::EpexQhAuction, auqh),
        (SeriesId::EpexQhIdVwap, id),
        (SeriesId::LoadFcst, load),
        (SeriesId::WindFcst, wind),
        (SeriesId::PvFcst, pv),
        (SeriesId::Rebap, rebap),
    ]
    .into_iter()
    .map(|(id, v)| QhSeries::from_values(id, cfg.start, v))
    .collect::<Result<Vec<_>>>()?;
    assemble(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_complete() {
        let cfg = SimConfig {
            days: 10,
            ..SimConfig::default()
        };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.day_count(), 10);
        assert_eq!(a.ids().count(), 8);
        let c = simulate(&SimConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn da_is_constant_within_hours() {
        for dgp in [Dgp::Linear, Dgp::Market] {
            let ds = simulate(&SimConfig {
                days: 9,
                dgp,
                ..SimConfig::default()
            })
            .unwrap();
            let da = ds.get(SeriesId::EpexDaH).unwrap();
            for hour in da.values.chunks(4) {
                assert!(hour.iter().all(|v| *v == hour[0]));
            }
        }
    }

    #[test]
    fn linear_dgp_residual_has_requested_noise() {
        let cfg = SimConfig {
            days: 60,
            dgp: Dgp::Linear,
            ..SimConfig::default()
        };
        let ds = simulate(&cfg).unwrap();
        let get = |id| &ds.get(id).unwrap().values;
        let (y, da, load, wind) = (
            get(SeriesId::EpexQhAuction),
            get(SeriesId::EpexDaH),
            get(SeriesId::LoadFcst),
            get(SeriesId::WindFcst),
        );
        let b = LINEAR_BETA;
        let resid: Vec<f64> = (SLOTS_PER_DAY..y.len())
            .map(|i| y[i] - (b[0] * da[i] + b[1] * load[i] + b[2] * wind[i] + b[3] * y[i - SLOTS_PER_DAY]))
            .collect();
        let sd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((sd - 2.0).abs() < 0.1, "residual sd {sd}");
    }
}
