//! Median/MAD normalization followed by the sign-symmetric `mlog` transform.
//!
//! ```text
//! z = (x - median) / MAD
//! y = sgn(z) * [ ln(|z| + 1/c) + ln(c) ]
//! z = sgn(y) * (exp(|y|) - 1) / c
//! ```
//!
//! `sgn(0)` is taken as 0, so `mlog(0) = 0`. MAD is the unscaled median of
//! absolute deviations.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{QhSeries, SeriesId};

pub const DEFAULT_C: f64 = 1.0 / 3.0;

/// Which period the median and MAD are estimated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    FullPeriod,
    #[default]
    TrainingOnly,
}

/// Whether the normalized values are passed through `mlog`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    #[default]
    Mlog,
    /// Median/MAD normalization only; used for linear synthetic checks.
    NormalizeOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub series: SeriesId,
    pub median: f64,
    pub mad: f64,
    pub c: f64,
    pub window: (NaiveDate, NaiveDate),
    pub mode: FitMode,
    #[serde(default)]
    pub kind: TransformKind,
}

impl TransformSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.mad > 0.0 && self.mad.is_finite()) {
            return Err(Error::data(format!("{}: MAD must be positive, got {}", self.series, self.mad)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("mlog parameter c must be positive, got {}", self.c)));
        }
        if !self.median.is_finite() {
            return Err(Error::data(format!("{}: non-finite median", self.series)));
        }
        Ok(())
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_kind(mut self, kind: TransformKind) -> Self {
        self.kind = kind;
        self
    }

    /// Raw value to model scale.
    pub fn forward(&self, x: f64) -> f64 {
        let z = normalize(x, self);
        match self.kind {
            TransformKind::Mlog => mlog(z, self.c),
            TransformKind::NormalizeOnly => z,
        }
    }

    /// Model scale back to raw units.
    pub fn inverse(&self, y: f64) -> f64 {
        let z = match self.kind {
            TransformKind::Mlog => mlog_inverse(y, self.c),
            TransformKind::NormalizeOnly => y,
        };
        denormalize(z, self)
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let n = values.len();
    let mid = n / 2;
    let (_, &mut upper, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median and unscaled MAD of `values`.
pub fn median_mad(values: &[f64]) -> (f64, f64) {
    let mut buf = values.to_vec();
    let med = median(&mut buf);
    for v in buf.iter_mut() {
        *v = (*v - med).abs();
    }
    (med, median(&mut buf))
}

/// Estimate median/MAD over `window` (inclusive dates) of `series`.
pub fn fit_spec(series: &QhSeries, window: (NaiveDate, NaiveDate), mode: FitMode) -> Result<TransformSpec> {
    let (first, last) = window;
    if first > last {
        return Err(Error::data(format!("{}: empty transform window", series.id)));
    }
    let sub = series.trimmed(first, last)?;
    let (med, mad) = median_mad(&sub.values);
    if mad == 0.0 {
        return Err(Error::data(format!(
            "{}: constant series (MAD = 0) over {first}..{last}",
            series.id
        )));
    }
    let spec = TransformSpec {
        series: series.id,
        median: med,
        mad,
        c: DEFAULT_C,
        window,
        mode,
        kind: TransformKind::Mlog,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn normalize(x: f64, spec: &TransformSpec) -> f64 {
    (x - spec.median) / spec.mad
}

pub fn denormalize(z: f64, spec: &TransformSpec) -> f64 {
    z * spec.mad + spec.median
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn mlog(z: f64, c: f64) -> f64 {
    // ln(|z| + 1/c) + ln(c) == ln(1 + c|z|), the latter keeps precision near 0
    sgn(z) * (c * z.abs()).ln_1p()
}

pub fn mlog_inverse(y: f64, c: f64) -> f64 {
    sgn(y) * y.abs().exp_m1() / c
}

fn check_ids(series: &QhSeries, spec: &TransformSpec) -> Result<()> {
    spec.validate()?;
    if series.id != spec.series {
        return Err(Error::data(format!(
            "transform spec for {} applied to series {}",
            spec.series, series.id
        )));
    }
    Ok(())
}

pub fn apply_pipeline(series: &QhSeries, spec: &TransformSpec) -> Result<QhSeries> {
    check_ids(series, spec)?;
    let mut out = series.clone();
    out.values.iter_mut().for_each(|v| *v = spec.forward(*v));
    Ok(out)
}

pub fn invert_pipeline(series: &QhSeries, spec: &TransformSpec) -> Result<QhSeries> {
    check_ids(series, spec)?;
    let mut out = series.clone();
    out.values.iter_mut().for_each(|v| *v = spec.inverse(*v));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(values: Vec<f64>) -> QhSeries {
        let n = values.len();
        let mut padded = values;
        padded.resize(n.div_ceil(96) * 96, *padded.last().unwrap());
        QhSeries::from_values(SeriesId::EpexQhAuction, NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(), padded).unwrap()
    }

    fn spec(median: f64, mad: f64) -> TransformSpec {
        TransformSpec {
            series: SeriesId::EpexQhAuction,
            median,
            mad,
            c: DEFAULT_C,
            window: (NaiveDate::MIN, NaiveDate::MAX),
            mode: FitMode::FullPeriod,
            kind: TransformKind::Mlog,
        }
    }

    #[test]
    fn median_mad_small_cases() {
        assert_eq!(median_mad(&[1.0, 2.0, 3.0, 4.0, 5.0]), (3.0, 1.0));
        assert_eq!(median_mad(&[-10.0, 0.0, 0.0, 0.0, 50.0]), (0.0, 0.0));
        assert_eq!(median_mad(&[1.0, 2.0, 3.0, 4.0]), (2.5, 1.0));
    }

    #[test]
    fn fit_spec_rejects_constant() {
        let s = series(vec![7.0; 96]);
        let w = (s.start_date, s.end_date());
        let err = fit_spec(&s, w, FitMode::FullPeriod).unwrap_err();
        assert!(err.to_string().contains("constant series"));

        let mut vals = vec![0.0; 96];
        vals[0] = -10.0;
        vals[1] = 50.0;
        assert!(fit_spec(&series(vals), w, FitMode::FullPeriod).is_err());
    }

    #[test]
    fn normalize_examples() {
        let sp = spec(3.0, 1.0);
        assert_eq!(normalize(3.0, &sp), 0.0);
        assert_eq!(normalize(4.0, &sp), 1.0);
        assert_eq!(normalize(5.0, &sp), 2.0);
    }

    #[test]
    fn mlog_examples() {
        let c = 1.0 / 3.0;
        assert_eq!(mlog(0.0, c), 0.0);
        // direct evaluation of sgn(z)[ln(|z| + 1/c) + ln c]
        let direct = (1.0f64 + 3.0).ln() + c.ln();
        assert!((mlog(1.0, c) - direct).abs() < 1e-15);
        assert!((mlog(1.0, c) - 0.287_682_072_451_781).abs() < 1e-12);
        assert_eq!(mlog(-1.0, c), -mlog(1.0, c));
        assert_eq!(mlog_inverse(0.0, c), 0.0);
        assert!((mlog_inverse((4.0f64 / 3.0).ln(), c) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pipeline_handles_negative_prices() {
        let prices = [-50.0, 0.0, 30.0, 35.0, 40.0, 500.0];
        let s = series((0..96).map(|i| prices[i % 6] + i as f64 * 0.1).collect());
        let sp = fit_spec(&s, (s.start_date, s.end_date()), FitMode::FullPeriod).unwrap();
        let t = apply_pipeline(&s, &sp).unwrap();
        assert!(t.values[0].is_finite() && t.values[0] < 0.0);
        let back = invert_pipeline(&t, &sp).unwrap();
        for (a, b) in back.values.iter().zip(&s.values) {
            assert!((a - b).abs() < 1e-10);
        }
        let at_median = apply_pipeline(&series(vec![sp.median; 96]), &sp).unwrap();
        assert!(at_median.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pipeline_rejects_wrong_series() {
        let s = series(vec![1.0, 2.0, 3.0]);
        let mut sp = spec(2.0, 1.0);
        sp.series = SeriesId::ExaaQh;
        assert!(apply_pipeline(&s, &sp).is_err());
    }

    proptest! {
        #[test]
        fn mlog_is_odd_and_monotone(a in -1e4f64..1e4, b in -1e4f64..1e4, c in 0.01f64..10.0) {
            prop_assert_eq!(mlog(-a, c), -mlog(a, c));
            if a < b {
                prop_assert!(mlog(a, c) < mlog(b, c));
            }
        }

        #[test]
        fn roundtrip(z in -50.0f64..50.0, c in 0.05f64..5.0) {
            prop_assert!((mlog_inverse(mlog(z, c), c) - z).abs() < 1e-12);
        }
    }
}
