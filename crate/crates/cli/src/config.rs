use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use qhspot_core::evaluation::{SdConvention, DM_LAG};
use qhspot_core::market_data::CsvSchema;
use qhspot_core::portfolio::{DEFAULT_GAMMA, DEFAULT_VOLUME_MW};
use qhspot_core::simulate::SimConfig;
use qhspot_core::{BacktestConfig, Error, Result, SeriesId};

pub const DEFAULT_OUTPUT_DIR: &str = "qhspot-out";

/// Keys left out of the configuration hash: they move or schedule the work
/// without changing any result.
const UNHASHED: [&[&str]; 2] = [&["output_dir"], &["backtest", "jobs"]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub path: PathBuf,
    #[serde(default = "long")]
    pub schema: CsvSchema,
}

fn long() -> CsvSchema {
    CsvSchema::Long
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub dm_lag: usize,
    /// Loss exponents for the Diebold-Mariano tests (1 = absolute, 2 = squared).
    pub dm_loss: Vec<u32>,
    /// Model pairs to compare; every pair of panel models when absent.
    pub dm_pairs: Option<Vec<(String, String)>>,
    pub significance_level: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            dm_lag: DM_LAG,
            dm_loss: vec![1, 2],
            dm_pairs: None,
            significance_level: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortfolioConfig {
    pub gamma: f64,
    pub volume_mw: f64,
    /// Trailing days for the mean-variance moments; the training window
    /// length when absent.
    pub moment_window: Option<usize>,
    /// Forecast models driving Base and MeanVar; every non-naive model with
    /// forecasts for both venues when absent.
    pub sources: Option<Vec<String>>,
    pub benchmarks: Vec<String>,
    pub sd_convention: SdConvention,
    pub significance_level: f64,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        PortfolioConfig {
            gamma: DEFAULT_GAMMA,
            volume_mw: DEFAULT_VOLUME_MW,
            moment_window: None,
            sources: None,
            benchmarks: vec!["Naive_AUQH".into(), "Naive_IDQH".into()],
            sd_convention: SdConvention::Population,
            significance_level: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input CSV per series; one file may serve several series.
    pub data: BTreeMap<SeriesId, DataSource>,
    pub backtest: BacktestConfig,
    pub evaluation: EvaluationConfig,
    pub portfolio: PortfolioConfig,
    pub synth: SimConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: BTreeMap::new(),
            backtest: BacktestConfig::default(),
            evaluation: EvaluationConfig::default(),
            portfolio: PortfolioConfig::default(),
            synth: SimConfig::default(),
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
        }
    }
}

impl RunConfig {
    /// Parse a JSON file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for src in cfg.data.values_mut() {
            if src.path.is_relative() {
                src.path = base.join(&src.path);
            }
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.backtest.validate()?;
        let p = &self.portfolio;
        if !(p.gamma > 0.0 && p.gamma.is_finite()) {
            return Err(Error::Config(format!("risk aversion γ must be positive, got {}", p.gamma)));
        }
        if !(p.volume_mw >= 0.0 && p.volume_mw.is_finite()) {
            return Err(Error::Config(format!("volume must be non-negative, got {}", p.volume_mw)));
        }
        let e = &self.evaluation;
        if e.dm_loss.iter().any(|l| *l != 1 && *l != 2) {
            return Err(Error::Config(format!("DM loss exponents must be 1 or 2, got {:?}", e.dm_loss)));
        }
        for level in [e.significance_level, p.significance_level] {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::Config(format!("significance level must lie in (0, 1), got {level}")));
            }
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.output_dir.join("dataset")
    }

    pub fn backtest_dir(&self) -> PathBuf {
        self.output_dir.join("backtest")
    }

    pub fn evaluation_dir(&self) -> PathBuf {
        self.output_dir.join("evaluation")
    }

    pub fn portfolio_dir(&self) -> PathBuf {
        self.output_dir.join("portfolio")
    }

    /// SHA-256 of the canonical JSON form (sorted keys, no whitespace),
    /// ignoring the output location and worker count.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        for path in UNHASHED {
            remove_path(&mut value, path);
        }
        let mut canon = String::new();
        write_canonical(&value, &mut canon);
        hex::encode(Sha256::digest(canon.as_bytes()))
    }
}

fn remove_path(value: &mut Value, path: &[&str]) {
    let Some((last, parents)) = path.split_last() else { return };
    let mut cur = value;
    for key in parents {
        match cur.get_mut(*key) {
            Some(v) => cur = v,
            None => return,
        }
    }
    if let Value::Object(map) = cur {
        map.remove(*last);
    }
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order_and_output_location() {
        let a: RunConfig = serde_json::from_str(
            r#"{"portfolio": {"gamma": 3.0, "volume_mw": 10.0}, "backtest": {"jobs": 2, "plan": {"initial_train": ["2016-01-08", "2016-03-07"], "test_range": ["2016-03-08", "2016-04-30"], "refit_every": 7}}}"#,
        )
        .unwrap();
        let b: RunConfig = serde_json::from_str(
            r#"{"backtest": {"plan": {"refit_every": 7, "test_range": ["2016-03-08", "2016-04-30"], "initial_train": ["2016-01-08", "2016-03-07"]}}, "output_dir": "elsewhere", "portfolio": {"volume_mw": 10.0, "gamma": 3.0}}"#,
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.backtest.plan.refit_every = 1;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn defaults_and_validation() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
        let bad = RunConfig {
            portfolio: PortfolioConfig {
                gamma: 0.0,
                ..PortfolioConfig::default()
            },
            ..RunConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn roundtrips_through_json() {
        let mut cfg = RunConfig::default();
        cfg.data.insert(
            SeriesId::ExaaQh,
            DataSource {
                path: "/data/exaa.csv".into(),
                schema: CsvSchema::Wide,
            },
        );
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }
}
