use std::collections::BTreeMap;
use std::path::PathBuf;

use log::{info, warn};

use qhspot_core::market_data::{assemble, ingest_csv, save_dataset, CsvSchema, DatasetManifest};
use qhspot_core::{Error, QhSeries, Result};

use crate::config::RunConfig;
use crate::output::context;

/// Read every configured input, align it on the quarter-hour calendar and
/// store it under `<output>/dataset`.
pub fn ingest(cfg: &RunConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    if cfg.data.is_empty() {
        return Err(Error::Config("no input files configured under \"data\"".into()));
    }
    let missing: Vec<String> = cfg
        .backtest
        .required_series()
        .into_iter()
        .filter(|id| !cfg.data.contains_key(id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "configured models need series without an input file: {}",
            missing.join(", ")
        )));
    }

    let mut parsed: BTreeMap<(PathBuf, bool), Vec<QhSeries>> = BTreeMap::new();
    let mut series = Vec::new();
    for (&id, src) in &cfg.data {
        let key = (src.path.clone(), src.schema == CsvSchema::Wide);
        if !parsed.contains_key(&key) {
            let read = ingest_csv(&src.path, src.schema).map_err(|e| context(e, &src.path.display().to_string()))?;
            parsed.insert(key.clone(), read);
        }
        let found = parsed[&key].iter().find(|s| s.id == id).cloned();
        match found {
            Some(s) => series.push(s),
            None => return Err(Error::Data(format!("{}: no rows for {id}", src.path.display()))),
        }
    }

    let dataset = assemble(series)?;
    dataset.require(&cfg.backtest.required_series())?;
    let log = dataset.imputation_log();
    if !log.is_empty() {
        warn!("{} imputed slots, listed in the dataset manifest", log.len());
    }
    let dir = cfg.dataset_dir();
    let manifest = save_dataset(&dataset, &dir)?;
    info!(
        "dataset {}..{} with {} series written to {}",
        manifest.first_date,
        manifest.last_date,
        manifest.series.len(),
        dir.display()
    );
    Ok(manifest)
}
