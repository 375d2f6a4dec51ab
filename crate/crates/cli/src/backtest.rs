use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use log::info;
use serde::{Deserialize, Serialize};

use qhspot_core::backtest::{run_block, write_panel_rows, write_skips, GuardAudit};
use qhspot_core::market_data::load_dataset;
use qhspot_core::{Dataset, Error, Result, Target};

use crate::config::RunConfig;
use crate::output::{context, create_dir, io_err, write_json};

pub const PANEL_FILE: &str = "panel.csv";
pub const SKIPS_FILE: &str = "skips.csv";
pub const MODELS_FILE: &str = "models.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Byte lengths of the append-only outputs after the last completed block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FileLengths {
    pub panel: u64,
    pub skips: u64,
    pub models: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub completed_refits: usize,
    pub last_refit: Option<NaiveDate>,
    pub lengths: FileLengths,
    pub panel_rows: usize,
    pub skips: usize,
    pub fits: usize,
    pub audit: GuardAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestManifest {
    pub config_hash: String,
    pub complete: bool,
    pub refits_total: usize,
    pub refits_completed: usize,
    pub test_range: (NaiveDate, NaiveDate),
    pub refit_every: u32,
    pub models: Vec<String>,
    pub targets: Vec<Target>,
    pub panel_rows: usize,
    pub skips: usize,
    pub fits: usize,
    pub audit: GuardAudit,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BacktestOptions {
    /// Discard an existing checkpoint and start over.
    pub fresh: bool,
    /// Stop after this many refit blocks in this invocation.
    pub max_blocks: Option<usize>,
}

pub(crate) fn load(cfg: &RunConfig) -> Result<Dataset> {
    let dir = cfg.dataset_dir();
    if !dir.join(qhspot_core::market_data::MANIFEST_FILE).exists() {
        return Err(Error::Data(format!(
            "no dataset in {}; run `qhspot ingest` first",
            dir.display()
        )));
    }
    load_dataset(&dir)
}

fn file_len(path: &Path) -> Result<u64> {
    fs::metadata(path).map(|m| m.len()).map_err(|e| io_err(path, e))
}

fn truncate(path: &Path, len: u64) -> Result<()> {
    let f = OpenOptions::new().write(true).open(path).map_err(|e| io_err(path, e))?;
    if f.metadata().map_err(|e| io_err(path, e))?.len() < len {
        return Err(Error::Data(format!("{} is shorter than its checkpoint", path.display())));
    }
    f.set_len(len).map_err(|e| io_err(path, e))
}

fn append(path: &Path) -> Result<BufWriter<File>> {
    let f = OpenOptions::new().append(true).open(path).map_err(|e| io_err(path, e))?;
    Ok(BufWriter::new(f))
}

fn close(w: BufWriter<File>, path: &Path) -> Result<()> {
    let f = w.into_inner().map_err(|e| io_err(path, e.error()))?;
    f.sync_all().map_err(|e| io_err(path, e))
}

fn read_checkpoint(path: &Path) -> Result<Option<Checkpoint>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::Data(format!("{}: corrupt checkpoint: {e}", path.display())))
}

/// Run the rolling backtest block by block, appending to the panel, skip
/// log and model log, and checkpointing after every block. A matching
/// checkpoint resumes after its last completed block.
pub fn backtest(cfg: &RunConfig, opts: BacktestOptions) -> Result<BacktestManifest> {
    cfg.validate()?;
    let bt = &cfg.backtest;
    let data = load(cfg)?;
    data.require(&bt.required_series())?;
    let dir = cfg.backtest_dir();
    create_dir(&dir)?;
    let hash = cfg.hash();
    let (panel_path, skips_path, models_path) = (dir.join(PANEL_FILE), dir.join(SKIPS_FILE), dir.join(MODELS_FILE));
    let ck_path = dir.join(CHECKPOINT_FILE);

    let existing = if opts.fresh { None } else { read_checkpoint(&ck_path)? };
    let mut ck = match existing {
        Some(ck) if ck.config_hash != hash => {
            return Err(Error::Config(format!(
                "{} belongs to a different configuration; pass --fresh to start over",
                ck_path.display()
            )));
        }
        Some(ck) => {
            truncate(&panel_path, ck.lengths.panel)?;
            truncate(&skips_path, ck.lengths.skips)?;
            truncate(&models_path, ck.lengths.models)?;
            info!("resuming after {} completed refits", ck.completed_refits);
            ck
        }
        None => {
            let f = File::create(&panel_path).map_err(|e| io_err(&panel_path, e))?;
            write_panel_rows(&[], f, true)?;
            let f = File::create(&skips_path).map_err(|e| io_err(&skips_path, e))?;
            write_skips(&[], f, true)?;
            File::create(&models_path).map_err(|e| io_err(&models_path, e))?;
            let ck = Checkpoint {
                config_hash: hash.clone(),
                completed_refits: 0,
                last_refit: None,
                lengths: FileLengths {
                    panel: file_len(&panel_path)?,
                    skips: file_len(&skips_path)?,
                    models: 0,
                },
                panel_rows: 0,
                skips: 0,
                fits: 0,
                audit: GuardAudit::default(),
            };
            write_json(&ck_path, &ck)?;
            ck
        }
    };

    let blocks = bt.plan.blocks();
    let mut ran = 0usize;
    for (i, (refit, days)) in blocks.iter().enumerate() {
        if i < ck.completed_refits {
            continue;
        }
        if opts.max_blocks.is_some_and(|m| ran >= m) {
            break;
        }
        let block = run_block(&data, bt, *refit, days).map_err(|e| context(e, &format!("refit {refit}")))?;
        if !block.audit.violations.is_empty() {
            return Err(Error::Data(format!(
                "decision-time guard violated at refit {refit}: {}",
                block.audit.violations.join("; ")
            )));
        }

        let mut w = append(&panel_path)?;
        write_panel_rows(&block.panel.rows, &mut w, false)?;
        close(w, &panel_path)?;
        let mut w = append(&skips_path)?;
        write_skips(&block.panel.skips, &mut w, false)?;
        close(w, &skips_path)?;
        let mut w = append(&models_path)?;
        for fit in &block.fits {
            serde_json::to_writer(&mut w, fit)?;
            w.write_all(b"\n").map_err(|e| io_err(&models_path, e))?;
        }
        close(w, &models_path)?;

        ck.completed_refits = i + 1;
        ck.last_refit = Some(*refit);
        ck.lengths = FileLengths {
            panel: file_len(&panel_path)?,
            skips: file_len(&skips_path)?,
            models: file_len(&models_path)?,
        };
        ck.panel_rows += block.panel.rows.len();
        ck.skips += block.panel.skips.len();
        ck.fits += block.fits.len();
        ck.audit.merge(block.audit);
        write_json(&ck_path, &ck)?;
        ran += 1;
        info!(
            "refit {refit} ({}/{}): {} days, {} rows, {} skips",
            i + 1,
            blocks.len(),
            days.len(),
            block.panel.rows.len(),
            block.panel.skips.len()
        );
    }

    let manifest = BacktestManifest {
        config_hash: hash,
        complete: ck.completed_refits == blocks.len(),
        refits_total: blocks.len(),
        refits_completed: ck.completed_refits,
        test_range: bt.plan.test_range,
        refit_every: bt.plan.refit_every,
        models: bt.models.iter().map(|m| m.0.id()).collect(),
        targets: bt.targets.clone(),
        panel_rows: ck.panel_rows,
        skips: ck.skips,
        fits: ck.fits,
        audit: ck.audit,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
