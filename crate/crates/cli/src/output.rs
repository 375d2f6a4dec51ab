use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use qhspot_core::{Error, Result};

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub(crate) fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    w.write_record(header).map_err(|e| io_err(path, e))?;
    Ok(w)
}

/// Write one CSV record of already formatted fields.
pub(crate) fn record<W: std::io::Write>(w: &mut csv::Writer<W>, path: &Path, fields: &[String]) -> Result<()> {
    w.write_record(fields).map_err(|e| io_err(path, e))
}

pub(crate) fn finish<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| io_err(path, e))
}

/// Pretty JSON written to a temporary sibling and renamed into place.
pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let json = serde_json::to_string_pretty(value)?;
    fs::write(&tmp, json + "\n").map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub(crate) fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Prefix an error message with context, keeping its exit-code class.
pub(crate) fn context(e: Error, ctx: &str) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
        Error::Data(m) => Error::Data(format!("{ctx}: {m}")),
        other => Error::Data(format!("{ctx}: {other}")),
    }
}
