//! Command pipeline behind the `qhspot` binary: ingest, backtest, evaluate
//! and portfolio stages handing off through files in one output directory.

pub mod backtest;
pub mod config;
pub mod evaluate;
pub mod ingest;
mod output;
pub mod portfolio;
pub mod synth;

pub use config::RunConfig;

use qhspot_core::{Error, ErrorKind};

/// Process exit code for a failed command.
pub fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}
