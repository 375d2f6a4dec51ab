use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qhspot_cli::backtest::{backtest, BacktestOptions};
use qhspot_cli::evaluate::evaluate;
use qhspot_cli::ingest::ingest;
use qhspot_cli::portfolio::portfolio;
use qhspot_cli::synth::{synth, SynthOptions};
use qhspot_cli::{exit_code, RunConfig};
use qhspot_core::backtest::ModelId;
use qhspot_core::simulate::Dgp;
use qhspot_core::Result;

#[derive(Parser)]
#[command(name = "qhspot", version, about = "Quarter-hourly electricity price forecasting and trading backtests")]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding the configuration.
    #[arg(long, global = true, env = "QHSPOT_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct BacktestArgs {
    /// Refit every N days instead of the configured interval.
    #[arg(long)]
    refit_every: Option<u32>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Ignore an existing checkpoint and start from the first test day.
    #[arg(long)]
    fresh: bool,
    /// Stop after this many refit blocks; a later run resumes.
    #[arg(long)]
    max_blocks: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DgpArg {
    Market,
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// Read the configured CSV inputs and store an aligned dataset.
    Ingest,
    /// Run the rolling backtest on the ingested dataset.
    Backtest(BacktestArgs),
    /// Accuracy metrics and forecast comparison tests on the panel.
    Evaluate,
    /// Trading strategies, their summaries, tests and savings.
    Portfolio {
        /// Position size in MW, overriding the configuration.
        #[arg(long)]
        volume: Option<f64>,
    },
    /// Ingest, backtest, evaluate and portfolio in one go.
    Run {
        #[command(flatten)]
        backtest: BacktestArgs,
        #[arg(long)]
        volume: Option<f64>,
    },
    /// Write a simulated dataset and a matching configuration.
    Synth {
        /// Directory for the series CSVs and config.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        dgp: Option<DgpArg>,
        #[arg(long)]
        train_days: Option<usize>,
        #[arg(long)]
        refit_every: Option<u32>,
        /// Comma-separated model ids, e.g. Naive_EXAA,Expert_EN_EXAA.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
    },
}

fn apply_backtest_args(cfg: &mut RunConfig, args: BacktestArgs) -> BacktestOptions {
    if let Some(r) = args.refit_every {
        cfg.backtest.plan.refit_every = r;
    }
    if let Some(j) = args.jobs {
        cfg.backtest.jobs = j;
    }
    BacktestOptions {
        fresh: args.fresh,
        max_blocks: args.max_blocks,
    }
}

fn run_backtest(cfg: &RunConfig, opts: BacktestOptions) -> Result<()> {
    let m = backtest(cfg, opts)?;
    println!(
        "backtest: {}/{} refits, {} panel rows, {} skips{}",
        m.refits_completed,
        m.refits_total,
        m.panel_rows,
        m.skips,
        if m.complete { "" } else { " (incomplete, rerun to resume)" }
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir;
    }
    match cli.command {
        Command::Ingest => {
            let m = ingest(&cfg)?;
            println!("ingest: {} series, {}..{}", m.series.len(), m.first_date, m.last_date);
        }
        Command::Backtest(args) => {
            let opts = apply_backtest_args(&mut cfg, args);
            run_backtest(&cfg, opts)?;
        }
        Command::Evaluate => {
            let r = evaluate(&cfg)?;
            println!("evaluate: {} models, {} panel rows", r.models.len(), r.panel_rows);
        }
        Command::Portfolio { volume } => {
            let r = portfolio(&cfg, volume)?;
            println!("portfolio: {} strategies over {} slots", r.strategies.len(), r.slots);
        }
        Command::Run { backtest: args, volume } => {
            let opts = apply_backtest_args(&mut cfg, args);
            let m = ingest(&cfg)?;
            println!("ingest: {} series, {}..{}", m.series.len(), m.first_date, m.last_date);
            run_backtest(&cfg, opts)?;
            let r = evaluate(&cfg)?;
            println!("evaluate: {} models, {} panel rows", r.models.len(), r.panel_rows);
            let r = portfolio(&cfg, volume)?;
            println!("portfolio: {} strategies over {} slots", r.strategies.len(), r.slots);
        }
        Command::Synth {
            out,
            days,
            seed,
            dgp,
            train_days,
            refit_every,
            models,
        } => {
            if let Some(d) = days {
                cfg.synth.days = d;
            }
            if let Some(s) = seed {
                cfg.synth.seed = s;
            }
            if let Some(g) = dgp {
                cfg.synth.dgp = match g {
                    DgpArg::Market => Dgp::Market,
                    DgpArg::Linear => Dgp::Linear,
                };
            }
            let models = models
                .map(|ms| ms.iter().map(|m| m.parse().map(ModelId)).collect::<Result<Vec<_>>>())
                .transpose()?;
            let opts = SynthOptions {
                train_days,
                refit_every,
                models,
            };
            let path = synth(&cfg, &out, &opts)?;
            println!("synth: {} days written, config at {}", cfg.synth.days, path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
