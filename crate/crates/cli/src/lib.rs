//! `phasesync` command-line front end.
//!
//! Exit codes: 0 success, 1 computation failure, 2 configuration or input
//! failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use phasesync::simharness::SimId;
use phasesync::Metric;

pub mod commands;
pub mod config;

use config::{parse_band, parse_k_range, parse_metric, FileConfig, TensorFormat};

pub const EXIT_OK: u8 = 0;
pub const EXIT_COMPUTE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;

/// Thread cap for the parallel sections.
pub const THREADS_ENV: &str = "PHASESYNC_THREADS";

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Compute(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Compute(m) => write!(f, "computation failed: {m}"),
        }
    }
}

impl From<phasesync::Error> for CliError {
    fn from(e: phasesync::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Compute(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "phasesync", version, about = "Time-varying phase synchronization analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML or JSON config file (a run manifest is accepted too).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo simulation study; writes one summary CSV per cell.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = parse_sim)]
        sim: Option<SimId>,
        #[arg(long, value_enum)]
        filter: Option<Toggle>,
        #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
        metrics: Option<Vec<Metric>>,
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<usize>>,
        #[arg(long)]
        reps: Option<usize>,
        /// Pass band in Hz, `low,high`.
        #[arg(long, value_parser = parse_band, allow_hyphen_values = true)]
        band: Option<(f64, f64)>,
    },
    /// Per-subject pairwise synchronization tensors from ROI CSVs.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        /// JSON subject manifest: {"tr_seconds": .., "subjects": [{"id": .., "path": ..}]}.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_parser = parse_metric)]
        metrics: Option<Vec<Metric>>,
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<usize>>,
        #[arg(long, value_parser = parse_band, allow_hyphen_values = true)]
        band: Option<(f64, f64)>,
        #[arg(long, value_enum)]
        format: Option<TensorFormat>,
        /// Also write phase matrices.
        #[arg(long)]
        phases: bool,
    },
    /// k-means connectivity states from a directory of tensors.
    States {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of per-subject tensor files (`.csv` or `.bin`).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Number of states to report.
        #[arg(long)]
        k: Option<usize>,
        /// k sweep, `a..b`; without `--k` the state count is chosen by minimum DBI.
        #[arg(long, value_parser = parse_k_range)]
        k_range: Option<(usize, usize)>,
        #[arg(long)]
        restarts: Option<usize>,
        /// k-means++ seeding instead of uniform column draws.
        #[arg(long)]
        kmeans_pp: bool,
    },
    /// Compares the estimators against brute-force references.
    OracleCheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Random windows per metric.
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, hide = true)]
        perturb_toroidal: bool,
    },
}

fn parse_sim(s: &str) -> Result<SimId, String> {
    s.parse::<SimId>().map_err(|e| e.to_string())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(text) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::input(format!("{THREADS_ENV} must be a positive integer, got '{text}'")))?;
    // A pool may already exist when called repeatedly in-process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn load_config(common: &CommonArgs) -> Result<FileConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    cfg.apply_seed(common.seed);
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { common, sim, filter, metrics, windows, reps, band } => {
            let mut cfg = load_config(&common)?;
            let s = &mut cfg.simulate;
            if let Some(v) = sim {
                s.sim = v;
            }
            if let Some(f) = filter {
                s.filtering = f == Toggle::On;
            }
            if let Some(m) = metrics {
                s.metrics = m;
            }
            if let Some(w) = windows {
                s.windows = w;
            }
            if let Some(r) = reps {
                s.n_realizations = r;
            }
            if let Some((lo, hi)) = band {
                s.band.low_hz = lo;
                s.band.high_hz = hi;
            }
            commands::simulate(&cfg, &out_dir(&common)?)
        }
        Command::Analyze { common, manifest, metrics, windows, band, format, phases } => {
            let mut cfg = load_config(&common)?;
            let a = &mut cfg.analyze;
            if manifest.is_some() {
                a.manifest = manifest;
            }
            if let Some(m) = metrics {
                a.metrics = m;
            }
            if let Some(w) = windows {
                a.windows = w;
            }
            if let Some((lo, hi)) = band {
                a.band.low_hz = lo;
                a.band.high_hz = hi;
            }
            if let Some(f) = format {
                a.format = f;
            }
            a.write_phases |= phases;
            commands::analyze(&cfg, &out_dir(&common)?)
        }
        Command::States { common, input, k, k_range, restarts, kmeans_pp } => {
            let mut cfg = load_config(&common)?;
            let s = &mut cfg.states;
            if input.is_some() {
                s.input = input;
            }
            if let Some((lo, hi)) = k_range {
                s.k_min = lo;
                s.k_max = hi;
                s.select_by_dbi = k.is_none();
            }
            if let Some(k) = k {
                s.k = k;
                s.select_by_dbi = false;
            }
            if let Some(r) = restarts {
                s.restarts = r;
            }
            if kmeans_pp {
                s.init = phasesync::states::Init::PlusPlus;
            }
            commands::states(&cfg, &out_dir(&common)?)
        }
        Command::OracleCheck { common, cases, perturb_toroidal } => {
            let cfg = load_config(&common)?;
            commands::oracle_check(cfg.seed, cases, perturb_toroidal, common.out.as_deref())
        }
    }
}

fn out_dir(common: &CommonArgs) -> Result<PathBuf, CliError> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("phasesync-out"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("phasesync: {e}");
            e.code()
        }
    }
}
