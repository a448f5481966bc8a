//! Monte-Carlo reproduction of the three synthetic studies: a null pair with
//! CPP surrogates, a ramp phase shift and a sigmoid phase shift.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psmetrics::{sliding_apply, Metric, PsSeries, WindowSpec};
use crate::signals::{analytic_signal, design_butterworth_bandpass, filtfilt, BandSpec, FilterCoefficients};
use crate::surrogates::{cpp_surrogate, make_rng};

/// Multiplier of the SD (or SE) giving a two-sided 95% band.
pub const Z_95: f64 = 1.96;

/// Surrogate re-draws allowed per replicate before the run fails.
pub const MAX_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimId {
    /// Independent Gaussian noise, one phase series CPP-permuted.
    #[serde(alias = "null_cpp")]
    Null,
    Ramp,
    Sigmoid,
}

impl SimId {
    pub fn name(self) -> &'static str {
        match self {
            SimId::Null => "null",
            SimId::Ramp => "ramp",
            SimId::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for SimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "null" | "null_cpp" | "1" => Ok(SimId::Null),
            "ramp" | "2" => Ok(SimId::Ramp),
            "sigmoid" | "3" => Ok(SimId::Sigmoid),
            other => Err(Error::InvalidInput(format!("unknown simulation '{other}'"))),
        }
    }
}

/// How the ramp shift is scaled after the transition time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampMode {
    /// Rises linearly from 0 at `t0` to `4pi` at the final sample.
    #[default]
    Normalized,
    /// `4pi * (t - t0)` with `t` in seconds, unbounded.
    Raw,
}

/// Width of the reported band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    /// mean +/- 1.96 SD across replicates.
    #[default]
    Population,
    /// mean +/- 1.96 SD / sqrt(n).
    StandardError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub sim: SimId,
    pub tr_seconds: f64,
    pub n_samples: usize,
    pub f0_hz: f64,
    pub t0_seconds: f64,
    pub sigmoid_a: f64,
    pub sigmoid_b: f64,
    pub amp_x: f64,
    pub amp_y: f64,
    pub noise_sd: f64,
    pub band: BandSpec,
    pub windows: Vec<usize>,
    pub metrics: Vec<Metric>,
    pub n_realizations: usize,
    pub seed: u64,
    pub filtering: bool,
    pub ramp_mode: RampMode,
    pub band_mode: BandMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sim: SimId::Null,
            tr_seconds: 2.0,
            n_samples: 210,
            f0_hz: 0.05,
            t0_seconds: 170.0,
            sigmoid_a: 2.0 * PI,
            sigmoid_b: -0.01,
            amp_x: 1.0,
            amp_y: 1.0,
            noise_sd: 1.0,
            band: BandSpec::default(),
            windows: vec![30, 60, 120],
            metrics: Metric::PHASE.to_vec(),
            n_realizations: 1000,
            seed: 0,
            filtering: true,
            ramp_mode: RampMode::Normalized,
            band_mode: BandMode::Population,
        }
    }
}

impl SimConfig {
    pub fn new(sim: SimId, filtering: bool, seed: u64) -> Self {
        Self { sim, filtering, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tr_seconds > 0.0 && self.tr_seconds.is_finite()) {
            return Err(Error::InvalidInput(format!("tr_seconds must be positive, got {}", self.tr_seconds)));
        }
        if self.n_samples < crate::signals::MIN_SAMPLES {
            return Err(Error::InvalidInput(format!("n_samples {} is too small", self.n_samples)));
        }
        let t_end = self.time_seconds(self.n_samples - 1);
        if !self.t0_seconds.is_finite() || self.t0_seconds >= t_end {
            return Err(Error::InvalidInput(format!(
                "t0 = {} s is not before the last sample at {t_end} s",
                self.t0_seconds
            )));
        }
        if self.n_realizations < 1 {
            return Err(Error::InvalidInput("n_realizations must be at least 1".into()));
        }
        if self.noise_sd.is_nan() || self.noise_sd < 0.0 {
            return Err(Error::InvalidInput(format!("noise_sd must be non-negative, got {}", self.noise_sd)));
        }
        self.band.validate(self.tr_seconds)?;
        if self.metrics.is_empty() {
            return Err(Error::InvalidInput("no metrics selected".into()));
        }
        if let Some(m) = self.metrics.iter().find(|m| !m.uses_phases()) {
            return Err(Error::InvalidInput(format!("metric {m} is not a phase metric")));
        }
        if self.metrics.iter().any(|m| m.is_windowed()) {
            if self.windows.is_empty() {
                return Err(Error::InvalidInput("windowed metrics selected but no window lengths".into()));
            }
            for &w in &self.windows {
                if w < 3 || w > self.n_samples {
                    return Err(Error::InvalidInput(format!(
                        "window {w} must lie in 3..={}",
                        self.n_samples
                    )));
                }
            }
        }
        Ok(())
    }

    /// Time of sample `k` in seconds.
    pub fn time_seconds(&self, k: usize) -> f64 {
        k as f64 * self.tr_seconds
    }

    /// Phase offset of `y` relative to `x` at sample `k` (0 for the null study).
    pub fn phase_shift(&self, k: usize) -> f64 {
        let t = self.time_seconds(k);
        match self.sim {
            SimId::Null => 0.0,
            SimId::Ramp => {
                if t <= self.t0_seconds {
                    return 0.0;
                }
                match self.ramp_mode {
                    RampMode::Normalized => {
                        let t_end = self.time_seconds(self.n_samples - 1);
                        4.0 * PI * (t - self.t0_seconds) / (t_end - self.t0_seconds)
                    }
                    RampMode::Raw => 4.0 * PI * (t - self.t0_seconds),
                }
            }
            SimId::Sigmoid => self.sigmoid_a / (1.0 + (self.sigmoid_b * (t - self.t0_seconds)).exp()),
        }
    }

    /// Analysis cells in output order: each windowed metric once per window,
    /// each instantaneous metric once.
    pub fn cells(&self) -> Vec<(Metric, Option<WindowSpec>)> {
        let mut cells = Vec::new();
        for &m in &self.metrics {
            if m.is_windowed() {
                cells.extend(self.windows.iter().map(|&l| (m, Some(WindowSpec { length: l }))));
            } else {
                cells.push((m, None));
            }
        }
        cells
    }
}

fn noise<R: Rng + ?Sized>(rng: &mut R, n: usize, sd: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

/// Two independent standard-normal series.
pub fn gen_null_pair<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let x = noise(rng, config.n_samples, 1.0);
    let y = noise(rng, config.n_samples, 1.0);
    (x, y)
}

fn shifted_pair<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let w0 = 2.0 * PI * config.f0_hz;
    let n = config.n_samples;
    let ex = noise(rng, n, config.noise_sd);
    let ey = noise(rng, n, config.noise_sd);
    let x = (0..n)
        .map(|k| config.amp_x * (w0 * config.time_seconds(k)).cos() + ex[k])
        .collect();
    let y = (0..n)
        .map(|k| config.amp_y * (w0 * config.time_seconds(k) + config.phase_shift(k)).cos() + ey[k])
        .collect();
    (x, y)
}

/// Cosines at `f0` with the ramp phase shift on `y`, plus white noise.
pub fn gen_ramp_pair<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(config.sim, SimId::Ramp);
    shifted_pair(config, rng)
}

/// Cosines at `f0` with the sigmoid phase shift on `y`, plus white noise.
pub fn gen_sigmoid_pair<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(config.sim, SimId::Sigmoid);
    shifted_pair(config, rng)
}

/// Per-time-point summary of one metric/window cell across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub metric: Metric,
    pub window: Option<usize>,
    /// Sample index of the first entry.
    pub start: usize,
    pub time_s: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    pub n_valid: Vec<usize>,
    /// False where fewer than two replicates contributed.
    pub valid: Vec<bool>,
    /// Some band edge lies outside the metric's range (bands are not clipped).
    pub exceeds_range: bool,
}

impl SummaryCell {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Mean of the per-time-point means over valid points.
    pub fn time_average(&self) -> f64 {
        let pts: Vec<f64> = self.mean.iter().zip(&self.valid).filter(|(_, v)| **v).map(|(m, _)| *m).collect();
        pts.iter().sum::<f64>() / pts.len() as f64
    }

    /// Position of sample index `k` in this cell, if covered.
    pub fn index_of_sample(&self, k: usize) -> Option<usize> {
        k.checked_sub(self.start).filter(|&i| i < self.len())
    }
}

/// Rows of a summary, without cell metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRows {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    pub n_valid: Vec<usize>,
    pub valid: Vec<bool>,
}

/// Pointwise mean and 95% band over a stack of replicates.
///
/// `stack[r][t]` is replicate `r` at time `t`; `None` entries are skipped.
/// SD uses the `n - 1` denominator. Time points with fewer than two valid
/// entries are flagged invalid and carry `NaN`.
pub fn summarize(stack: &[Vec<Option<f64>>], mode: BandMode) -> Result<SummaryRows> {
    if stack.len() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 replicates, got {}", stack.len())));
    }
    let t_len = stack[0].len();
    if let Some(bad) = stack.iter().find(|r| r.len() != t_len) {
        return Err(Error::LengthMismatch { left: t_len, right: bad.len() });
    }
    let mut rows = SummaryRows {
        mean: Vec::with_capacity(t_len),
        sd: Vec::with_capacity(t_len),
        lower95: Vec::with_capacity(t_len),
        upper95: Vec::with_capacity(t_len),
        n_valid: Vec::with_capacity(t_len),
        valid: Vec::with_capacity(t_len),
    };
    for t in 0..t_len {
        let column: Vec<f64> = stack.iter().filter_map(|r| r[t]).collect();
        let n = column.len();
        rows.n_valid.push(n);
        if n < 2 {
            rows.mean.push(f64::NAN);
            rows.sd.push(f64::NAN);
            rows.lower95.push(f64::NAN);
            rows.upper95.push(f64::NAN);
            rows.valid.push(false);
            continue;
        }
        let mean = column.iter().sum::<f64>() / n as f64;
        let sd = (column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let half = match mode {
            BandMode::Population => Z_95 * sd,
            BandMode::StandardError => Z_95 * sd / (n as f64).sqrt(),
        };
        rows.mean.push(mean);
        rows.sd.push(sd);
        rows.lower95.push(mean - half);
        rows.upper95.push(mean + half);
        rows.valid.push(true);
    }
    Ok(rows)
}

/// Result of a full Monte-Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub config: SimConfig,
    pub cells: Vec<SummaryCell>,
    /// Surrogate draws that failed and were re-drawn on the next sub-stream.
    pub replicate_failures: usize,
}

impl SimSummary {
    pub fn cell(&self, metric: Metric, window: Option<usize>) -> Option<&SummaryCell> {
        self.cells.iter().find(|c| c.metric == metric && c.window == window)
    }
}

/// Random stream for attempt `attempt` of replicate `replicate`.
fn stream_id(replicate: usize, attempt: u64) -> u64 {
    ((replicate as u64) << 32) | attempt
}

struct Replicate {
    series: Vec<PsSeries>,
    failures: usize,
}

fn phase_of(series: &[f64], filter: Option<&FilterCoefficients>) -> Result<Vec<f64>> {
    match filter {
        Some(c) => analytic_signal(&filtfilt(c, series)?).map(|a| a.phase),
        None => analytic_signal(series).map(|a| a.phase),
    }
}

fn run_replicate(config: &SimConfig, filter: Option<&FilterCoefficients>, r: usize) -> Result<Replicate> {
    let cells = config.cells();
    let mut failures = 0;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = make_rng(config.seed, stream_id(r, attempt));
        let (x, y) = match config.sim {
            SimId::Null => gen_null_pair(config, &mut rng),
            SimId::Ramp => gen_ramp_pair(config, &mut rng),
            SimId::Sigmoid => gen_sigmoid_pair(config, &mut rng),
        };
        let px = phase_of(&x, filter)?;
        let mut py = phase_of(&y, filter)?;
        if config.sim == SimId::Null {
            match cpp_surrogate(&py, &mut rng) {
                Ok(s) => py = s,
                Err(Error::TooFewCycles { .. }) => {
                    failures += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
        }
        let series = cells
            .iter()
            .map(|&(m, w)| sliding_apply(m, &px, &py, w))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Replicate { series, failures });
    }
    Err(Error::TooFewCycles { found: 0, needed: crate::surrogates::MIN_WRAP_EVENTS })
}

/// Runs every replicate and summarizes each metric/window cell.
///
/// Replicate `r` draws from its own stream of the seeded generator, so the
/// output is bit-identical regardless of thread count.
pub fn run_simulation(config: &SimConfig) -> Result<SimSummary> {
    config.validate()?;
    let filter = if config.filtering {
        Some(design_butterworth_bandpass(&config.band, config.tr_seconds)?)
    } else {
        None
    };
    let replicates: Vec<Replicate> = (0..config.n_realizations)
        .into_par_iter()
        .map(|r| run_replicate(config, filter.as_ref(), r))
        .collect::<Result<_>>()?;
    let replicate_failures = replicates.iter().map(|r| r.failures).sum();

    let mut cells = Vec::new();
    for (c, (metric, window)) in config.cells().into_iter().enumerate() {
        let stack: Vec<Vec<Option<f64>>> = replicates
            .iter()
            .map(|rep| {
                let s = &rep.series[c];
                (0..s.len()).map(|k| s.get(k)).collect()
            })
            .collect();
        let start = replicates[0].series[c].start;
        let rows = if stack.len() >= 2 {
            summarize(&stack, config.band_mode)?
        } else {
            single_replicate_rows(&stack[0])
        };
        let (lo, hi) = metric.range();
        let exceeds_range = rows
            .lower95
            .iter()
            .zip(&rows.upper95)
            .zip(&rows.valid)
            .any(|((l, u), v)| *v && (*l < lo || *u > hi));
        let time_s = (0..rows.mean.len()).map(|k| config.time_seconds(start + k)).collect();
        cells.push(SummaryCell {
            metric,
            window: window.map(|w| w.length),
            start,
            time_s,
            mean: rows.mean,
            sd: rows.sd,
            lower95: rows.lower95,
            upper95: rows.upper95,
            n_valid: rows.n_valid,
            valid: rows.valid,
            exceeds_range,
        });
    }
    Ok(SimSummary { config: config.clone(), cells, replicate_failures })
}

/// A single replicate has a mean but no spread.
fn single_replicate_rows(row: &[Option<f64>]) -> SummaryRows {
    let mean: Vec<f64> = row.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    SummaryRows {
        sd: vec![f64::NAN; row.len()],
        lower95: vec![f64::NAN; row.len()],
        upper95: vec![f64::NAN; row.len()],
        n_valid: row.iter().map(|v| usize::from(v.is_some())).collect(),
        valid: vec![false; row.len()],
        mean,
    }
}
