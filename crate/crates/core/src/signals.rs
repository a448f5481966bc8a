//! From raw real-valued series to narrow-band instantaneous phase: Butterworth
//! band-pass design, zero-phase forward-backward filtering and the FFT-based
//! analytic signal.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::circular::wrap_signed_unchecked;
use crate::error::{Error, Result};

/// Minimum number of samples accepted for a region series.
pub const MIN_SAMPLES: usize = 16;

/// A multi-region recording: `R` regions by `T` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiDataset {
    values: Vec<Vec<f64>>,
    tr_seconds: f64,
    region_labels: Vec<String>,
}

impl RoiDataset {
    /// `values` holds one row per region.
    pub fn new(values: Vec<Vec<f64>>, tr_seconds: f64, region_labels: Vec<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("dataset has no regions".into()));
        }
        let t = values[0].len();
        if t < MIN_SAMPLES {
            return Err(Error::SeriesTooShort { len: t, min: MIN_SAMPLES - 1 });
        }
        for (r, row) in values.iter().enumerate() {
            if row.len() != t {
                return Err(Error::LengthMismatch { left: t, right: row.len() });
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite value at region {r}, sample {i}"
                )));
            }
        }
        if !(tr_seconds > 0.0 && tr_seconds.is_finite()) {
            return Err(Error::InvalidInput(format!("tr_seconds must be positive, got {tr_seconds}")));
        }
        if region_labels.len() != values.len() {
            return Err(Error::LengthMismatch { left: values.len(), right: region_labels.len() });
        }
        Ok(Self { values, tr_seconds, region_labels })
    }

    /// Labels regions `R1..RR`.
    pub fn unlabeled(values: Vec<Vec<f64>>, tr_seconds: f64) -> Result<Self> {
        let labels = (1..=values.len()).map(|r| format!("R{r}")).collect();
        Self::new(values, tr_seconds, labels)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn n_regions(&self) -> usize {
        self.values.len()
    }

    pub fn n_samples(&self) -> usize {
        self.values[0].len()
    }

    pub fn tr_seconds(&self) -> f64 {
        self.tr_seconds
    }

    pub fn region_labels(&self) -> &[String] {
        &self.region_labels
    }
}

/// Pass band of the Butterworth filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    5
}

impl Default for BandSpec {
    fn default() -> Self {
        Self { low_hz: 0.03, high_hz: 0.07, order: 5 }
    }
}

impl BandSpec {
    pub fn new(low_hz: f64, high_hz: f64, order: usize) -> Self {
        Self { low_hz, high_hz, order }
    }

    pub fn validate(&self, tr_seconds: f64) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidOrder(self.order));
        }
        let nyquist_hz = 0.5 / tr_seconds;
        let ok = self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < nyquist_hz;
        if !ok || !self.low_hz.is_finite() || !self.high_hz.is_finite() {
            return Err(Error::InvalidBand { low_hz: self.low_hz, high_hz: self.high_hz, nyquist_hz });
        }
        Ok(())
    }
}

/// Digital transfer function `B(z) / A(z)`, coefficients in ascending powers
/// of `z^-1`, with `a[0] == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

impl FilterCoefficients {
    /// Order of the denominator polynomial.
    pub fn order(&self) -> usize {
        self.a.len() - 1
    }

    /// Edge padding used by [`filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * self.order()
    }
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = coeffs.clone();
        next.push(Complex64::new(0.0, 0.0));
        for i in 1..next.len() {
            next[i] -= r * coeffs[i - 1];
        }
        coeffs = next;
    }
    coeffs
}

/// Designs a Butterworth band-pass of analog prototype order `spec.order`.
///
/// The digital filter has order `2 * spec.order`. Band edges are pre-warped,
/// the low-pass prototype is mapped to a band-pass in the analog domain and
/// then discretized with the bilinear transform.
pub fn design_butterworth_bandpass(spec: &BandSpec, tr_seconds: f64) -> Result<FilterCoefficients> {
    if !(tr_seconds > 0.0 && tr_seconds.is_finite()) {
        return Err(Error::InvalidInput(format!("tr_seconds must be positive, got {tr_seconds}")));
    }
    spec.validate(tr_seconds)?;
    let n = spec.order;
    let fs = 1.0 / tr_seconds;
    let fs2 = 2.0 * fs;

    let warp = |f: f64| fs2 * (PI * f / fs).tan();
    let (wl, wh) = (warp(spec.low_hz), warp(spec.high_hz));
    let bw = wh - wl;
    let w0 = (wl * wh).sqrt();

    // Analog low-pass prototype poles on the left half of the unit circle.
    let proto: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect();

    // Low-pass to band-pass: each pole splits in two, n zeros at s = 0.
    let mut poles = Vec::with_capacity(2 * n);
    for &p in &proto {
        let scaled = p * (bw / 2.0);
        let disc = (scaled * scaled - w0 * w0).sqrt();
        poles.push(scaled + disc);
        poles.push(scaled - disc);
    }
    let analog_gain = bw.powi(n as i32);

    // Bilinear transform. Zeros at s = 0 map to z = 1, the n zeros at
    // infinity map to z = -1.
    let one = Complex64::new(1.0, 0.0);
    let zpoles: Vec<Complex64> = poles.iter().map(|&p| (fs2 + p) / (fs2 - p)).collect();
    let mut zzeros = vec![one; n];
    zzeros.extend(std::iter::repeat_n(-one, n));
    let denom: Complex64 = poles.iter().map(|&p| fs2 - p).product();
    let num = Complex64::new(fs2.powi(n as i32), 0.0);
    let gain = analog_gain * (num / denom).re;

    let b = poly_from_roots(&zzeros).into_iter().map(|c| gain * c.re).collect();
    let a = poly_from_roots(&zpoles).into_iter().map(|c| c.re).collect();
    Ok(FilterCoefficients { b, a })
}

/// Direct-form II transposed IIR filter with initial state `zi`.
fn lfilter(coeffs: &FilterCoefficients, x: &[f64], zi: &[f64]) -> Vec<f64> {
    let (b, a) = (&coeffs.b, &coeffs.a);
    let m = a.len().max(b.len());
    let coef = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(0.0);
    let mut z = vec![0.0; m - 1];
    z.copy_from_slice(zi);
    let mut y = Vec::with_capacity(x.len());
    for &xn in x {
        let yn = coef(b, 0) * xn + z[0];
        for i in 0..m - 2 {
            z[i] = coef(b, i + 1) * xn + z[i + 1] - coef(a, i + 1) * yn;
        }
        z[m - 2] = coef(b, m - 1) * xn - coef(a, m - 1) * yn;
        y.push(yn);
    }
    y
}

/// Steady-state filter state for a unit step input.
fn lfilter_zi(coeffs: &FilterCoefficients) -> Vec<f64> {
    let (b, a) = (&coeffs.b, &coeffs.a);
    let m = a.len().max(b.len());
    let coef = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(0.0);
    let n = m - 1;
    // (I - C^T) zi = b[1:] - a[1:] b[0], with C the companion matrix of a.
    let mut lhs = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        lhs[(i, 0)] += coef(a, i + 1);
    }
    for i in 0..n - 1 {
        lhs[(i, i + 1)] -= 1.0;
    }
    let rhs = DVector::from_iterator(n, (1..=n).map(|i| coef(b, i) - coef(a, i) * coef(b, 0)));
    match lhs.lu().solve(&rhs) {
        Some(zi) => zi.iter().copied().collect(),
        None => vec![0.0; n],
    }
}

/// Zero-phase forward-backward filtering.
///
/// The series is extended at both ends by odd reflection over
/// [`FilterCoefficients::pad_len`] samples; each pass starts from the
/// steady-state initial condition scaled to the first sample it sees.
pub fn filtfilt(coeffs: &FilterCoefficients, series: &[f64]) -> Result<Vec<f64>> {
    let n = series.len();
    let min = 3 * (coeffs.order() + 1);
    if n <= min {
        return Err(Error::SeriesTooShort { len: n, min });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample in series".into()));
    }
    let pad = coeffs.pad_len();
    let (first, last) = (series[0], series[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - series[i]));
    ext.extend_from_slice(series);
    ext.extend((n - 1 - pad..n - 1).rev().map(|i| 2.0 * last - series[i]));

    let zi = lfilter_zi(coeffs);
    let scaled = |x0: f64| zi.iter().map(|z| z * x0).collect::<Vec<_>>();
    let mut forward = lfilter(coeffs, &ext, &scaled(ext[0]));
    forward.reverse();
    let mut backward = lfilter(coeffs, &forward, &scaled(forward[0]));
    backward.reverse();
    Ok(backward[pad..pad + n].to_vec())
}

/// Envelope and wrapped phase of an analytic signal.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticSignal {
    pub envelope: Vec<f64>,
    pub phase: Vec<f64>,
}

/// Discrete analytic signal `x + j H{x}` computed with a full-length FFT.
pub fn analytic_complex(series: &[f64]) -> Result<Vec<Complex64>> {
    let n = series.len();
    if n < MIN_SAMPLES {
        return Err(Error::SeriesTooShort { len: n, min: MIN_SAMPLES - 1 });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample in series".into()));
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = series.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);

    // Bin 0 (and n/2 for even n) keep weight 1; positive bins double.
    let positive_end = n.div_ceil(2);
    for bin in buf.iter_mut().take(positive_end).skip(1) {
        *bin *= 2.0;
    }
    let zero_from = if n.is_multiple_of(2) { n / 2 + 1 } else { positive_end };
    for bin in buf.iter_mut().skip(zero_from) {
        *bin = Complex64::new(0.0, 0.0);
    }

    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    Ok(buf)
}

/// Envelope and instantaneous phase (wrapped to `[-pi, pi)`).
///
/// The phase is only meaningful for narrow-band input; callers should
/// band-pass first.
pub fn analytic_signal(series: &[f64]) -> Result<AnalyticSignal> {
    let z = analytic_complex(series)?;
    let envelope = z.iter().map(|c| c.norm()).collect();
    let phase = z.iter().map(|c| wrap_signed_unchecked(c.arg())).collect();
    Ok(AnalyticSignal { envelope, phase })
}

/// Instantaneous phases, one row per region.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrix {
    phases: Vec<Vec<f64>>,
    tr_seconds: f64,
}

impl PhaseMatrix {
    pub fn new(phases: Vec<Vec<f64>>, tr_seconds: f64) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::InvalidInput("phase matrix has no rows".into()));
        }
        let t = phases[0].len();
        for row in &phases {
            if row.len() != t {
                return Err(Error::LengthMismatch { left: t, right: row.len() });
            }
            if let Some(p) = row.iter().find(|p| !(-PI..PI).contains(*p)) {
                return Err(Error::InvalidInput(format!("phase {p} outside [-pi, pi)")));
            }
        }
        Ok(Self { phases, tr_seconds })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.phases
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.phases[r]
    }

    pub fn n_regions(&self) -> usize {
        self.phases.len()
    }

    pub fn n_samples(&self) -> usize {
        self.phases[0].len()
    }

    pub fn tr_seconds(&self) -> f64 {
        self.tr_seconds
    }
}

/// Band-passes every region of `data` with a zero-phase filter.
pub fn band_limit(data: &RoiDataset, spec: &BandSpec) -> Result<Vec<Vec<f64>>> {
    let coeffs = design_butterworth_bandpass(spec, data.tr_seconds())?;
    data.rows().par_iter().map(|row| filtfilt(&coeffs, row)).collect()
}

/// Wrapped instantaneous phase of each row, without filtering.
pub fn phases_of(rows: &[Vec<f64>], tr_seconds: f64) -> Result<PhaseMatrix> {
    let phases = rows
        .par_iter()
        .map(|row| analytic_signal(row).map(|a| a.phase))
        .collect::<Result<Vec<_>>>()?;
    PhaseMatrix::new(phases, tr_seconds)
}

/// Filter then analytic signal, per region.
pub fn extract_phases(data: &RoiDataset, spec: &BandSpec) -> Result<PhaseMatrix> {
    let filtered = band_limit(data, spec)?;
    phases_of(&filtered, data.tr_seconds())
}

/// Unwraps a wrapped phase series by removing `2pi` jumps.
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (i, &p) in phase.iter().enumerate() {
        if i > 0 {
            let d = p - phase[i - 1];
            if d < -PI {
                offset += 2.0 * PI;
            } else if d > PI {
                offset -= 2.0 * PI;
            }
        }
        out.push(p + offset);
    }
    out
}
