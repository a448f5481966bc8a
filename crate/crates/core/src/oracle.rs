//! Self-check suite: the estimators are compared against brute-force
//! reimplementations that share no code with them, the band-pass design is
//! checked by evaluating its transfer function on the unit circle, and the
//! summary bands are checked for their nominal coverage.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::psmetrics::{sliding_apply, Metric, PsSeries, WindowSpec};
use crate::signals::{design_butterworth_bandpass, BandSpec};
use crate::simharness::{summarize, BandMode};
use crate::surrogates::make_rng;

/// Tolerance for estimator-versus-oracle agreement.
pub const ESTIMATOR_TOLERANCE: f64 = 1e-12;

/// The estimator under test; [`sliding_apply`] unless a fixture swaps it.
pub type Estimator = fn(Metric, &[f64], &[f64], Option<WindowSpec>) -> Result<PsSeries>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub metric: Option<Metric>,
    /// Window length at which the largest deviation occurred.
    pub window: Option<usize>,
    pub cases: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&OracleCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub seed: u64,
    /// Random windows per windowed metric.
    pub windows: usize,
    pub min_window: usize,
    pub max_window: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { seed: 20_240_601, windows: 1000, min_window: 4, max_window: 32 }
    }
}

// ---- brute-force references -------------------------------------------

fn plv_ref(x: &[f64], y: &[f64]) -> Option<f64> {
    let z: Complex64 = x.iter().zip(y).map(|(a, b)| Complex64::from_polar(1.0, a - b)).sum();
    Some(z.norm() / x.len() as f64)
}

fn circ_mean_ref(p: &[f64]) -> Option<f64> {
    let s: f64 = p.iter().map(|v| v.sin()).sum();
    let c: f64 = p.iter().map(|v| v.cos()).sum();
    if (s * s + c * c).sqrt() / (p.len() as f64) < 1e-12 {
        return None;
    }
    Some(s.atan2(c))
}

fn circ_circ_ref(x: &[f64], y: &[f64]) -> Option<f64> {
    let mx = circ_mean_ref(x)?;
    let my = circ_mean_ref(y)?;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx).sin() * (b - my).sin()).sum();
    let dx: f64 = x.iter().map(|a| (a - mx).sin().powi(2)).sum();
    let dy: f64 = y.iter().map(|b| (b - my).sin().powi(2)).sum();
    if dx < 1e-12 || dy < 1e-12 {
        return None;
    }
    Some(num / (dx * dy).sqrt())
}

fn order_ref(a: f64, b: f64) -> f64 {
    let d = a.rem_euclid(2.0 * PI) - b.rem_euclid(2.0 * PI);
    if d >= 0.0 {
        d - PI
    } else {
        d + PI
    }
}

/// Sums over every ordered pair `i != j`, which doubles each term of the
/// strict-pair form and so leaves the ratio unchanged.
fn toroidal_ref(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let hx = order_ref(x[i], x[j]);
            let hy = order_ref(y[i], y[j]);
            num += hx * hy;
            dx += hx * hx;
            dy += hy * hy;
        }
    }
    if dx < 2e-12 || dy < 2e-12 {
        return None;
    }
    Some(num / (dx * dy).sqrt())
}

fn pearson_ref(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some((n * sxy - sx * sy) / (vx * vy).sqrt())
}

fn ar1_residuals_ref(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let mut num = 0.0;
    for t in 1..x.len() {
        num += (x[t] - m) * (x[t - 1] - m);
    }
    let den: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    let rho = num / den;
    (1..x.len()).map(|t| x[t] - rho * x[t - 1]).collect()
}

type WindowRef = dyn Fn(&[f64], &[f64]) -> Option<f64>;

/// Expected series for `metric` on `x, y` with trailing windows of `l`.
fn reference_series(metric: Metric, x: &[f64], y: &[f64], l: usize) -> (usize, Vec<Option<f64>>) {
    let n = x.len();
    let slide = |f: &WindowRef, a: &[f64], b: &[f64]| -> Vec<Option<f64>> {
        (l..=a.len()).map(|end| f(&a[end - l..end], &b[end - l..end])).collect()
    };
    match metric {
        Metric::Plv => (l - 1, slide(&plv_ref, x, y)),
        Metric::CircCirc => (l - 1, slide(&circ_circ_ref, x, y)),
        Metric::Toroidal => (l - 1, slide(&toroidal_ref, x, y)),
        Metric::Csw => (l - 1, slide(&pearson_ref, x, y)),
        Metric::PwCsw => (l, slide(&pearson_ref, &ar1_residuals_ref(x), &ar1_residuals_ref(y))),
        Metric::Coherence => (0, (0..n).map(|t| Some(1.0 - (x[t] - y[t]).sin().abs())).collect()),
        Metric::Crp => (0, (0..n).map(|t| Some((x[t] - y[t]).cos())).collect()),
    }
}

fn random_inputs<R: Rng>(metric: Metric, n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let coupling: f64 = rng.random_range(0.0..2.0);
    if metric.uses_phases() {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
        let y = x
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(rng);
                (v + 0.7 + coupling * z + PI).rem_euclid(2.0 * PI) - PI
            })
            .collect();
        (x, y)
    } else {
        let mut x = Vec::with_capacity(n);
        let mut prev = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            prev = 0.5 * prev + z;
            x.push(prev);
        }
        let y = x
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(rng);
                v + coupling * z
            })
            .collect();
        (x, y)
    }
}

/// Compares `estimator` with the references over random windows.
pub fn check_estimator(metric: Metric, estimator: Estimator, options: &OracleOptions) -> OracleCheck {
    let mut rng = make_rng(options.seed, metric.id() as u64);
    let mut worst = (0.0f64, None);
    let mut failure = None;
    let mut cases = 0;
    for _ in 0..options.windows {
        let l = rng.random_range(options.min_window..=options.max_window);
        let extra = rng.random_range(0..4usize);
        let n = l + extra + usize::from(metric == Metric::PwCsw) + 8;
        let (x, y) = random_inputs(metric, n, &mut rng);
        let window = metric.is_windowed().then_some(WindowSpec { length: l });
        let (start, expected) = reference_series(metric, &x, &y, l);
        let got = match estimator(metric, &x, &y, window) {
            Ok(s) => s,
            Err(e) => {
                failure.get_or_insert(format!("estimator error at L = {l}: {e}"));
                continue;
            }
        };
        if got.start != start || got.len() != expected.len() {
            failure.get_or_insert(format!(
                "alignment at L = {l}: start {} len {}, expected start {start} len {}",
                got.start,
                got.len(),
                expected.len()
            ));
            continue;
        }
        for (k, e) in expected.iter().enumerate() {
            cases += 1;
            match (got.get(k), e) {
                (Some(a), Some(b)) => {
                    let d = (a - b).abs();
                    if d.is_nan() || d > worst.0 {
                        worst = (if d.is_nan() { f64::INFINITY } else { d }, window.map(|w| w.length));
                    }
                }
                (None, None) => {}
                (a, b) => {
                    failure.get_or_insert(format!("missingness differs at L = {l}, k = {k}: {a:?} vs {b:?}"));
                }
            }
        }
    }
    let passed = failure.is_none() && worst.0 <= ESTIMATOR_TOLERANCE;
    OracleCheck {
        name: metric.name().to_string(),
        metric: Some(metric),
        window: worst.1,
        cases,
        max_deviation: worst.0,
        tolerance: ESTIMATOR_TOLERANCE,
        passed,
        detail: failure.unwrap_or_default(),
    }
}

fn gain(b: &[f64], a: &[f64], f_hz: f64, fs: f64) -> f64 {
    let z = Complex64::from_polar(1.0, -2.0 * PI * f_hz / fs);
    let poly = |c: &[f64]| c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * z + v);
    (poly(b) / poly(a)).norm()
}

/// Default band at TR 2 s: unit-ish passband gain at 0.05 Hz and
/// attenuation at 0.01 Hz and 0.13 Hz.
pub fn check_filter_response() -> OracleCheck {
    let spec = BandSpec::default();
    let (name, tr) = ("filter_response".to_string(), 2.0);
    match design_butterworth_bandpass(&spec, tr) {
        Ok(c) => {
            let fs = 1.0 / tr;
            let g = |f| gain(&c.b, &c.a, f, fs);
            let (mid, low, high) = (g(0.05), g(0.01), g(0.13));
            let passed = (std::f64::consts::FRAC_1_SQRT_2..=1.0 + 1e-9).contains(&mid) && mid > low && mid > high;
            OracleCheck {
                name,
                metric: None,
                window: None,
                cases: 3,
                max_deviation: (1.0 - mid).abs(),
                tolerance: 1.0 - std::f64::consts::FRAC_1_SQRT_2,
                passed,
                detail: format!("|H| at 0.01/0.05/0.13 Hz = {low:.6}/{mid:.6}/{high:.6}"),
            }
        }
        Err(e) => OracleCheck {
            name,
            metric: None,
            window: None,
            cases: 0,
            max_deviation: f64::INFINITY,
            tolerance: 0.0,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Fraction of standard-normal replicate values inside the population band;
/// nominally 95%.
pub fn check_band_coverage(seed: u64) -> OracleCheck {
    let (reps, points) = (1000, 200);
    let mut rng = make_rng(seed, u64::MAX);
    let stack: Vec<Vec<Option<f64>>> = (0..reps)
        .map(|_| (0..points).map(|_| Some(StandardNormal.sample(&mut rng))).collect())
        .collect();
    let name = "band_coverage".to_string();
    match summarize(&stack, BandMode::Population) {
        Ok(rows) => {
            let inside = stack
                .iter()
                .flat_map(|r| r.iter().enumerate())
                .filter(|(t, v)| {
                    let v = v.unwrap();
                    rows.lower95[*t] <= v && v <= rows.upper95[*t]
                })
                .count();
            let frac = inside as f64 / (reps * points) as f64;
            OracleCheck {
                name,
                metric: None,
                window: None,
                cases: reps * points,
                max_deviation: (frac - 0.95).abs(),
                tolerance: 0.01,
                passed: (frac - 0.95).abs() <= 0.01,
                detail: format!("coverage {frac:.4}"),
            }
        }
        Err(e) => OracleCheck {
            name,
            metric: None,
            window: None,
            cases: 0,
            max_deviation: f64::INFINITY,
            tolerance: 0.01,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Runs every check with `estimator` as the estimator under test.
pub fn run_oracle_suite_with(estimator: Estimator, options: &OracleOptions) -> OracleReport {
    let mut checks: Vec<OracleCheck> = Metric::ALL.iter().map(|&m| check_estimator(m, estimator, options)).collect();
    checks.push(check_filter_response());
    checks.push(check_band_coverage(options.seed));
    OracleReport { checks }
}

pub fn run_oracle_suite(options: &OracleOptions) -> OracleReport {
    run_oracle_suite_with(sliding_apply, options)
}

/// Test fixture: the library estimator with `+1e-6` added to every
/// toroidal value.
pub fn perturbed_toroidal(metric: Metric, x: &[f64], y: &[f64], w: Option<WindowSpec>) -> Result<PsSeries> {
    let mut s = sliding_apply(metric, x, y, w)?;
    if metric == Metric::Toroidal {
        s.values.iter_mut().for_each(|v| *v += 1e-6);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> OracleOptions {
        OracleOptions { windows: 100, ..OracleOptions::default() }
    }

    #[test]
    fn library_passes_its_oracles() {
        let report = run_oracle_suite(&quick());
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
        }
        assert_eq!(report.checks.len(), 9);
    }

    #[test]
    fn toroidal_perturbation_is_flagged_alone() {
        let report = run_oracle_suite_with(perturbed_toroidal, &quick());
        let tor = report.check("toroidal").unwrap();
        assert!(!tor.passed);
        assert!((tor.max_deviation - 1e-6).abs() < 1e-9);
        assert!(tor.window.is_some());
        let failing: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        assert_eq!(failing, vec!["toroidal"]);
    }

    #[test]
    fn reference_order_function_matches_brute_definition() {
        assert_eq!(order_ref(1.0, 0.5), 0.5 - PI);
        assert_eq!(order_ref(0.5, 1.0), -0.5 + PI);
        assert!((order_ref(-0.1, 0.1) - (2.0 * PI - 0.2 - PI)).abs() < 1e-15);
    }
}
