use serde::{Deserialize, Serialize};

use super::correlation::{csw_window, prewhiten_ar1};
use super::kernels::{circ_circ_window, crp, phase_coherence, phase_difference, plv_window, toroidal_window};
use super::Metric;
use crate::error::{Error, Result};

/// Trailing window of `length` samples: the value at time `t` summarizes
/// samples `t - length + 1 ..= t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
}

impl WindowSpec {
    pub fn new(length: usize) -> Result<Self> {
        if length < 2 {
            return Err(Error::InvalidInput(format!("window length {length} is below 2")));
        }
        Ok(Self { length })
    }
}

/// A synchronization time course for one pair of series.
///
/// `values[k]` belongs to sample index `start + k` of the source series.
/// Missing entries hold `NaN` and have `valid[k] == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsSeries {
    pub metric: Metric,
    pub window: Option<WindowSpec>,
    pub start: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl PsSeries {
    fn from_options(metric: Metric, window: Option<WindowSpec>, start: usize, raw: Vec<Option<f64>>) -> Self {
        let valid = raw.iter().map(Option::is_some).collect();
        let values = raw.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let series = Self { metric, window, start, values, valid };
        series.debug_check_range();
        series
    }

    fn debug_check_range(&self) {
        let (lo, hi) = self.metric.range();
        debug_assert!(
            self.values.iter().zip(&self.valid).all(|(v, ok)| !ok || (lo..=hi).contains(v)),
            "{} value outside [{lo}, {hi}]",
            self.metric
        );
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.valid[k].then_some(self.values[k])
    }

    /// Mean over the valid entries, `None` when there are none.
    pub fn valid_mean(&self) -> Option<f64> {
        let (sum, n) = self
            .values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

fn windowed<F>(len: usize, window: WindowSpec, mut kernel: F) -> Vec<Option<f64>>
where
    F: FnMut(std::ops::Range<usize>) -> Option<f64>,
{
    (window.length - 1..len).map(|t| kernel(t + 1 - window.length..t + 1)).collect()
}

/// Evaluates `metric` on a pair of series.
///
/// For phase metrics `x` and `y` are wrapped phases; for CSW and PW-CSW they
/// are the (band-limited) signals. Windowed metrics need `window` and emit
/// one value per full trailing window (`T - L + 1` values, starting at
/// sample `L - 1`); PW-CSW loses one more sample to prewhitening and starts
/// at sample `L`. Instantaneous metrics ignore `window` and cover all `T`
/// samples.
pub fn sliding_apply(metric: Metric, x: &[f64], y: &[f64], window: Option<WindowSpec>) -> Result<PsSeries> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    let n = x.len();
    if !metric.is_windowed() {
        let delta = phase_difference(x, y)?;
        let values = match metric {
            Metric::Coherence => phase_coherence(&delta),
            _ => crp(&delta),
        };
        return Ok(PsSeries::from_options(metric, None, 0, values.into_iter().map(Some).collect()));
    }

    let window = window.ok_or_else(|| Error::InvalidInput(format!("metric {metric} needs a window")))?;
    let min_len = if metric == Metric::PwCsw { window.length + 1 } else { window.length };
    if n < min_len {
        return Err(Error::WindowTooLong { window: window.length, len: n });
    }
    if metric != Metric::Plv && window.length < 3 {
        return Err(Error::InvalidInput(format!("metric {metric} needs windows of at least 3 samples")));
    }

    let (start, raw) = match metric {
        Metric::Plv => {
            let delta = phase_difference(x, y)?;
            (window.length - 1, windowed(n, window, |r| Some(plv_window(&delta[r]))))
        }
        Metric::CircCirc => (window.length - 1, windowed(n, window, |r| circ_circ_window(&x[r.clone()], &y[r]))),
        Metric::Toroidal => (window.length - 1, windowed(n, window, |r| toroidal_window(&x[r.clone()], &y[r]))),
        Metric::Csw => (window.length - 1, windowed(n, window, |r| csw_window(&x[r.clone()], &y[r]))),
        Metric::PwCsw => {
            let ex = prewhiten_ar1(x)?.residuals;
            let ey = prewhiten_ar1(y)?.residuals;
            (window.length, windowed(n - 1, window, |r| csw_window(&ex[r.clone()], &ey[r])))
        }
        Metric::Coherence | Metric::Crp => unreachable!("instantaneous metrics handled above"),
    };
    Ok(PsSeries::from_options(metric, Some(window), start, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_phases(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-PI..PI)).collect()
    }

    #[test]
    fn full_length_window_equals_whole_series_metric() {
        let x = random_phases(1, 40);
        let y = random_phases(2, 40);
        let w = WindowSpec::new(40).unwrap();
        let s = sliding_apply(Metric::Toroidal, &x, &y, Some(w)).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.start, 39);
        assert_eq!(s.get(0), toroidal_window(&x, &y));
    }

    #[test]
    fn constant_lag_gives_unit_plv_for_any_window() {
        let x = random_phases(3, 60);
        let y: Vec<f64> = x.iter().map(|v| crate::circular::wrap_signed_unchecked(v - 0.4)).collect();
        for l in [2, 5, 30, 60] {
            let s = sliding_apply(Metric::Plv, &x, &y, Some(WindowSpec::new(l).unwrap())).unwrap();
            assert_eq!(s.len(), 60 - l + 1);
            assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn sliding_values_match_slice_recompute() {
        let x = random_phases(5, 80);
        let y = random_phases(6, 80);
        let l = 17;
        let w = Some(WindowSpec::new(l).unwrap());
        for metric in [Metric::Plv, Metric::CircCirc, Metric::Toroidal, Metric::Csw] {
            let s = sliding_apply(metric, &x, &y, w).unwrap();
            assert_eq!(s.len(), 80 - l + 1);
            for (k, t) in (l - 1..80).enumerate() {
                let lo = t + 1 - l;
                let expected = match metric {
                    Metric::Plv => Some(plv_window(&phase_difference(&x[lo..=t], &y[lo..=t]).unwrap())),
                    Metric::CircCirc => circ_circ_window(&x[lo..=t], &y[lo..=t]),
                    Metric::Toroidal => toroidal_window(&x[lo..=t], &y[lo..=t]),
                    _ => csw_window(&x[lo..=t], &y[lo..=t]),
                };
                assert_eq!(s.get(k), expected, "{metric} at t = {t}");
            }
        }
    }

    #[test]
    fn pw_csw_alignment() {
        let x = random_phases(7, 50);
        let y = random_phases(8, 50);
        let s = sliding_apply(Metric::PwCsw, &x, &y, Some(WindowSpec::new(10).unwrap())).unwrap();
        assert_eq!(s.start, 10);
        assert_eq!(s.len(), 40);
        let ex = prewhiten_ar1(&x).unwrap().residuals;
        let ey = prewhiten_ar1(&y).unwrap().residuals;
        assert_eq!(s.get(0), csw_window(&ex[0..10], &ey[0..10]));
    }

    #[test]
    fn instantaneous_metrics_cover_every_sample() {
        let x = random_phases(9, 30);
        let y = random_phases(10, 30);
        let s = sliding_apply(Metric::Crp, &x, &y, None).unwrap();
        assert_eq!((s.len(), s.start), (30, 0));
        assert!(s.valid.iter().all(|v| *v));
    }

    #[test]
    fn rejects_bad_windows() {
        let x = random_phases(11, 20);
        assert!(matches!(
            sliding_apply(Metric::Plv, &x, &x, Some(WindowSpec { length: 21 })),
            Err(Error::WindowTooLong { window: 21, len: 20 })
        ));
        assert!(sliding_apply(Metric::Plv, &x, &x, None).is_err());
        assert!(WindowSpec::new(1).is_err());
        assert!(sliding_apply(Metric::Plv, &x, &x[..19], Some(WindowSpec { length: 5 })).is_err());
    }

    #[test]
    fn degenerate_windows_are_flagged_missing() {
        let x = [0.5; 12];
        let y = random_phases(12, 12);
        let s = sliding_apply(Metric::Csw, &x, &y, Some(WindowSpec::new(4).unwrap())).unwrap();
        assert!(s.valid.iter().all(|v| !v));
        assert!(s.values.iter().all(|v| v.is_nan()));
        assert_eq!(s.valid_mean(), None);
    }
}
