use crate::error::{Error, Result};

/// Pearson correlation of two equally long windows, `None` if either window
/// has zero variance.
pub fn csw_window(x: &[f64], y: &[f64]) -> Option<f64> {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if is_constant(x) || is_constant(y) || sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Residuals of an AR(1) fit together with the estimated coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Prewhitened {
    pub rho: f64,
    /// `e(t) = x(t) - rho * x(t-1)` for `t = 1..T` (zero-based), length `T - 1`.
    pub residuals: Vec<f64>,
}

/// Removes lag-1 autocorrelation assuming an AR(1) model.
///
/// `rho` is the mean-removed lag-1 sample autocorrelation with the biased
/// (divide by `T`) normalization in both numerator and denominator.
pub fn prewhiten_ar1(x: &[f64]) -> Result<Prewhitened> {
    let n = x.len();
    if n < 8 {
        return Err(Error::SeriesTooShort { len: n, min: 8 });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample in series".into()));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if is_constant(x) || var <= 0.0 {
        return Err(Error::DegenerateSeries("zero variance, AR(1) coefficient undefined".into()));
    }
    let cov: f64 = x.windows(2).map(|w| (w[1] - mean) * (w[0] - mean)).sum();
    let rho = cov / var;
    let residuals = x.windows(2).map(|w| w[1] - rho * w[0]).collect();
    Ok(Prewhitened { rho, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn lag1(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let num: f64 = (1..x.len()).map(|t| (x[t] - m) * (x[t - 1] - m)).sum();
        let den: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        num / den
    }

    #[test]
    fn csw_examples() {
        let x = [1.0, 2.0, 4.0, 3.0, 0.5];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((csw_window(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((csw_window(&x, &y).unwrap() + 1.0).abs() < 1e-15);
        // Sxy / sqrt(Sxx * Syy) = 3.5 / sqrt(5 * 8.75)
        let r = csw_window(&[1.0, 2.0, 4.0, 3.0], &[2.0, 1.0, 3.0, 5.0]).unwrap();
        assert!((r - 0.5291502622129182).abs() < 1e-12, "{r}");
        assert_eq!(csw_window(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]), None);
    }

    #[test]
    fn prewhiten_rejects_constant_and_short() {
        assert!(matches!(prewhiten_ar1(&[2.0; 20]), Err(Error::DegenerateSeries(_))));
        assert!(matches!(prewhiten_ar1(&[1.0, 2.0, 3.0]), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn prewhiten_white_noise_leaves_little_autocorrelation() {
        let n = 210;
        let bound = 3.0 / (n as f64).sqrt();
        let hits = (0..200)
            .filter(|&s| lag1(&prewhiten_ar1(&white(s, n)).unwrap().residuals).abs() < bound)
            .count();
        assert!(hits as f64 >= 0.95 * 200.0, "hits {hits}");
    }

    #[test]
    fn prewhiten_recovers_ar1_coefficient() {
        let e = white(11, 10_000);
        let mut x = vec![0.0; 10_000];
        x[0] = e[0] / (1.0f64 - 0.25).sqrt();
        for t in 1..x.len() {
            x[t] = 0.5 * x[t - 1] + e[t];
        }
        let pw = prewhiten_ar1(&x).unwrap();
        assert!((0.47..=0.53).contains(&pw.rho), "rho {}", pw.rho);
        assert_eq!(pw.residuals.len(), 9_999);
        assert!((pw.residuals[0] - (x[1] - pw.rho * x[0])).abs() < 1e-15);
    }
}
