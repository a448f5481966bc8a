use crate::circular::{mean_direction, order_function_unchecked, wrap_positive_unchecked, wrap_signed_unchecked};
use crate::error::{Error, Result};

/// Denominator sums below this make a correlation-type window degenerate.
pub(crate) const MIN_DENOMINATOR: f64 = 1e-12;

/// Relative phase `wrap(phi_x - phi_y)` in `[-pi, pi)`.
pub fn phase_difference(phi_x: &[f64], phi_y: &[f64]) -> Result<Vec<f64>> {
    if phi_x.len() != phi_y.len() {
        return Err(Error::LengthMismatch { left: phi_x.len(), right: phi_y.len() });
    }
    Ok(phi_x
        .iter()
        .zip(phi_y)
        .map(|(x, y)| wrap_signed_unchecked(x - y))
        .collect())
}

/// Phase locking value: modulus of the mean unit phasor of the relative phase.
pub fn plv_window(delta_phi: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for &d in delta_phi {
        let (sd, cd) = d.sin_cos();
        s += sd;
        c += cd;
    }
    (s.hypot(c) / delta_phi.len() as f64).min(1.0)
}

/// Circular-circular correlation of two phase windows.
///
/// Deviations are sines of the angles about each window's mean direction.
/// Returns `None` if either mean direction is undefined or either sum of
/// squared deviations is below `1e-12`.
pub fn circ_circ_window(phi_x: &[f64], phi_y: &[f64]) -> Option<f64> {
    debug_assert_eq!(phi_x.len(), phi_y.len());
    let n = phi_x.len();
    let sums = |phi: &[f64]| {
        phi.iter().fold((0.0, 0.0), |(s, c), p| {
            let (sp, cp) = p.sin_cos();
            (s + sp, c + cp)
        })
    };
    let (sx, cx) = sums(phi_x);
    let (sy, cy) = sums(phi_y);
    let mu = mean_direction(sx, cx, n).ok()?;
    let nu = mean_direction(sy, cy, n).ok()?;
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for (x, y) in phi_x.iter().zip(phi_y) {
        let a = (x - mu).sin();
        let b = (y - nu).sin();
        num += a * b;
        dx += a * a;
        dy += b * b;
    }
    if dx < MIN_DENOMINATOR || dy < MIN_DENOMINATOR {
        return None;
    }
    Some((num / (dx * dy).sqrt()).clamp(-1.0, 1.0))
}

/// Toroidal circular correlation of two phase windows.
///
/// Sums order-function products over strictly ordered sample pairs
/// `i < j`; phases are mapped to `[0, 2pi)` first. Returns `None` if either
/// denominator sum is below `1e-12`.
pub fn toroidal_window(phi_x: &[f64], phi_y: &[f64]) -> Option<f64> {
    debug_assert_eq!(phi_x.len(), phi_y.len());
    let px: Vec<f64> = phi_x.iter().map(|&p| wrap_positive_unchecked(p)).collect();
    let py: Vec<f64> = phi_y.iter().map(|&p| wrap_positive_unchecked(p)).collect();
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for i in 0..px.len() {
        for j in i + 1..px.len() {
            let hx = order_function_unchecked(px[i] - px[j]);
            let hy = order_function_unchecked(py[i] - py[j]);
            num += hx * hy;
            dx += hx * hx;
            dy += hy * hy;
        }
    }
    if dx < MIN_DENOMINATOR || dy < MIN_DENOMINATOR {
        return None;
    }
    Some((num / (dx * dy).sqrt()).clamp(-1.0, 1.0))
}

/// Components within this distance of zero are snapped onto the axis.
const AXIS_SNAP: f64 = 1e-15;

/// Largest `f64` below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// `(sin, cos)` with the float images of the multiples of `pi/2` mapped onto
/// the exact axis points, so that `sin(pi) == 0` and `cos(pi/2) == 0`.
///
/// Off the axes a component that rounded to exactly one is pulled one ulp
/// below it, so `|sin| == 1` iff `cos == 0` and `|cos| == 1` iff `sin == 0`.
#[inline]
fn axis_sin_cos(d: f64) -> (f64, f64) {
    let (s, c) = d.sin_cos();
    if s.abs() <= AXIS_SNAP {
        (0.0, c.signum())
    } else if c.abs() <= AXIS_SNAP {
        (s.signum(), 0.0)
    } else {
        let off_unit = |v: f64| if v.abs() == 1.0 { v.signum() * BELOW_ONE } else { v };
        (off_unit(s), off_unit(c))
    }
}

/// Phase coherence `1 - |sin(dphi)|` per sample.
pub fn phase_coherence(delta_phi: &[f64]) -> Vec<f64> {
    delta_phi.iter().map(|&d| 1.0 - axis_sin_cos(d).0.abs()).collect()
}

/// Cosine of the relative phase per sample.
pub fn crp(delta_phi: &[f64]) -> Vec<f64> {
    delta_phi.iter().map(|&d| axis_sin_cos(d).1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2, TAU};

    #[test]
    fn phase_difference_examples() {
        let x = [0.3, -2.0, 1.0];
        assert!(phase_difference(&x, &x).unwrap().iter().all(|&d| d == 0.0));
        let d = phase_difference(&[FRAC_PI_2; 4], &[-FRAC_PI_2; 4]).unwrap();
        assert!(d.iter().all(|&v| v == -PI));
        assert!(matches!(
            phase_difference(&[0.0; 3], &[0.0; 4]),
            Err(Error::LengthMismatch { left: 3, right: 4 })
        ));
    }

    #[test]
    fn plv_examples() {
        assert!((plv_window(&[0.7; 10]) - 1.0).abs() < 1e-15);
        assert!(plv_window(&[0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]) < 1e-15);
        // |(1 + j) / 2|
        assert!((plv_window(&[0.0, FRAC_PI_2]) - SQRT_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn circ_circ_examples() {
        let x = [0.1, 0.5, 1.2, 2.0, -0.4];
        assert!((circ_circ_window(&x, &x).unwrap() - 1.0).abs() < 1e-10);
        // Symmetric about zero so both mean directions are 0.
        let x = [-1.0, -0.3, 0.0, 0.3, 1.0, 0.6, -0.6];
        let y: Vec<f64> = x.iter().map(|v| wrap_signed_unchecked(-v)).collect();
        assert!((circ_circ_window(&x, &y).unwrap() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn circ_circ_straight_line_oracle() {
        let x: [f64; 4] = [0.1, 0.5, 1.2, 2.0];
        let y: [f64; 4] = [0.2, 0.4, 1.5, 1.9];
        let mu = (x[0].sin() + x[1].sin() + x[2].sin() + x[3].sin())
            .atan2(x[0].cos() + x[1].cos() + x[2].cos() + x[3].cos());
        let nu = (y[0].sin() + y[1].sin() + y[2].sin() + y[3].sin())
            .atan2(y[0].cos() + y[1].cos() + y[2].cos() + y[3].cos());
        let a0 = (x[0] - mu).sin();
        let a1 = (x[1] - mu).sin();
        let a2 = (x[2] - mu).sin();
        let a3 = (x[3] - mu).sin();
        let b0 = (y[0] - nu).sin();
        let b1 = (y[1] - nu).sin();
        let b2 = (y[2] - nu).sin();
        let b3 = (y[3] - nu).sin();
        let expected = (a0 * b0 + a1 * b1 + a2 * b2 + a3 * b3)
            / ((a0 * a0 + a1 * a1 + a2 * a2 + a3 * a3) * (b0 * b0 + b1 * b1 + b2 * b2 + b3 * b3))
                .sqrt();
        let got = circ_circ_window(&x, &y).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        // Frozen from the oracle above.
        assert!((got - 0.977060835022884).abs() < 1e-12, "{got}");
    }

    #[test]
    fn circ_circ_degenerate_windows_are_missing() {
        assert_eq!(circ_circ_window(&[0.0, PI, 0.0, PI], &[0.1, 0.2, 0.3, 0.4]), None);
        assert_eq!(circ_circ_window(&[0.5; 5], &[0.1, 0.2, 0.3, 0.4, 0.5]), None);
    }

    #[test]
    fn toroidal_examples() {
        let x = [0.3, 2.8, 5.1 - TAU, 1.0];
        assert!((toroidal_window(&x, &x).unwrap() - 1.0).abs() < 1e-10);
        let y: Vec<f64> = x.iter().map(|v| wrap_positive_unchecked(-v)).collect();
        assert!((toroidal_window(&x, &y).unwrap() + 1.0).abs() < 1e-10);
        // Constant series: every pairwise difference is 0, h(0) = -pi, so the
        // denominator is not degenerate and the value is defined.
        assert!(toroidal_window(&[1.0; 4], &[0.1, 0.2, 0.3, 0.4]).is_some());
        assert_eq!(toroidal_window(&[1.0, 1.0], &[0.1, 0.2]).map(f64::abs), Some(1.0));
    }

    #[test]
    fn toroidal_brute_force_three_points() {
        let x = [0.3, 2.8, 5.1];
        let y = [0.1, 3.0, 4.4];
        let h = |d: f64| (d + TAU).rem_euclid(TAU) - PI;
        let pairs = [(0, 1), (0, 2), (1, 2)];
        let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
        for (i, j) in pairs {
            let hx = h(x[i] - x[j]);
            let hy = h(y[i] - y[j]);
            num += hx * hy;
            dx += hx * hx;
            dy += hy * hy;
        }
        let expected = num / (dx * dy).sqrt();
        let got = toroidal_window(&x, &y).unwrap();
        assert!((got - expected).abs() < 1e-12);
        // Frozen from the brute-force loop.
        assert!((got - 0.8550456270648076).abs() < 1e-12, "{got}");
    }

    #[test]
    fn instantaneous_metric_examples() {
        let d = [0.0, -PI, FRAC_PI_2, -FRAC_PI_2];
        let coh = phase_coherence(&d);
        let c = crp(&d);
        assert_eq!(coh[0], 1.0);
        assert_eq!(coh[1], 1.0);
        assert_eq!(coh[2], 0.0);
        assert_eq!(coh[3], 0.0);
        assert_eq!(c[0], 1.0);
        assert_eq!(c[1], -1.0);
        assert_eq!(c[2], 0.0);
        assert_eq!(c[3], 0.0);
    }

    #[test]
    fn unit_values_only_on_the_axes() {
        for d in [1e-10, -3e-9, PI - 1e-9, FRAC_PI_2 + 1e-10, -FRAC_PI_2 - 2e-9] {
            let (psi, theta) = (phase_coherence(&[d])[0], crp(&[d])[0]);
            assert_eq!(psi == 1.0, theta.abs() == 1.0, "d = {d}");
            assert_eq!(psi == 0.0, theta == 0.0, "d = {d}");
            assert!((psi - (1.0 - d.sin().abs())).abs() < 1e-15);
            assert!((theta - d.cos()).abs() < 1e-15);
        }
    }
}
