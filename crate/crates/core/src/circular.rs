//! Circular-statistics primitives: angle wrapping, mean direction and the
//! toroidal order function.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Resultant lengths at or below this are treated as a balanced sample with
/// no defined mean direction.
pub const MIN_RESULTANT: f64 = 1e-12;

fn ensure_finite(theta: f64) -> Result<()> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite angle {theta}")))
    }
}

/// Wraps `theta` into the signed interval `[-pi, pi)`.
pub fn wrap_signed(theta: f64) -> Result<f64> {
    ensure_finite(theta)?;
    Ok(wrap_signed_unchecked(theta))
}

/// Infallible variant of [`wrap_signed`] for values already known finite.
#[inline]
pub fn wrap_signed_unchecked(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let mut r = theta - TAU * (theta / TAU).round();
    // round() leaves r in [-pi, pi]; floating error can push it a hair outside.
    if r >= PI {
        r -= TAU;
    }
    if r < -PI {
        r += TAU;
    }
    if r >= PI {
        -PI
    } else {
        r
    }
}

/// Wraps `theta` into `[0, 2pi)`.
pub fn wrap_positive(theta: f64) -> Result<f64> {
    ensure_finite(theta)?;
    Ok(wrap_positive_unchecked(theta))
}

#[inline]
pub fn wrap_positive_unchecked(theta: f64) -> f64 {
    if (0.0..TAU).contains(&theta) {
        return theta;
    }
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Mean direction of a sample of angles, in `[-pi, pi)`.
///
/// Uses the quadrant-aware arctangent of the summed sines and cosines, i.e.
/// the direction of the resultant vector. Fails with
/// [`Error::UndefinedMean`] when the mean resultant length is at most
/// [`MIN_RESULTANT`].
pub fn circular_mean(angles: &[f64]) -> Result<f64> {
    if angles.is_empty() {
        return Err(Error::InvalidInput("circular mean of an empty sample".into()));
    }
    let (mut s, mut c) = (0.0, 0.0);
    for &a in angles {
        ensure_finite(a)?;
        let (sa, ca) = a.sin_cos();
        s += sa;
        c += ca;
    }
    mean_direction(s, c, angles.len())
}

/// Mean direction from precomputed sums of sines and cosines over `n` angles.
pub(crate) fn mean_direction(sum_sin: f64, sum_cos: f64, n: usize) -> Result<f64> {
    let resultant = sum_sin.hypot(sum_cos) / n as f64;
    if resultant <= MIN_RESULTANT {
        return Err(Error::UndefinedMean(resultant));
    }
    Ok(wrap_signed_unchecked(sum_sin.atan2(sum_cos)))
}

/// Toroidal order function `h(delta) = ((delta + 2pi) mod 2pi) - pi`.
///
/// Evaluated in its piecewise form (`delta + pi` below zero, `delta - pi`
/// otherwise), which makes `h(-d) == -h(d)` hold bit-for-bit for `d` in
/// `(0, 2pi)`. Note `h(0) = -pi`.
pub fn order_function(delta: f64) -> Result<f64> {
    if delta.is_nan() || delta.abs() >= TAU {
        return Err(Error::OutOfRange(delta));
    }
    Ok(order_function_unchecked(delta))
}

#[inline]
pub fn order_function_unchecked(delta: f64) -> f64 {
    if delta < 0.0 {
        delta + PI
    } else {
        delta - PI
    }
}
