//! Spherical Bessel functions and the half-integer-order Bessel functions
//! built from them.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Spherical Bessel function of the first kind `j_p(x)`.
///
/// Uses upward recurrence from `j₀`, `j₁` when `x ≥ p`, where it is stable,
/// and Miller's downward recurrence otherwise.
pub fn spherical_bessel_j(p: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if p == 0 { 1.0 } else { 0.0 };
    }
    if x < 0.0 {
        let v = spherical_bessel_j(p, -x);
        return if p % 2 == 0 { v } else { -v };
    }
    let j0 = x.sin() / x;
    if p == 0 {
        return j0;
    }
    if x >= p as f64 {
        let mut prev = j0;
        let mut cur = x.sin() / (x * x) - x.cos() / x;
        for n in 1..p {
            let next = (2 * n + 1) as f64 / x * cur - prev;
            prev = cur;
            cur = next;
        }
        return cur;
    }
    miller(p, x, j0)
}

fn miller(p: usize, x: f64, j0: f64) -> f64 {
    let start = p + 50 + (2.0 * (40.0 * (p as f64).max(x)).sqrt()) as usize;
    let mut f_next = 0.0;
    let mut f = 1e-30;
    let mut f_p = 0.0;
    let mut f_1 = 0.0;
    for n in (1..=start).rev() {
        let f_prev = (2 * n + 1) as f64 / x * f - f_next;
        f_next = f;
        f = f_prev;
        // `f` now holds the unnormalised value at order n - 1.
        if n - 1 == p {
            f_p = f;
        }
        if n - 1 == 1 {
            f_1 = f;
        }
        if f.abs() > 1e200 {
            f *= 1e-200;
            f_next *= 1e-200;
            f_p *= 1e-200;
            f_1 *= 1e-200;
        }
    }
    // Normalise against whichever of j₀, j₁ is further from a zero.
    let j1 = if x >= 1.0 {
        x.sin() / (x * x) - x.cos() / x
    } else {
        0.0
    };
    if j0.abs() >= j1.abs() {
        f_p * (j0 / f)
    } else {
        f_p * (j1 / f_1)
    }
}

/// Bessel function of the first kind of half-integer order,
/// `J_{p+1/2}(x) = √(2x/π)·j_p(x)`, for `x ≥ 0`.
pub fn bessel_half_integer(p: usize, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "half-integer Bessel argument must be finite and non-negative, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 * x / PI).sqrt() * spherical_bessel_j(p, x))
}

/// `ln(n!)` by direct summation; exact enough for the small orders used here.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}
