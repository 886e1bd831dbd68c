//! Two-segment piecewise-linear changepoint detection.
//!
//! For every interior index `k` the curve is approximated by the line through
//! its first point and point `k`, followed by the line through point `k` and
//! its last point. The changepoint minimises the root sum of squared
//! *relative* residuals of that approximation.

use crate::error::{Error, Result};

/// Denominator clamp for relative residuals.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq)]
pub struct ChangepointResult {
    /// Index of the breakpoint, `1 ≤ index ≤ n − 2`.
    pub index: usize,
    /// `x[index]`.
    pub abscissa: f64,
    /// Fit error for every index; the two endpoints hold `+∞`.
    pub errors: Vec<f64>,
}

pub fn detect_changepoint(x: &[f64], y: &[f64]) -> Result<ChangepointResult> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "changepoint input has {n} abscissae and {} ordinates",
            y.len()
        )));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "changepoint detection needs at least 3 points, got {n}"
        )));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("abscissae must be strictly increasing".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("changepoint ordinates must be finite".into()));
    }
    let inv: Vec<f64> = y
        .iter()
        .map(|&v| {
            let d = if v.abs() < DENOMINATOR_FLOOR {
                DENOMINATOR_FLOOR.copysign(if v == 0.0 { 1.0 } else { v })
            } else {
                v
            };
            1.0 / d
        })
        .collect();

    let last = n - 1;
    let mut errors = vec![f64::INFINITY; n];
    let mut best = 1;
    for k in 1..last {
        let s1 = (y[k] - y[0]) / (x[k] - x[0]);
        let s2 = (y[last] - y[k]) / (x[last] - x[k]);
        let mut acc = 0.0;
        for m in 0..=k {
            let res = (y[0] + s1 * (x[m] - x[0]) - y[m]) * inv[m];
            acc += res * res;
        }
        for m in k..=last {
            let res = (y[k] + s2 * (x[m] - x[k]) - y[m]) * inv[m];
            acc += res * res;
        }
        errors[k] = acc.sqrt();
        if errors[k] < errors[best] {
            best = k;
        }
    }
    Ok(ChangepointResult {
        index: best,
        abscissa: x[best],
        errors,
    })
}
