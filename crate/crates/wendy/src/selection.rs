//! Test-function set construction.
//!
//! * **Single-scale local** ([`sl_select`]): sweep the radius, estimate the
//!   integration error from the data alone, and place every test function at
//!   the radius where the log error curve stops decaying.
//! * **Multiscale global** ([`mg_select`]): find a minimum radius from a
//!   cheaper single-mode error estimate, stack bump-function bases at
//!   `r_min × (1, 2, 4, 8)` and orthonormalise the stack with an SVD.

use std::f64::consts::PI;

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::changepoint::{detect_changepoint, ChangepointResult};
use crate::error::{Error, Result};
use crate::grid::{TimeGrid, Trajectory};
use crate::integration_error::{ehat_curve, sweep_steps, CurveKind, ErrorCurve, EulerMaclaurinConfig};
use crate::linalg::thin_svd;
use crate::test_functions::{assemble_basis, centers_for_steps, ReferenceFunction, TestFunctionBasis};

/// Outcome of the single-scale local construction.
#[derive(Clone, Debug)]
pub struct SlSelection {
    /// Selected radius `r̂_c`.
    pub r_hat: f64,
    /// `r̂_c / Δt`.
    pub steps: usize,
    pub curve: ErrorCurve,
    /// `None` when the curve was degenerate.
    pub changepoint: Option<ChangepointResult>,
    pub basis: TestFunctionBasis,
    /// Set when the error curve carried no information (e.g. constant data)
    /// and the smallest radius was used instead.
    pub degenerate: bool,
}

fn is_flat(log_values: &[f64]) -> bool {
    let lo = log_values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo <= 1e-9 * hi.abs().max(1.0)
}

/// Changepoint of a log error curve, or `None` when the curve is flat.
fn curve_changepoint(curve: &ErrorCurve) -> Result<Option<ChangepointResult>> {
    let logs = curve.log_values();
    if is_flat(&logs) {
        return Ok(None);
    }
    detect_changepoint(&curve.radii, &logs).map(Some)
}

pub fn sl_select(data: &Trajectory, p: usize, cfg: &EulerMaclaurinConfig, stride: usize) -> Result<SlSelection> {
    let grid = *data.grid();
    if grid.intervals() < 8 {
        return Err(Error::InvalidArgument(format!(
            "radius selection needs at least 8 intervals, got {}",
            grid.intervals()
        )));
    }
    let curve = ehat_curve(data, p, cfg)?;
    let changepoint = curve_changepoint(&curve)?;
    let steps = match &changepoint {
        Some(cp) => curve.steps[cp.index],
        None => {
            warn!("estimated integration-error curve is flat; falling back to the smallest radius");
            curve.steps[0]
        }
    };
    let r_hat = steps as f64 * grid.dt();
    let psi = ReferenceFunction::polynomial(r_hat, p)?;
    let basis = assemble_basis(&psi, &centers_for_steps(&grid, steps, stride)?, &grid)?;
    Ok(SlSelection {
        r_hat,
        steps,
        curve,
        degenerate: changepoint.is_none(),
        changepoint,
        basis,
    })
}

/// Settings for the multiscale global construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MgConfig {
    /// Bump shape parameter `η`.
    pub eta: f64,
    /// Coarsening factor `s`; the error probe uses Fourier mode `⌊M/s⌋`.
    pub coarsening: f64,
    pub stride: usize,
}

impl Default for MgConfig {
    fn default() -> Self {
        Self {
            eta: 9.0,
            coarsening: 2.0,
            stride: 1,
        }
    }
}

impl MgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2.0..=4.0).contains(&self.coarsening) {
            return Err(Error::InvalidArgument(format!(
                "coarsening factor must lie in [2, 4], got {}",
                self.coarsening
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("bump shape must be positive, got {}", self.eta)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("center stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of the multiscale global construction.
#[derive(Clone, Debug)]
pub struct MgSelection {
    pub r_min: f64,
    pub steps_min: usize,
    /// Multipliers of `r_min` that fit on the grid.
    pub scales: Vec<usize>,
    pub singular_values: Vec<f64>,
    /// Number of singular vectors kept.
    pub truncation: usize,
    pub curve: ErrorCurve,
    pub basis: TestFunctionBasis,
    pub degenerate: bool,
}

fn sine_table(grid: &TimeGrid, coarsening: f64) -> Vec<f64> {
    let m = grid.intervals();
    let mode = (m as f64 / coarsening).floor();
    (0..=m)
        .map(|j| (2.0 * PI * mode * ((j as f64 * mode) % m as f64 / mode) / m as f64).sin())
        .collect()
}

/// RMS of `−(4π/√T)·Im{(φ_k U_i)^_{⌊M/s⌋}}` over test functions and dimensions.
pub fn mg_ehat_rms(data: &Trajectory, basis: &TestFunctionBasis, coarsening: f64) -> Result<f64> {
    if !(2.0..=4.0).contains(&coarsening) {
        return Err(Error::InvalidArgument(format!(
            "coarsening factor must lie in [2, 4], got {coarsening}"
        )));
    }
    if basis.grid() != data.grid() {
        return Err(Error::DimensionMismatch("basis and data live on different grids".into()));
    }
    let grid = data.grid();
    let sines = sine_table(grid, coarsening);
    let t_end = grid.t_end();
    let phi = basis.phi();
    let mut sq = 0.0;
    for i in 0..data.dim() {
        let u = data.component(i);
        for k in 0..basis.num_functions() {
            let (lo, hi) = basis.support(k);
            // Φ already carries the Δt quadrature weight.
            let im: f64 = -(lo..hi).map(|m| phi[(k, m)] * u[m] * sines[m]).sum::<f64>() / t_end.sqrt();
            let e = -4.0 * PI / t_end.sqrt() * im;
            sq += e * e;
        }
    }
    Ok((sq / basis.num_functions() as f64).sqrt())
}

/// [`mg_ehat_rms`] for stride-1 bump translates without materialising `Φ`.
fn bump_rms_at(data: &Trajectory, steps: usize, eta: f64, sines: &[f64]) -> Result<(f64, usize)> {
    let grid = data.grid();
    let dt = grid.dt();
    let psi = ReferenceFunction::bump(steps as f64 * dt, eta)?;
    let kernel: Vec<f64> = (0..=2 * steps)
        .map(|j| psi.eval((j as f64 - steps as f64) * dt).0)
        .collect();
    let m = grid.intervals();
    let scale = 4.0 * PI / grid.t_end();
    let mut sq = 0.0;
    let mut count = 0;
    for i in 0..data.dim() {
        let u = data.component(i);
        let weighted: Vec<f64> = (0..=m).map(|j| u[j] * sines[j] * grid.trapezoid_weight(j)).collect();
        count = 0;
        for c in steps..=m - steps {
            let acc: f64 = kernel.iter().zip(&weighted[c - steps..=c + steps]).map(|(a, b)| a * b).sum();
            let e = scale * acc;
            sq += e * e;
            count += 1;
        }
    }
    Ok(((sq / count as f64).sqrt(), count))
}

/// `ê_rms` over the full radius sweep using stride-1 bump translates.
pub fn mg_rms_curve(data: &Trajectory, cfg: &MgConfig) -> Result<ErrorCurve> {
    cfg.validate()?;
    let grid = *data.grid();
    let sines = sine_table(&grid, cfg.coarsening);
    let points = sweep_steps(&grid)
        .into_par_iter()
        .map(|s| bump_rms_at(data, s, cfg.eta, &sines).map(|(v, k)| (s, v, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorCurve {
        radii: points.iter().map(|p| p.0 as f64 * grid.dt()).collect(),
        steps: points.iter().map(|p| p.0).collect(),
        values: points.iter().map(|p| p.1).collect(),
        counts: points.iter().map(|p| p.2).collect(),
        kind: CurveKind::Estimated,
    })
}

pub fn mg_select(data: &Trajectory, cfg: &MgConfig) -> Result<MgSelection> {
    let grid = *data.grid();
    if grid.intervals() < 8 {
        return Err(Error::InvalidArgument(format!(
            "radius selection needs at least 8 intervals, got {}",
            grid.intervals()
        )));
    }
    let curve = mg_rms_curve(data, cfg)?;
    let cp = curve_changepoint(&curve)?;
    let steps_min = match &cp {
        Some(cp) => curve.steps[cp.index],
        None => {
            warn!("multiscale error curve is flat; falling back to the smallest radius");
            curve.steps[0]
        }
    };
    let max_steps = grid.intervals() / 2;
    let scales: Vec<usize> = [1usize, 2, 4, 8]
        .into_iter()
        .filter(|f| f * steps_min <= max_steps)
        .collect();
    if scales.len() < 4 {
        info!(
            "dropping {} of 4 multiscale radii that exceed the largest admissible radius",
            4 - scales.len()
        );
    }
    let mut phi_rows = Vec::new();
    let mut phi_dot_rows = Vec::new();
    for &f in &scales {
        let steps = f * steps_min;
        let psi = ReferenceFunction::bump(steps as f64 * grid.dt(), cfg.eta)?;
        let basis = assemble_basis(&psi, &centers_for_steps(&grid, steps, cfg.stride)?, &grid)?;
        phi_rows.push(basis.phi().clone());
        phi_dot_rows.push(basis.phi_dot().clone());
    }
    let phi_full = vstack(&phi_rows);
    let phi_dot_full = vstack(&phi_dot_rows);
    let svd = thin_svd(&phi_full)?;
    let truncation = svd_truncation(&svd.s)?;
    // diag(1/σ)·Qᵀ·Φ_full equals V_kᵀ exactly in exact arithmetic; taking
    // V_kᵀ directly keeps the rows orthonormal to working precision.
    let phi = svd.v.columns(0, truncation).transpose();
    let mut phi_dot = svd.u.columns(0, truncation).transpose() * &phi_dot_full;
    for (r, mut row) in phi_dot.row_iter_mut().enumerate() {
        row /= svd.s[r];
    }
    let r_min = steps_min as f64 * grid.dt();
    Ok(MgSelection {
        r_min,
        steps_min,
        scales,
        singular_values: svd.s,
        truncation,
        curve,
        basis: TestFunctionBasis::from_dense(phi, phi_dot, r_min, steps_min, grid),
        degenerate: cp.is_none(),
    })
}

/// Number of singular vectors to keep: everything up to and including the
/// changepoint of `log σ` against index.
fn svd_truncation(sigma: &[f64]) -> Result<usize> {
    let positive = sigma.iter().take_while(|&&s| s > 0.0).count();
    if positive == 0 {
        return Err(Error::Consistency("stacked test-function matrix is zero".into()));
    }
    if positive < 3 {
        return Ok(positive);
    }
    let x: Vec<f64> = (0..positive).map(|i| i as f64).collect();
    let y: Vec<f64> = sigma[..positive].iter().map(|s| s.ln()).collect();
    if is_flat(&y) {
        return Ok(positive);
    }
    Ok(detect_changepoint(&x, &y)?.index + 1)
}

fn vstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks[0].ncols();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), b.shape()).copy_from(b);
        r += b.nrows();
    }
    out
}
