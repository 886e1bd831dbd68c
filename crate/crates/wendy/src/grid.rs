//! Uniform time grids, sampled trajectories, measurement noise and the
//! relative coefficient error used to score estimates.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_m = m·Δt`, `m = 0..=M`, on `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    intervals: usize,
}

impl TimeGrid {
    /// Builds a grid with `intervals` steps spanning `[0, t_end]`.
    ///
    /// At least four intervals are required so that the radius sweep
    /// `m = 2..=M/2` is non-empty.
    pub fn new(t_end: f64, intervals: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time span must be positive and finite, got {t_end}"
            )));
        }
        if intervals < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 4 intervals, got {intervals}"
            )));
        }
        Ok(Self { t_end, intervals })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of grid points `M + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    /// Always false; a grid has at least five points.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.intervals as f64
    }

    /// The `m`-th grid point, computed as `m·Δt` with the last point pinned to `T`.
    pub fn point(&self, m: usize) -> f64 {
        if m == self.intervals {
            self.t_end
        } else {
            m as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.intervals).map(|m| self.point(m)).collect()
    }

    /// Snaps a radius to the nearest whole number of grid steps.
    ///
    /// Fails if the radius is not within `1e-9` steps of a grid multiple, so
    /// callers cannot silently get a different radius than they asked for.
    pub fn radius_steps(&self, radius: f64) -> Result<usize> {
        let steps = radius / self.dt();
        let rounded = steps.round();
        if !(rounded >= 1.0) || (steps - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "radius {radius} is not a positive multiple of the grid step {}",
                self.dt()
            )));
        }
        Ok(rounded as usize)
    }

    /// Trapezoidal quadrature weight of grid point `m`.
    pub fn trapezoid_weight(&self, m: usize) -> f64 {
        if m == 0 || m == self.intervals {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }
}

/// State samples on a grid, one row per grid point and one column per state
/// dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    values: DMatrix<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "trajectory has {} rows but the grid has {} points",
                values.nrows(),
                grid.len()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "trajectory needs at least one state dimension".into(),
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "trajectory entry at row {}, column {} is not finite",
                pos % values.nrows(),
                pos / values.nrows()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Samples of state component `i` as a contiguous slice.
    pub fn component(&self, i: usize) -> &[f64] {
        let n = self.values.nrows();
        &self.values.as_slice()[i * n..(i + 1) * n]
    }

    /// Row `m` of the state matrix.
    pub fn state(&self, m: usize) -> Vec<f64> {
        self.values.row(m).iter().copied().collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.norm()
    }

    /// CSV text with header `t,u1,...,ud` and 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.dim() {
            let _ = write!(out, ",u{i}");
        }
        out.push('\n');
        for m in 0..self.grid.len() {
            let _ = write!(out, "{:.16e}", self.grid.point(m));
            for i in 0..self.dim() {
                let _ = write!(out, ",{:.16e}", self.values[(m, i)]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    /// Parses the format written by [`Trajectory::to_csv_string`].
    ///
    /// The grid is rebuilt from the first and last time stamps; every
    /// intermediate stamp must sit on that uniform grid.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let parse_err = |detail: String| Error::Parse {
            what: "trajectory CSV".into(),
            detail,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| parse_err("empty input".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "t" {
            return Err(parse_err(format!("unexpected header `{header}`")));
        }
        let d = cols.len() - 1;
        let mut times = Vec::new();
        let mut data = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 1 {
                return Err(parse_err(format!(
                    "row {} has {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    d + 1
                )));
            }
            let mut nums = fields.iter().map(|f| {
                f.parse::<f64>()
                    .map_err(|e| parse_err(format!("row {}: `{f}`: {e}", lineno + 2)))
            });
            times.push(nums.next().unwrap()?);
            for v in nums {
                data.push(v?);
            }
        }
        if times.len() < 5 {
            return Err(parse_err(format!("need at least 5 rows, got {}", times.len())));
        }
        if times[0].abs() > 0.0 {
            return Err(parse_err(format!("first time stamp must be 0, got {}", times[0])));
        }
        let grid = TimeGrid::new(*times.last().unwrap(), times.len() - 1)?;
        for (m, &t) in times.iter().enumerate() {
            if (t - grid.point(m)).abs() > 1e-9 * grid.dt() {
                return Err(parse_err(format!(
                    "time stamp {t} at row {} is off the uniform grid",
                    m + 2
                )));
            }
        }
        let values = DMatrix::from_row_slice(times.len(), d, &data);
        Trajectory::new(grid, values)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Self::from_csv_str(&text)
    }
}

/// How the noise ratio maps to a standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseConvention {
    /// `σ = σ_NR·‖U*‖_F / √((M+1)d)`, i.e. relative to the RMS state value.
    #[default]
    Rms,
    /// `σ = σ_NR·‖U*‖_F`.
    Frobenius,
}

/// Additive i.i.d. Gaussian measurement noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
    #[serde(default)]
    pub convention: NoiseConvention,
}

impl NoiseSpec {
    #[must_use]
    pub fn new(ratio: f64, seed: u64) -> Self {
        Self {
            ratio,
            seed,
            convention: NoiseConvention::Rms,
        }
    }

    #[must_use]
    pub fn with_convention(mut self, convention: NoiseConvention) -> Self {
        self.convention = convention;
        self
    }

    /// Noise standard deviation for the given clean data.
    pub fn sigma(&self, clean: &Trajectory) -> f64 {
        let fro = clean.frobenius_norm();
        match self.convention {
            NoiseConvention::Frobenius => self.ratio * fro,
            NoiseConvention::Rms => {
                self.ratio * fro / ((clean.values.nrows() * clean.dim()) as f64).sqrt()
            }
        }
    }
}

/// Returns `clean + ε` with `ε` drawn from `N(0, σ²)` using a ChaCha20 stream
/// seeded by `spec.seed`.
pub fn add_noise(clean: &Trajectory, spec: &NoiseSpec) -> Result<Trajectory> {
    if !(spec.ratio >= 0.0 && spec.ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise ratio must be non-negative, got {}",
            spec.ratio
        )));
    }
    if spec.ratio == 0.0 {
        return Ok(clean.clone());
    }
    let sigma = spec.sigma(clean);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut values = clean.values.clone();
    // Column-major fill: dimension by dimension, time-ordered within each.
    for v in values.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * z;
    }
    Trajectory::new(clean.grid, values)
}

/// Relative coefficient error `‖ŵ − w*‖₂ / ‖w*‖₂`.
pub fn e2_metric(w_hat: &[f64], w_star: &[f64]) -> Result<f64> {
    if w_hat.len() != w_star.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} coefficients, reference has {}",
            w_hat.len(),
            w_star.len()
        )));
    }
    let denom = w_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "reference coefficient vector has zero norm".into(),
        ));
    }
    let num = w_hat
        .iter()
        .zip(w_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = TimeGrid::new(10.0, 1000).unwrap();
        assert_eq!(g.dt(), 0.01);
        assert_eq!(g.point(500), 5.0);
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = TimeGrid::new(2.0, 8).unwrap();
        assert_eq!(g.point(3).to_bits(), (3.0 * (2.0f64 / 8.0)).to_bits());
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(-1.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 3).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
    }

    #[test]
    fn radius_snapping() {
        let g = TimeGrid::new(10.0, 1000).unwrap();
        assert_eq!(g.radius_steps(0.5).unwrap(), 50);
        assert!(g.radius_steps(0.505).is_err());
        assert!(g.radius_steps(0.0).is_err());
    }

    fn ramp(m: usize, d: usize) -> Trajectory {
        let g = TimeGrid::new(1.0, m).unwrap();
        let v = DMatrix::from_fn(m + 1, d, |r, c| (r * (c + 1)) as f64 + 0.5);
        Trajectory::new(g, v).unwrap()
    }

    #[test]
    fn trajectory_validation() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!(Trajectory::new(g, DMatrix::zeros(4, 1)).is_err());
        let mut v = DMatrix::zeros(5, 2);
        v[(3, 1)] = f64::INFINITY;
        assert!(Trajectory::new(g, v).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let clean = ramp(20, 2);
        assert_eq!(add_noise(&clean, &NoiseSpec::new(0.0, 3)).unwrap(), clean);
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let clean = ramp(20, 2);
        let spec = NoiseSpec::new(0.1, 42);
        assert_eq!(add_noise(&clean, &spec).unwrap(), add_noise(&clean, &spec).unwrap());
        assert_ne!(
            add_noise(&clean, &spec).unwrap(),
            add_noise(&clean, &NoiseSpec::new(0.1, 43)).unwrap()
        );
    }

    #[test]
    fn rms_noise_level_matches_request() {
        let clean = ramp(9_999, 1);
        let spec = NoiseSpec::new(0.2, 7);
        let noisy = add_noise(&clean, &spec).unwrap();
        let diff = noisy.values() - clean.values();
        let n = diff.len() as f64;
        let mean = diff.sum() / n;
        let std = (diff.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let rms = clean.frobenius_norm() / n.sqrt();
        assert!((std / (0.2 * rms) - 1.0).abs() < 0.05, "std {std} rms {rms}");
        assert!(mean.abs() <= 4.0 * 0.2 * rms / n.sqrt());
    }

    #[test]
    fn frobenius_convention_scales_by_norm() {
        let clean = ramp(10, 1);
        let spec = NoiseSpec::new(0.1, 1).with_convention(NoiseConvention::Frobenius);
        assert_eq!(spec.sigma(&clean), 0.1 * clean.frobenius_norm());
    }

    #[test]
    fn e2_examples() {
        let w = [1.0, -2.0, 3.0];
        assert_eq!(e2_metric(&w, &w).unwrap(), 0.0);
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        assert_eq!(e2_metric(&w2, &w).unwrap(), 1.0);
        assert_eq!(e2_metric(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2f64.sqrt());
        assert!(e2_metric(&[1.0], &[0.0]).is_err());
        assert!(e2_metric(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = TimeGrid::new(3.7, 13).unwrap();
        let v = DMatrix::from_fn(14, 3, |r, c| ((r as f64) * 0.37 + c as f64).sin() / 3.0);
        let traj = Trajectory::new(g, v).unwrap();
        let text = traj.to_csv_string();
        assert!(text.starts_with("t,u1,u2,u3\n"));
        let back = Trajectory::from_csv_str(&text).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn csv_rejects_nonuniform_times() {
        let text = "t,u1\n0,1\n0.1,1\n0.2,1\n0.35,1\n0.4,1\n";
        assert!(Trajectory::from_csv_str(text).is_err());
    }
}
