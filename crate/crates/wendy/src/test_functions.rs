//! Compactly supported reference test functions, their Fourier coefficients,
//! and the quadrature-weighted test-function matrices `Φ` and `Φ̇`.
//!
//! Two families are available, both normalised to unit `L₂` norm on their
//! support `[−r, r]`:
//!
//! * piecewise polynomials `ψ(t) = C·(r² − t²)^p`,
//! * `C^∞` bumps `ψ(t) = C·exp(−η / (1 − (t/r)²))`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::quadrature;
use crate::special::{ln_factorial, spherical_bessel_j};

/// Largest polynomial order with a supported closed-form Fourier transform.
pub const MAX_POLY_ORDER: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Polynomial { order: usize },
    Bump { eta: f64 },
}

/// A normalised reference function centred at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceFunction {
    family: Family,
    radius: f64,
    norm: f64,
    // Multiplier applied to the unit-radius shape. For the polynomial this is
    // C·r^{2p}, which keeps evaluation free of r^{2p} overflow.
    shape_scale: f64,
}

impl ReferenceFunction {
    pub fn polynomial(radius: f64, order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidArgument(format!(
                "polynomial test functions need order >= 2, got {order}"
            )));
        }
        check_radius(radius)?;
        let ln_norm_scaled = 0.5 * (2.0 * radius * wallis(2 * order)).ln();
        let norm = poly_l2_constant(radius, order)?;
        Ok(Self {
            family: Family::Polynomial { order },
            radius,
            norm,
            shape_scale: (-ln_norm_scaled).exp(),
        })
    }

    pub fn bump(radius: f64, eta: f64) -> Result<Self> {
        check_radius(radius)?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bump shape parameter must be positive, got {eta}"
            )));
        }
        let norm = 1.0 / (radius * bump_square_integral(eta)).sqrt();
        Ok(Self {
            family: Family::Bump { eta },
            radius,
            norm,
            shape_scale: norm,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// The constant `C` that makes `‖ψ‖₂ = 1`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Value and derivative at `t`; both vanish outside `(−r, r)`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let x = t / self.radius;
        if !(x.abs() < 1.0) {
            return (0.0, 0.0);
        }
        let one_minus = 1.0 - x * x;
        match self.family {
            Family::Polynomial { order } => {
                let base = one_minus.powi(order as i32 - 1);
                let value = self.shape_scale * base * one_minus;
                let deriv = -2.0 * order as f64 * self.shape_scale * x * base / self.radius;
                (value, deriv)
            }
            Family::Bump { eta } => {
                let value = self.shape_scale * (-eta / one_minus).exp();
                let deriv = value * (-2.0 * eta * x / (self.radius * one_minus * one_minus));
                (value, deriv)
            }
        }
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")))
    }
}

/// `∫₀¹ (1 − x²)ⁿ dx = Π_{k=1}^{n} 2k / (2k + 1)`.
pub fn wallis(n: usize) -> f64 {
    (1..=n).map(|k| (2 * k) as f64 / (2 * k + 1) as f64).product()
}

/// `∫_{−1}^{1} exp(−2η / (1 − x²)) dx`.
pub fn bump_square_integral(eta: f64) -> f64 {
    let q = quadrature::integrate(
        |x: f64| {
            let s = 1.0 - x * x;
            if s <= 0.0 {
                0.0
            } else {
                (-2.0 * eta / s).exp()
            }
        },
        -1.0,
        1.0,
        0.0,
        1e-14,
        4000,
    );
    q.value
}

/// `L₂` normalising constant of `(r² − t²)^p` on `[−r, r]`.
///
/// The squared norm is `r^{4p+1}·2·∫₀¹(1 − x²)^{2p} dx`; the integral is the
/// Wallis product, which avoids the cancellation of the equivalent
/// alternating binomial sum. Everything is combined in log space.
pub fn poly_l2_constant(radius: f64, order: usize) -> Result<f64> {
    if order < 1 {
        return Err(Error::InvalidArgument("polynomial order must be >= 1".into()));
    }
    check_radius(radius)?;
    let ln_norm = 2.0 * order as f64 * radius.ln() + 0.5 * (2.0 * radius).ln()
        + 0.5 * wallis(2 * order).ln();
    Ok((-ln_norm).exp())
}

/// Fourier coefficient `(1/√T)∫ψ(t)e^{−2πint/T}dt` of the normalised
/// polynomial reference function of order `p` and radius `r`.
///
/// The transform equals `(2C'r/√T)·p!·(2/x)^p·j_p(x)` with `x = 2π|n|r/T`
/// and `C' = C·r^{2p}`, which is the half-integer Bessel form rewritten with
/// spherical Bessel functions. Small arguments use the power series of the
/// same expression.
pub fn psi_hat_closed_form(p: usize, r: f64, t_end: f64, n: i64) -> Result<f64> {
    if !(1..=MAX_POLY_ORDER).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "closed-form coefficients need 1 <= p <= {MAX_POLY_ORDER}, got {p}"
        )));
    }
    check_radius(r)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("period must be positive, got {t_end}")));
    }
    let prefactor = 2.0 * r / ((2.0 * r * wallis(2 * p)).sqrt() * t_end.sqrt());
    let x = 2.0 * PI * n.unsigned_abs() as f64 * r / t_end;
    Ok(prefactor * bessel_profile(p, x))
}

/// `p!·(2/x)^p·j_p(x)`, continuous at zero with value `∫₀¹(1 − s²)^p ds`.
fn bessel_profile(p: usize, x: f64) -> f64 {
    if x < 1.0 {
        let mut term = wallis(p);
        let mut sum = term;
        let y = -0.5 * x * x;
        for k in 0..200 {
            term *= y / ((k + 1) as f64 * (2 * p + 2 * k + 3) as f64);
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let ln_lead = ln_factorial(p) + p as f64 * (2.0 / x).ln();
        ln_lead.exp() * spherical_bessel_j(p, x)
    }
}

/// Integer frequency of FFT bin `j` for an `m`-point transform:
/// `0, 1, …, ⌈m/2⌉ − 1, −⌊m/2⌋, …, −1`.
pub fn wrapped_frequency(j: usize, m: usize) -> i64 {
    if 2 * j < m {
        j as i64
    } else {
        j as i64 - m as i64
    }
}

/// Closed-form coefficients at every FFT bin of an `M`-point transform.
pub fn psi_hat_wrapped(p: usize, r: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    let m = grid.intervals();
    let half: Vec<f64> = (0..=m / 2)
        .map(|n| psi_hat_closed_form(p, r, grid.t_end(), n as i64))
        .collect::<Result<_>>()?;
    Ok((0..m)
        .map(|j| half[wrapped_frequency(j, m).unsigned_abs() as usize])
        .collect())
}

/// Centres `m_r, m_r + stride, …` up to `M − m_r` for a radius of `m_r` grid steps.
pub fn centers_for_steps(grid: &TimeGrid, steps: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("center stride must be >= 1".into()));
    }
    let m = grid.intervals();
    if steps == 0 || 2 * steps > m {
        return Err(Error::EmptyAdmissibleSet { steps, intervals: m });
    }
    Ok((steps..=m - steps).step_by(stride).collect())
}

/// Admissible centres for a radius that must be a whole number of grid steps.
pub fn admissible_centers(grid: &TimeGrid, radius: f64, stride: usize) -> Result<Vec<usize>> {
    let steps = grid.radius_steps(radius)?;
    centers_for_steps(grid, steps, stride)
}

/// Test-function matrices with trapezoidal weights folded in.
#[derive(Clone, Debug)]
pub struct TestFunctionBasis {
    phi: DMatrix<f64>,
    phi_dot: DMatrix<f64>,
    centers: Vec<usize>,
    radius: f64,
    radius_steps: usize,
    grid: TimeGrid,
    orthonormalized: bool,
    supports: Vec<(usize, usize)>,
}

/// Builds `Φ` and `Φ̇` for translates of `psi` centred at grid indices `centers`.
pub fn assemble_basis(psi: &ReferenceFunction, centers: &[usize], grid: &TimeGrid) -> Result<TestFunctionBasis> {
    let steps = grid.radius_steps(psi.radius())?;
    let m = grid.intervals();
    if centers.is_empty() {
        return Err(Error::EmptyAdmissibleSet { steps, intervals: m });
    }
    if let Some(&c) = centers.iter().find(|&&c| c < steps || c + steps > m) {
        return Err(Error::InvalidArgument(format!(
            "center {c} is not admissible for a radius of {steps} steps on {m} intervals"
        )));
    }
    let dt = grid.dt();
    // Samples at offsets 0..=steps; the negative side follows by symmetry.
    let samples: Vec<(f64, f64)> = (0..=steps).map(|j| psi.eval(j as f64 * dt)).collect();
    let k = centers.len();
    let mut phi = DMatrix::zeros(k, m + 1);
    let mut phi_dot = DMatrix::zeros(k, m + 1);
    let mut supports = Vec::with_capacity(k);
    for (row, &c) in centers.iter().enumerate() {
        let lo = c - steps;
        let hi = c + steps;
        for idx in lo..=hi {
            let (v, dv) = if idx >= c {
                samples[idx - c]
            } else {
                let (v, dv) = samples[c - idx];
                (v, -dv)
            };
            let w = grid.trapezoid_weight(idx);
            phi[(row, idx)] = v * w;
            phi_dot[(row, idx)] = dv * w;
        }
        supports.push((lo, hi + 1));
    }
    Ok(TestFunctionBasis {
        phi,
        phi_dot,
        centers: centers.to_vec(),
        radius: psi.radius(),
        radius_steps: steps,
        grid: *grid,
        orthonormalized: false,
        supports,
    })
}

impl TestFunctionBasis {
    /// Wraps dense, globally supported matrices (the multiscale construction).
    pub(crate) fn from_dense(
        phi: DMatrix<f64>,
        phi_dot: DMatrix<f64>,
        radius: f64,
        radius_steps: usize,
        grid: TimeGrid,
    ) -> Self {
        let k = phi.nrows();
        let n = phi.ncols();
        Self {
            phi,
            phi_dot,
            centers: Vec::new(),
            radius,
            radius_steps,
            grid,
            orthonormalized: true,
            supports: vec![(0, n); k],
        }
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn phi_dot(&self) -> &DMatrix<f64> {
        &self.phi_dot
    }

    /// Centre indices; empty for an orthonormalised multiscale basis.
    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn radius_steps(&self) -> usize {
        self.radius_steps
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn is_orthonormalized(&self) -> bool {
        self.orthonormalized
    }

    pub fn num_functions(&self) -> usize {
        self.phi.nrows()
    }

    /// Half-open column range holding the nonzeros of row `k`.
    pub fn support(&self, k: usize) -> (usize, usize) {
        self.supports[k]
    }

    /// True when every row is a compactly supported translate.
    pub fn is_banded(&self) -> bool {
        !self.orthonormalized
    }

    /// `Φ·x` using only the nonzero band of each row.
    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        band_apply(&self.phi, &self.supports, x)
    }

    /// `Φ̇·x` using only the nonzero band of each row.
    pub fn apply_dot(&self, x: &[f64]) -> DVector<f64> {
        band_apply(&self.phi_dot, &self.supports, x)
    }

    /// One CSV line per test function.
    pub fn to_csv_string(&self, derivative: bool) -> String {
        let mat = if derivative { &self.phi_dot } else { &self.phi };
        let mut out = String::new();
        for k in 0..mat.nrows() {
            for m in 0..mat.ncols() {
                if m > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:.16e}", mat[(k, m)]);
            }
            out.push('\n');
        }
        out
    }
}

fn band_apply(mat: &DMatrix<f64>, supports: &[(usize, usize)], x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        mat.nrows(),
        supports
            .iter()
            .enumerate()
            .map(|(k, &(lo, hi))| (lo..hi).map(|m| mat[(k, m)] * x[m]).sum::<f64>()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Composite Gauss–Legendre rule with nodes from Newton iteration.
    fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        out
    }

    fn composite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
        let rule = gauss_legendre(20);
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let c = a + (k as f64 + 0.5) * h;
                rule.iter().map(|(x, w)| w * f(c + 0.5 * h * x)).sum::<f64>() * 0.5 * h
            })
            .sum()
    }

    #[test]
    fn unit_radius_linear_order() {
        let c = poly_l2_constant(1.0, 1).unwrap();
        assert!((c - 15f64.sqrt() / 4.0).abs() < 1e-15);
        assert!((c - 0.968246).abs() < 1e-6);
        let direct: f64 = composite(|t| (1.0 - t * t).powi(2), -1.0, 1.0, 4);
        assert!((direct - 16.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn constant_matches_quadrature() {
        let (r, p) = (0.5, 16usize);
        let raw = composite(|t| (r * r - t * t).powi(2 * p as i32), -r, r, 64);
        let c = poly_l2_constant(r, p).unwrap();
        assert!((c * raw.sqrt() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn reference_functions_have_unit_norm() {
        for psi in [
            ReferenceFunction::polynomial(0.3, 2).unwrap(),
            ReferenceFunction::polynomial(2.5, 16).unwrap(),
            ReferenceFunction::polynomial(7.0, 22).unwrap(),
            ReferenceFunction::polynomial(0.05, 40).unwrap(),
            ReferenceFunction::bump(0.7, 9.0).unwrap(),
            ReferenceFunction::bump(3.0, 1.5).unwrap(),
        ] {
            let r = psi.radius();
            let sq = composite(|t| psi.eval(t).0.powi(2), -r, r, 200);
            assert!((sq - 1.0).abs() < 1e-10, "{psi:?}: {sq}");
        }
    }

    #[test]
    fn reference_values() {
        let psi = ReferenceFunction::polynomial(0.8, 16).unwrap();
        assert_eq!(psi.eval(0.8), (0.0, 0.0));
        assert_eq!(psi.eval(-0.8), (0.0, 0.0));
        assert_eq!(psi.eval(3.0), (0.0, 0.0));
        let (v, dv) = psi.eval(0.0);
        let expect = psi.normalization() * 0.8f64.powi(32);
        assert!((v - expect).abs() < 1e-14 * expect);
        assert_eq!(dv, 0.0);

        let bump = ReferenceFunction::bump(0.4, 9.0).unwrap();
        let (v, dv) = bump.eval(0.0);
        assert!((v - bump.normalization() * (-9f64).exp()).abs() < 1e-15 * v);
        assert_eq!(dv, 0.0);
        assert_eq!(bump.eval(0.4), (0.0, 0.0));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for psi in [
            ReferenceFunction::polynomial(1.3, 8).unwrap(),
            ReferenceFunction::bump(1.3, 9.0).unwrap(),
        ] {
            for &t in &[-1.1, -0.5, 0.2, 0.9, 1.25] {
                let h = 1e-6;
                let fd = (psi.eval(t + h).0 - psi.eval(t - h).0) / (2.0 * h);
                let (_, dv) = psi.eval(t);
                assert!((fd - dv).abs() < 1e-6 * dv.abs().max(1e-3), "t={t}");
            }
        }
    }

    #[test]
    fn invalid_families_rejected() {
        assert!(ReferenceFunction::polynomial(1.0, 1).is_err());
        assert!(ReferenceFunction::polynomial(0.0, 4).is_err());
        assert!(ReferenceFunction::bump(1.0, 0.0).is_err());
        assert!(psi_hat_closed_form(41, 1.0, 1.0, 0).is_err());
        assert!(psi_hat_closed_form(0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn zero_mode_example() {
        let c = 15f64.sqrt() / 4.0;
        let want = 2.0 * c / 2f64.sqrt() * (2.0 / 3.0);
        let got = psi_hat_closed_form(1, 1.0, 2.0, 0).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.912871).abs() < 1e-6);
        let quad = composite(|t| c * (1.0 - t * t), -1.0, 1.0, 4) / 2f64.sqrt();
        assert!((got - quad).abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_quadrature_sample() {
        let t_end = 10.0;
        for &p in &[8usize, 16, 22] {
            for &r in &[0.5, 2.5] {
                let psi = ReferenceFunction::polynomial(r, p).unwrap();
                for &n in &[0i64, 1, 3, 17, 60, 250] {
                    let w = 2.0 * PI * n as f64 / t_end;
                    let quad = composite(|t| psi.eval(t).0 * (w * t).cos(), -r, r, 400) / t_end.sqrt();
                    let got = psi_hat_closed_form(p, r, t_end, n).unwrap();
                    assert!(
                        (got - quad).abs() <= 1e-8 * quad.abs() + 1e-14,
                        "p={p} r={r} n={n}: {got} vs {quad}"
                    );
                }
            }
        }
    }

    #[test]
    fn dft_of_sampled_row_matches_closed_form() {
        let grid = TimeGrid::new(10.0, 400).unwrap();
        let (p, steps) = (16, 40);
        let r = steps as f64 * grid.dt();
        let psi = ReferenceFunction::polynomial(r, p).unwrap();
        let m = grid.intervals();
        // Periodic samples of ψ centred at t = 0.
        let samples: Vec<f64> = (0..m)
            .map(|j| psi.eval(wrapped_frequency(j, m) as f64 * grid.dt()).0)
            .collect();
        let exact = psi_hat_wrapped(p, r, &grid).unwrap();
        let scale = exact.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for n in 0..=(m / 4) {
            let dft: f64 = samples
                .iter()
                .enumerate()
                .map(|(j, v)| v * (2.0 * PI * (n * j) as f64 / m as f64).cos())
                .sum::<f64>()
                * grid.dt()
                / grid.t_end().sqrt();
            assert!((dft - exact[n]).abs() <= 1e-6 * scale, "n={n}");
        }
    }

    #[test]
    fn admissible_center_examples() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        assert_eq!(centers_for_steps(&g, 2, 1).unwrap(), (2..=8).collect::<Vec<_>>());
        assert_eq!(centers_for_steps(&g, 5, 1).unwrap(), vec![5]);
        assert!(matches!(
            centers_for_steps(&g, 6, 1),
            Err(Error::EmptyAdmissibleSet { .. })
        ));
        assert_eq!(centers_for_steps(&g, 2, 3).unwrap(), vec![2, 5, 8]);
        let g = TimeGrid::new(1.0, 500).unwrap();
        assert_eq!(centers_for_steps(&g, 2, 1).unwrap().len(), 497);
        assert_eq!(admissible_centers(&g, 0.004, 1).unwrap().len(), 497);
    }

    fn sample_basis(m: usize, steps: usize, p: usize) -> TestFunctionBasis {
        let grid = TimeGrid::new(3.0, m).unwrap();
        let psi = ReferenceFunction::polynomial(steps as f64 * grid.dt(), p).unwrap();
        let centers = centers_for_steps(&grid, steps, 1).unwrap();
        assemble_basis(&psi, &centers, &grid).unwrap()
    }

    #[test]
    fn basis_structure() {
        let b = sample_basis(60, 7, 6);
        assert_eq!(b.num_functions(), 60 - 14 + 1);
        for k in 0..b.num_functions() {
            let c = b.centers()[k];
            let nz = (0..=60).filter(|&m| b.phi()[(k, m)] != 0.0).count();
            assert_eq!(nz, 2 * 7 - 1, "interior nonzeros, endpoints vanish");
            for m in 0..=60 {
                if m + 7 < c || m > c + 7 {
                    assert_eq!(b.phi()[(k, m)], 0.0);
                    assert_eq!(b.phi_dot()[(k, m)], 0.0);
                }
            }
            for j in 1..=7 {
                if c >= j && c + j <= 60 && c != j && c + j != 60 {
                    assert_eq!(b.phi()[(k, c - j)], b.phi()[(k, c + j)]);
                    assert_eq!(b.phi_dot()[(k, c - j)], -b.phi_dot()[(k, c + j)]);
                }
            }
            let s: f64 = b.phi_dot().row(k).sum();
            assert!(s.abs() <= 1e-12);
        }
    }

    #[test]
    fn derivative_annihilates_constants() {
        let b = sample_basis(80, 9, 16);
        let c = 3.7;
        let out = b.apply_dot(&vec![c; 81]);
        assert!(out.amax() <= 1e-12 * c * b.num_functions() as f64);
    }

    #[test]
    fn band_apply_matches_dense() {
        let b = sample_basis(50, 6, 4);
        let x: Vec<f64> = (0..=50).map(|m| (m as f64 * 0.3).sin()).collect();
        let dense = b.phi() * DVector::from_column_slice(&x);
        assert!((b.apply(&x) - dense).amax() < 1e-14);
    }

    #[test]
    fn inadmissible_centers_rejected() {
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let psi = ReferenceFunction::polynomial(0.2, 4).unwrap();
        assert!(assemble_basis(&psi, &[3], &grid).is_err());
        assert!(assemble_basis(&psi, &[], &grid).is_err());
        let off_grid = ReferenceFunction::polynomial(0.23, 4).unwrap();
        assert!(assemble_basis(&off_grid, &[10], &grid).is_err());
    }

    #[test]
    fn discrete_norm_converges() {
        // Δt·Σψ² → 1; the bump converges more slowly than the polynomial.
        for psi in [
            ReferenceFunction::polynomial(1.0, 16).unwrap(),
            ReferenceFunction::bump(1.0, 9.0).unwrap(),
        ] {
            let mut errs = Vec::new();
            for m in [20usize, 40, 80] {
                let dt = 1.0 / m as f64;
                let s: f64 = (-(m as i64)..=m as i64)
                    .map(|j| psi.eval(j as f64 * dt).0.powi(2))
                    .sum::<f64>()
                    * dt;
                errs.push((s - 1.0).abs());
            }
            assert!(errs[2] < errs[0] || errs[2] < 1e-13, "{errs:?}");
        }
    }

    proptest! {
        #[test]
        fn coefficients_are_even_in_n(p in 1usize..=40, r in 0.01f64..3.0, n in 1i64..2000) {
            let a = psi_hat_closed_form(p, r, 10.0, n).unwrap();
            let b = psi_hat_closed_form(p, r, 10.0, -n).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }

        #[test]
        fn profile_is_continuous_at_series_switch(p in 1usize..=40) {
            let below = bessel_profile(p, 1.0 - 1e-12);
            let above = bessel_profile(p, 1.0);
            prop_assert!((below - above).abs() <= 1e-11 * above.abs());
        }

        #[test]
        fn poly_is_even(p in 2usize..30, r in 0.1f64..5.0, x in 0.0f64..1.0) {
            let psi = ReferenceFunction::polynomial(r, p).unwrap();
            let (a, da) = psi.eval(x * r);
            let (b, db) = psi.eval(-x * r);
            prop_assert_eq!(a, b);
            prop_assert_eq!(da, -db);
        }
    }
}
