//! Polynomial ODE systems with per-dimension feature libraries.
//!
//! Each state dimension `i` evolves as `u̇_i = Σ_q w_{i,q}·f_{i,q}(u)`, where
//! every feature is a monomial `u₁^a₁ ⋯ u_d^a_d` (the all-zero exponent is
//! the constant feature). Parameters are stored as one flat vector,
//! dimension by dimension.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dopri::{self, Tolerances};
use crate::error::{Error, Result};
use crate::grid::{TimeGrid, Trajectory};

/// A monomial feature `Π_j u_j^{e_j}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Monomial {
    exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    /// The constant feature `1` in `d` variables.
    pub fn constant(d: usize) -> Self {
        Self::new(vec![0; d])
    }

    /// `u_var` raised to `power`, in `d` variables (`var` is zero-based).
    pub fn power(d: usize, var: usize, power: u32) -> Self {
        let mut e = vec![0; d];
        e[var] = power;
        Self::new(e)
    }

    pub fn arity(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(u)
            .filter(|(e, _)| **e > 0)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }

    /// Writes `∂f/∂u_j` for every `j` into `out`.
    pub fn gradient(&self, u: &[f64], out: &mut [f64]) {
        for (j, slot) in out.iter_mut().enumerate() {
            let ej = self.exponents[j];
            if ej == 0 {
                *slot = 0.0;
                continue;
            }
            let mut g = ej as f64 * u[j].powi(ej as i32 - 1);
            for (k, (&e, &x)) in self.exponents.iter().zip(u).enumerate() {
                if k != j && e > 0 {
                    g *= x.powi(e as i32);
                }
            }
            *slot = g;
        }
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.iter().all(|&e| e == 0)
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            return write!(f, "1");
        }
        let mut first = true;
        for (j, &e) in self.exponents.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            write!(f, "u{}", j + 1)?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

/// The four benchmark systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinSystem {
    LogisticGrowth,
    Duffing,
    FitzhughNagumo,
    Lorenz,
}

impl BuiltinSystem {
    pub const ALL: [BuiltinSystem; 4] = [
        BuiltinSystem::LogisticGrowth,
        BuiltinSystem::Duffing,
        BuiltinSystem::FitzhughNagumo,
        BuiltinSystem::Lorenz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinSystem::LogisticGrowth => "logistic-growth",
            BuiltinSystem::Duffing => "duffing",
            BuiltinSystem::FitzhughNagumo => "fitzhugh-nagumo",
            BuiltinSystem::Lorenz => "lorenz",
        }
    }

    fn valid_names() -> String {
        Self::ALL.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
    }
}

impl FromStr for BuiltinSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        let sys = match key.as_str() {
            "logistic-growth" | "logistic" | "logisticgrowth" => BuiltinSystem::LogisticGrowth,
            "duffing" => BuiltinSystem::Duffing,
            "fitzhugh-nagumo" | "fitzhughnagumo" | "fhn" => BuiltinSystem::FitzhughNagumo,
            "lorenz" | "lorenz63" => BuiltinSystem::Lorenz,
            _ => {
                return Err(Error::UnknownSystem {
                    name: s.to_string(),
                    options: Self::valid_names(),
                })
            }
        };
        Ok(sys)
    }
}

/// An ODE whose right-hand side is linear in its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OdeSystem {
    name: String,
    libraries: Vec<Vec<Monomial>>,
    w_star: Vec<f64>,
    u0: Vec<f64>,
    t_end: f64,
    offsets: Vec<usize>,
}

impl OdeSystem {
    /// Builds a system from per-dimension feature lists.
    pub fn new(
        name: impl Into<String>,
        libraries: Vec<Vec<Monomial>>,
        w_star: Vec<f64>,
        u0: Vec<f64>,
        t_end: f64,
    ) -> Result<Self> {
        let d = libraries.len();
        if d == 0 {
            return Err(Error::Config("system needs at least one equation".into()));
        }
        if u0.len() != d {
            return Err(Error::Config(format!(
                "initial condition has {} entries for {d} equations",
                u0.len()
            )));
        }
        for (i, lib) in libraries.iter().enumerate() {
            if lib.is_empty() {
                return Err(Error::Config(format!("equation {} has no terms", i + 1)));
            }
            if let Some(f) = lib.iter().find(|f| f.arity() != d) {
                return Err(Error::Config(format!(
                    "term {:?} in equation {} has {} exponents, expected {d}",
                    f.exponents(),
                    i + 1,
                    f.arity()
                )));
            }
        }
        let mut offsets = vec![0];
        for lib in &libraries {
            offsets.push(offsets.last().unwrap() + lib.len());
        }
        if w_star.len() != offsets[d] {
            return Err(Error::Config(format!(
                "parameter vector has {} entries, the libraries have {} terms",
                w_star.len(),
                offsets[d]
            )));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Config(format!("time span must be positive, got {t_end}")));
        }
        if u0.iter().chain(&w_star).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite initial condition or parameter".into()));
        }
        Ok(Self {
            name: name.into(),
            libraries,
            w_star,
            u0,
            t_end,
            offsets,
        })
    }

    pub fn builtin(which: BuiltinSystem) -> Self {
        use Monomial as F;
        let (libs, w, u0, t_end): (Vec<Vec<Monomial>>, Vec<f64>, Vec<f64>, f64) = match which {
            BuiltinSystem::LogisticGrowth => (
                vec![vec![F::power(1, 0, 1), F::power(1, 0, 2)]],
                vec![1.0, -1.0],
                vec![0.01],
                10.0,
            ),
            BuiltinSystem::Duffing => (
                vec![
                    vec![F::power(2, 1, 1)],
                    vec![F::power(2, 1, 1), F::power(2, 0, 1), F::power(2, 0, 3)],
                ],
                vec![1.0, -0.2, -0.05, -1.0],
                vec![0.0, 2.0],
                20.0,
            ),
            BuiltinSystem::FitzhughNagumo => (
                vec![
                    vec![F::power(2, 0, 1), F::power(2, 0, 3), F::power(2, 1, 1)],
                    vec![F::power(2, 0, 1), F::constant(2), F::power(2, 1, 1)],
                ],
                vec![3.0, -3.0, 3.0, -1.0 / 3.0, 17.0 / 150.0, 1.0 / 15.0],
                vec![0.0, 0.1],
                25.0,
            ),
            BuiltinSystem::Lorenz => (
                vec![
                    vec![F::power(3, 1, 1), F::power(3, 0, 1)],
                    vec![F::power(3, 0, 1), F::new(vec![1, 0, 1]), F::power(3, 1, 1)],
                    vec![F::new(vec![1, 1, 0]), F::constant(3)],
                ],
                vec![10.0, -10.0, 28.0, -1.0, -1.0, 1.0, -8.0 / 3.0],
                vec![-8.0, 10.0, 27.0],
                10.0,
            ),
        };
        Self::new(which.name(), libs, w, u0, t_end).expect("builtin systems are well formed")
    }

    /// Looks up a builtin by name.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::builtin(name.parse()?))
    }

    /// Parses a system description in TOML.
    ///
    /// ```toml
    /// name = "damped-oscillator"
    /// u0 = [1.0, 0.0]
    /// t_end = 10.0
    ///
    /// [[equation]]
    /// terms = [[0, 1]]
    /// w = [1.0]
    ///
    /// [[equation]]
    /// terms = [[1, 0], [0, 1]]
    /// w = [-1.0, -0.1]
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SystemSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.build()
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.libraries.len()
    }

    pub fn num_params(&self) -> usize {
        self.w_star.len()
    }

    pub fn library(&self, dim: usize) -> &[Monomial] {
        &self.libraries[dim]
    }

    /// Position of dimension `dim`'s coefficients inside the flat parameter vector.
    pub fn param_range(&self, dim: usize) -> Range<usize> {
        self.offsets[dim]..self.offsets[dim + 1]
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn u0(&self) -> &[f64] {
        &self.u0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Copy of the system with different true parameters.
    pub fn with_params(&self, w: Vec<f64>) -> Result<Self> {
        Self::new(self.name.clone(), self.libraries.clone(), w, self.u0.clone(), self.t_end)
    }

    /// Right-hand side `f(u; w)`.
    pub fn rhs(&self, w: &[f64], u: &[f64], out: &mut [f64]) {
        for (i, lib) in self.libraries.iter().enumerate() {
            let wi = &w[self.offsets[i]..self.offsets[i + 1]];
            out[i] = lib.iter().zip(wi).map(|(f, c)| c * f.eval(u)).sum();
        }
    }

    /// `Θ_dim(U)`: one row per grid point, one column per feature of `dim`.
    pub fn feature_matrix(&self, dim: usize, data: &Trajectory) -> Result<DMatrix<f64>> {
        self.check_dim(dim, data)?;
        let lib = &self.libraries[dim];
        let n = data.grid().len();
        let mut theta = DMatrix::zeros(n, lib.len());
        let mut u = vec![0.0; self.dim()];
        for m in 0..n {
            for (j, slot) in u.iter_mut().enumerate() {
                *slot = data.values()[(m, j)];
            }
            for (q, f) in lib.iter().enumerate() {
                let v = f.eval(&u);
                if !v.is_finite() {
                    return Err(Error::NonFiniteFeature { dim, feature: q, row: m });
                }
                theta[(m, q)] = v;
            }
        }
        Ok(theta)
    }

    /// Gradients of every feature of `dim` at every grid point.
    pub fn feature_jacobian(&self, dim: usize, data: &Trajectory) -> Result<FeatureJacobian> {
        self.check_dim(dim, data)?;
        let lib = &self.libraries[dim];
        let d = self.dim();
        let n = data.grid().len();
        let mut values = vec![0.0; n * lib.len() * d];
        let mut u = vec![0.0; d];
        for m in 0..n {
            for (j, slot) in u.iter_mut().enumerate() {
                *slot = data.values()[(m, j)];
            }
            for (q, f) in lib.iter().enumerate() {
                let start = (m * lib.len() + q) * d;
                let out = &mut values[start..start + d];
                f.gradient(&u, out);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteFeature { dim, feature: q, row: m });
                }
            }
        }
        Ok(FeatureJacobian {
            rows: n,
            features: lib.len(),
            dim: d,
            values,
        })
    }

    /// For output dimension `i` and input dimension `j`, the samples
    /// `Σ_q w_{i,q}·∂f_{i,q}/∂u_j(U_m)` over the grid.
    pub fn weighted_jacobian(&self, w: &[f64], data: &Trajectory) -> Result<Vec<Vec<Vec<f64>>>> {
        let d = self.dim();
        let n = data.grid().len();
        let mut out = vec![vec![vec![0.0; n]; d]; d];
        for (i, block) in out.iter_mut().enumerate() {
            let jac = self.feature_jacobian(i, data)?;
            let wi = &w[self.param_range(i)];
            for m in 0..n {
                for (q, &c) in wi.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    for (j, col) in block.iter_mut().enumerate() {
                        col[m] += c * jac.get(m, q, j);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Integrates the system at its true parameters and samples it on `grid`.
    pub fn simulate(&self, u0: &[f64], grid: &TimeGrid, rtol: f64, atol: f64) -> Result<Trajectory> {
        if u0.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "initial condition has {} entries, system has dimension {}",
                u0.len(),
                self.dim()
            )));
        }
        let tol = Tolerances::new(rtol, atol)?;
        let w = self.w_star.clone();
        let samples = dopri::integrate(
            |_, u, out| self.rhs(&w, u, out),
            u0,
            &grid.points(),
            tol,
        )?;
        let values = DMatrix::from_fn(grid.len(), self.dim(), |m, i| samples[m][i]);
        Trajectory::new(*grid, values).map_err(|_| Error::StepSizeUnderflow { t: grid.t_end() })
    }

    /// [`OdeSystem::simulate`] from the default initial condition at the
    /// default tolerance of `1e-12`.
    pub fn simulate_default(&self, grid: &TimeGrid) -> Result<Trajectory> {
        self.simulate(&self.u0, grid, 1e-12, 1e-12)
    }

    fn check_dim(&self, dim: usize, data: &Trajectory) -> Result<()> {
        if dim >= self.dim() {
            return Err(Error::InvalidArgument(format!(
                "dimension index {dim} out of range for a {}-dimensional system",
                self.dim()
            )));
        }
        if data.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} columns, system has dimension {}",
                data.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Dense `(M+1) × J × d` array of feature gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureJacobian {
    rows: usize,
    features: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureJacobian {
    /// `∂f_q/∂u_j` at grid point `m`.
    pub fn get(&self, m: usize, q: usize, j: usize) -> f64 {
        self.values[(m * self.features + q) * self.dim + j]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.features, self.dim)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSpec {
    name: String,
    u0: Vec<f64>,
    t_end: f64,
    equation: Vec<EquationSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EquationSpec {
    terms: Vec<Vec<u32>>,
    w: Vec<f64>,
}

impl SystemSpec {
    fn build(self) -> Result<OdeSystem> {
        let mut libs = Vec::new();
        let mut w = Vec::new();
        for (i, eq) in self.equation.into_iter().enumerate() {
            if eq.terms.len() != eq.w.len() {
                return Err(Error::Config(format!(
                    "equation {} lists {} terms but {} coefficients",
                    i + 1,
                    eq.terms.len(),
                    eq.w.len()
                )));
            }
            libs.push(eq.terms.into_iter().map(Monomial::new).collect());
            w.extend(eq.w);
        }
        OdeSystem::new(self.name, libs, w, self.u0, self.t_end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column_data(cols: &[&[f64]]) -> Trajectory {
        let n = cols[0].len();
        let g = TimeGrid::new(1.0, n - 1).unwrap();
        let v = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
        Trajectory::new(g, v).unwrap()
    }

    #[test]
    fn builtin_parameters() {
        let lg = OdeSystem::builtin(BuiltinSystem::LogisticGrowth);
        assert_eq!(lg.w_star(), &[1.0, -1.0]);
        assert_eq!(lg.t_end(), 10.0);
        assert_eq!(lg.u0(), &[0.01]);

        let lz = OdeSystem::builtin(BuiltinSystem::Lorenz);
        assert_eq!(lz.num_params(), 7);
        assert_eq!(lz.dim(), 3);
        assert_eq!(*lz.w_star().last().unwrap(), -8.0 / 3.0);
        assert_eq!(lz.u0(), &[-8.0, 10.0, 27.0]);

        let df = OdeSystem::builtin(BuiltinSystem::Duffing);
        assert_eq!(df.library(0), &[Monomial::power(2, 1, 1)]);
        assert_eq!(df.w_star(), &[1.0, -0.2, -0.05, -1.0]);
        assert_eq!(df.t_end(), 20.0);

        let fhn = OdeSystem::builtin(BuiltinSystem::FitzhughNagumo);
        assert_eq!(fhn.w_star(), &[3.0, -3.0, 3.0, -1.0 / 3.0, 17.0 / 150.0, 1.0 / 15.0]);
        assert_eq!(fhn.u0(), &[0.0, 0.1]);
        assert_eq!(fhn.t_end(), 25.0);
        assert_eq!(fhn.param_range(1), 3..6);
    }

    #[test]
    fn unknown_system_lists_options() {
        let err = OdeSystem::by_name("vanderpol").unwrap_err();
        let msg = err.to_string();
        for s in BuiltinSystem::ALL {
            assert!(msg.contains(s.name()), "{msg}");
        }
        assert!(OdeSystem::by_name("Lorenz").is_ok());
        assert!(OdeSystem::by_name("logistic_growth").is_ok());
    }

    #[test]
    fn labels() {
        assert_eq!(Monomial::new(vec![1, 1, 0]).label(), "u1*u2");
        assert_eq!(Monomial::constant(3).label(), "1");
        assert_eq!(Monomial::power(2, 0, 3).label(), "u1^3");
    }

    #[test]
    fn logistic_feature_matrix() {
        let lg = OdeSystem::builtin(BuiltinSystem::LogisticGrowth);
        let data = column_data(&[&[0.0, 1.0, 2.0, 0.0, 0.0]]);
        let theta = lg.feature_matrix(0, &data).unwrap();
        assert_eq!(theta.column(0).as_slice(), &[0.0, 1.0, 2.0, 0.0, 0.0]);
        assert_eq!(theta.column(1).as_slice(), &[0.0, 1.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn lorenz_third_library() {
        let lz = OdeSystem::builtin(BuiltinSystem::Lorenz);
        let data = column_data(&[
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            &[-1.0, 0.5, 2.0, 0.0, 1.0],
            &[9.0, 9.0, 9.0, 9.0, 9.0],
        ]);
        let theta = lz.feature_matrix(2, &data).unwrap();
        assert_eq!(theta.column(0).as_slice(), &[-1.0, 1.0, 6.0, 0.0, 5.0]);
        assert!(theta.column(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn jacobian_examples() {
        let lg = OdeSystem::builtin(BuiltinSystem::LogisticGrowth);
        let data = column_data(&[&[3.0, 3.0, 3.0, 3.0, 3.0]]);
        assert_eq!(lg.feature_jacobian(0, &data).unwrap().get(0, 1, 0), 6.0);

        let fhn = OdeSystem::builtin(BuiltinSystem::FitzhughNagumo);
        let data = column_data(&[&[2.0; 5], &[7.0; 5]]);
        let jac = fhn.feature_jacobian(0, &data).unwrap();
        assert_eq!(jac.get(0, 1, 0), 12.0);
        assert_eq!(jac.get(0, 1, 1), 0.0);
        assert_eq!(jac.shape(), (5, 3, 2));
    }

    #[test]
    fn non_finite_features_are_reported() {
        let fhn = OdeSystem::builtin(BuiltinSystem::FitzhughNagumo);
        let data = column_data(&[&[1.0, 1.0, 1e120, 1.0, 1.0], &[0.0; 5]]);
        match fhn.feature_matrix(0, &data) {
            Err(Error::NonFiniteFeature { dim: 0, feature: 1, row: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            name = "osc"
            u0 = [1.0, 0.0]
            t_end = 5.0
            [[equation]]
            terms = [[0, 1]]
            w = [1.0]
            [[equation]]
            terms = [[1, 0], [0, 1]]
            w = [-1.0, -0.1]
        "#;
        let sys = OdeSystem::from_toml_str(text).unwrap();
        assert_eq!(sys.name(), "osc");
        assert_eq!(sys.num_params(), 3);
        assert_eq!(sys.param_range(1), 1..3);

        let bad = text.replace("w = [-1.0, -0.1]", "w = [-1.0]");
        assert!(matches!(OdeSystem::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = text.replace("terms = [[0, 1]]", "terms = [[0, 1, 2]]");
        assert!(OdeSystem::from_toml_str(&bad).is_err());
    }

    #[test]
    fn logistic_matches_closed_form() {
        let lg = OdeSystem::builtin(BuiltinSystem::LogisticGrowth);
        let grid = TimeGrid::new(10.0, 1000).unwrap();
        let traj = lg.simulate_default(&grid).unwrap();
        let u0 = 0.01;
        for (m, t) in grid.points().into_iter().enumerate() {
            let exact = u0 * t.exp() / (1.0 + u0 * (t.exp() - 1.0));
            let got = traj.values()[(m, 0)];
            assert!(((got - exact) / exact).abs() <= 1e-9, "t={t} got={got} exact={exact}");
        }
    }

    #[test]
    fn zero_field_is_constant() {
        for which in BuiltinSystem::ALL {
            let sys = OdeSystem::builtin(which);
            let zero = sys.with_params(vec![0.0; sys.num_params()]).unwrap();
            let grid = TimeGrid::new(sys.t_end(), 50).unwrap();
            let traj = zero.simulate_default(&grid).unwrap();
            for m in 0..grid.len() {
                assert_eq!(traj.state(m), sys.u0());
            }
        }
    }

    #[test]
    fn lorenz_self_convergence() {
        let lz = OdeSystem::builtin(BuiltinSystem::Lorenz);
        let grid = TimeGrid::new(10.0, 1000).unwrap();
        let fine = lz.simulate(lz.u0(), &grid, 1e-12, 1e-12).unwrap();
        let coarse = lz.simulate(lz.u0(), &grid, 1e-10, 1e-10).unwrap();
        let scale = fine.values().amax();
        let diff = (fine.values() - coarse.values()).amax();
        assert!(diff / scale <= 1e-6, "diff {diff}, scale {scale}");
    }

    #[test]
    fn residual_converges_at_second_order() {
        // Central differences of the simulated trajectory against the vector field.
        for which in BuiltinSystem::ALL {
            let sys = OdeSystem::builtin(which);
            let mut errs = Vec::new();
            for m in [1600usize, 3200, 6400] {
                let grid = TimeGrid::new(sys.t_end(), m).unwrap();
                let u = sys.simulate_default(&grid).unwrap();
                let dt = grid.dt();
                let mut worst: f64 = 0.0;
                let mut f = vec![0.0; sys.dim()];
                for k in 1..m {
                    sys.rhs(sys.w_star(), &u.state(k), &mut f);
                    for i in 0..sys.dim() {
                        let fd = (u.values()[(k + 1, i)] - u.values()[(k - 1, i)]) / (2.0 * dt);
                        worst = worst.max((fd - f[i]).abs());
                    }
                }
                errs.push(worst);
            }
            for pair in errs.windows(2) {
                let ratio = pair[0] / pair[1];
                assert!(ratio > 3.5 && ratio < 4.5, "{}: ratios {errs:?}", sys.name());
            }
        }
    }

    proptest! {
        #[test]
        fn gradients_match_central_differences(
            exps in proptest::collection::vec(0u32..4, 3),
            u in proptest::collection::vec(0.2f64..2.0, 3),
            signs in proptest::collection::vec(proptest::bool::ANY, 3),
        ) {
            let u: Vec<f64> = u.iter().zip(&signs).map(|(x, s)| if *s { -x } else { *x }).collect();
            let f = Monomial::new(exps);
            let mut g = vec![0.0; 3];
            f.gradient(&u, &mut g);
            for j in 0..3 {
                let h = 1e-5 * u[j].abs().max(1.0);
                let mut up = u.clone();
                let mut dn = u.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (f.eval(&up) - f.eval(&dn)) / (2.0 * h);
                let scale = g[j].abs().max(f.eval(&u).abs()).max(1e-3);
                prop_assert!((fd - g[j]).abs() <= 1e-6 * scale, "j={} fd={} g={}", j, fd, g[j]);
            }
        }

        #[test]
        fn builtin_jacobians_match_feature_matrix(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for which in BuiltinSystem::ALL {
                let sys = OdeSystem::builtin(which);
                let d = sys.dim();
                let base = DMatrix::from_fn(5, d, |_, _| rng.random_range(-2.0..2.0));
                let data = Trajectory::new(TimeGrid::new(1.0, 4).unwrap(), base.clone()).unwrap();
                for i in 0..d {
                    let jac = sys.feature_jacobian(i, &data).unwrap();
                    for j in 0..d {
                        let h = 1e-6;
                        let mut up = base.clone();
                        let mut dn = base.clone();
                        up.column_mut(j).add_scalar_mut(h);
                        dn.column_mut(j).add_scalar_mut(-h);
                        let tu = sys.feature_matrix(i, &Trajectory::new(*data.grid(), up).unwrap()).unwrap();
                        let td = sys.feature_matrix(i, &Trajectory::new(*data.grid(), dn).unwrap()).unwrap();
                        for m in 0..5 {
                            for q in 0..sys.library(i).len() {
                                let fd = (tu[(m, q)] - td[(m, q)]) / (2.0 * h);
                                let an = jac.get(m, q, j);
                                prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0));
                            }
                        }
                    }
                }
            }
        }
    }
}
