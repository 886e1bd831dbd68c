//! Weak-form parameter estimation for ordinary differential equations whose
//! right-hand side is linear in the unknown coefficients, together with
//! data-driven selection of the test-function support radius.
//!
//! The typical pipeline is
//!
//! 1. sample (or simulate) a [`Trajectory`] on a uniform [`TimeGrid`],
//! 2. pick a test-function basis, either at a single radius located at the
//!    changepoint of the estimated integration-error curve
//!    ([`selection::sl_select`]) or as an orthonormalised multiscale stack
//!    ([`selection::mg_select`]),
//! 3. assemble the weak linear system and solve it by ordinary least squares
//!    or by iteratively reweighted least squares ([`regression`]).
//!
//! ```no_run
//! use wendy::prelude::*;
//!
//! let system = OdeSystem::builtin(BuiltinSystem::LogisticGrowth);
//! let grid = TimeGrid::new(system.t_end(), 500)?;
//! let clean = system.simulate_default(&grid)?;
//! let noisy = add_noise(&clean, &NoiseSpec::new(0.1, 7))?;
//!
//! let sel = sl_select(&noisy, 16, &EulerMaclaurinConfig::default(), 1)?;
//! let ws = assemble_weak_system(&system, &noisy, &sel.basis)?;
//! let fit = wendy_irls(&ws, &system, &noisy, &sel.basis, &IrlsConfig::default())?;
//! println!("relative error {}", e2_metric(&fit.w_hat, system.w_star())?);
//! # Ok::<(), wendy::Error>(())
//! ```

pub mod changepoint;
pub mod dopri;
mod error;
pub mod experiment;
pub mod grid;
pub mod integration_error;
mod linalg;
pub mod quadrature;
pub mod regression;
pub mod selection;
pub mod special;
pub mod systems;
pub mod test_functions;

pub use error::{Error, Result};
pub use grid::{add_noise, e2_metric, NoiseConvention, NoiseSpec, TimeGrid, Trajectory};
pub use systems::{BuiltinSystem, Monomial, OdeSystem};

/// The types and functions most programs need.
pub mod prelude {
    pub use crate::changepoint::{detect_changepoint, ChangepointResult};
    pub use crate::grid::{add_noise, e2_metric, NoiseConvention, NoiseSpec, TimeGrid, Trajectory};
    pub use crate::integration_error::{ehat_curve, true_eint_curve, ErrorCurve, EulerMaclaurinConfig};
    pub use crate::regression::{
        assemble_weak_system, wendy_irls, wendy_ols, EstimationResult, IrlsConfig, WeakSystem,
    };
    pub use crate::selection::{mg_select, sl_select, MgConfig, MgSelection, SlSelection};
    pub use crate::systems::{BuiltinSystem, OdeSystem};
    pub use crate::test_functions::{assemble_basis, ReferenceFunction, TestFunctionBasis};
    pub use crate::Error;
}
