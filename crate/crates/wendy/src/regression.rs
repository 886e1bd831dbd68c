//! Weak-form linear systems and the two estimators that solve them.
//!
//! Each state dimension `i` contributes the block `G_i = Φ·Θ_i(U)` and the
//! right-hand side `b_i = −Φ̇·U_i`. Because every dimension has its own
//! feature library, the stacked `G` is block diagonal.
//!
//! The IRLS estimator accounts for the errors-in-variables structure: to
//! first order the weak residual responds to measurement noise `ε` as `L·ε`
//! with `L^{(i,j)} = Φ·diag(Σ_q w_{i,q}∂f_{i,q}/∂u_j) + δ_{ij}Φ̇`, so each
//! step solves a generalised least-squares problem weighted by
//! `C = (1 − α)LLᵀ + αI`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Trajectory;
use crate::linalg::{BandCholesky, BandMatrix, Cholesky};
use crate::systems::OdeSystem;
use crate::test_functions::TestFunctionBasis;

/// Block-diagonal weak-form system `G·w ≈ b`.
#[derive(Clone, Debug)]
pub struct WeakSystem {
    blocks: Vec<DMatrix<f64>>,
    b: DVector<f64>,
    rows_per_block: usize,
    offsets: Vec<usize>,
}

impl WeakSystem {
    pub fn dim(&self) -> usize {
        self.blocks.len()
    }

    /// Number of test functions `K`.
    pub fn rows_per_block(&self) -> usize {
        self.rows_per_block
    }

    pub fn nrows(&self) -> usize {
        self.rows_per_block * self.blocks.len()
    }

    pub fn ncols(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// `G_i = Φ·Θ_i`.
    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    pub fn column_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// The full block-diagonal `G`, zeros included.
    pub fn g_dense(&self) -> DMatrix<f64> {
        let k = self.rows_per_block;
        let mut g = DMatrix::zeros(self.nrows(), self.ncols());
        for (i, blk) in self.blocks.iter().enumerate() {
            g.view_mut((i * k, self.offsets[i]), blk.shape()).copy_from(blk);
        }
        g
    }

    /// `G·w` computed block by block.
    pub fn apply(&self, w: &[f64]) -> DVector<f64> {
        let k = self.rows_per_block;
        let mut out = DVector::zeros(self.nrows());
        for (i, blk) in self.blocks.iter().enumerate() {
            let wi = DVector::from_column_slice(&w[self.column_range(i)]);
            out.rows_mut(i * k, k).copy_from(&(blk * wi));
        }
        out
    }
}

pub fn assemble_weak_system(system: &OdeSystem, data: &Trajectory, basis: &TestFunctionBasis) -> Result<WeakSystem> {
    if basis.grid() != data.grid() {
        return Err(Error::DimensionMismatch(
            "test-function basis and data live on different grids".into(),
        ));
    }
    if data.dim() != system.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, system has dimension {}",
            data.dim(),
            system.dim()
        )));
    }
    let k = basis.num_functions();
    let mut blocks = Vec::with_capacity(system.dim());
    let mut b = DVector::zeros(k * system.dim());
    let mut offsets = vec![0];
    for i in 0..system.dim() {
        let theta = system.feature_matrix(i, data)?;
        blocks.push(basis.phi() * theta);
        let bi = basis.apply_dot(data.component(i));
        b.rows_mut(i * k, k).copy_from(&(-bi));
        offsets.push(offsets[i] + system.library(i).len());
    }
    Ok(WeakSystem {
        blocks,
        b,
        rows_per_block: k,
        offsets,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ols,
    Irls,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Ols => "ols",
            Estimator::Irls => "irls",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub w_hat: Vec<f64>,
    pub method: Estimator,
    pub iterations: usize,
    pub converged: bool,
    pub walltime_ms: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<Vec<f64>>,
    #[serde(rename = "E2", default, skip_serializing_if = "Option::is_none")]
    pub e2: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrlsConfig {
    /// Weight of the identity in `C = (1 − α)LLᵀ + αI`.
    pub alpha: f64,
    /// Stop once `‖w_{n+1} − w_n‖ ≤ tol·‖w_n‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Keep every iterate in [`EstimationResult::history`].
    pub keep_history: bool,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-10,
            tol: 1e-6,
            max_iter: 100,
            keep_history: false,
        }
    }
}

impl IrlsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "IRLS regularisation must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("IRLS tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("IRLS needs max_iter >= 1".into()));
        }
        Ok(())
    }
}

/// Least-squares solve by Householder QR; `dims[c]` names the dimension that
/// owns column `c`, for error reporting.
fn qr_solve(a: DMatrix<f64>, b: &DVector<f64>, dims: &[usize]) -> Result<DVector<f64>> {
    let n = a.ncols();
    if a.nrows() < n {
        return Err(Error::RankDeficient { dim: dims[0] });
    }
    let scale = a.amax();
    let qr = a.qr();
    let r = qr.r();
    for c in 0..n {
        if !(r[(c, c)].abs() > 1e-13 * scale * (n as f64).sqrt()) {
            return Err(Error::RankDeficient { dim: dims[c] });
        }
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { dim: dims[0] })
}

fn ols_weights(ws: &WeakSystem) -> Result<Vec<f64>> {
    let k = ws.rows_per_block;
    let mut w = vec![0.0; ws.ncols()];
    for i in 0..ws.dim() {
        let bi = ws.b.rows(i * k, k).into_owned();
        let range = ws.column_range(i);
        let sol = qr_solve(ws.blocks[i].clone(), &bi, &vec![i; range.len()])?;
        w[range].copy_from_slice(sol.as_slice());
    }
    Ok(w)
}

/// Ordinary least squares, solved block by block with QR.
pub fn wendy_ols(ws: &WeakSystem) -> Result<EstimationResult> {
    let start = Instant::now();
    let w_hat = ols_weights(ws)?;
    Ok(EstimationResult {
        w_hat,
        method: Estimator::Ols,
        iterations: 0,
        converged: true,
        walltime_ms: start.elapsed().as_secs_f64() * 1e3,
        history: Vec::new(),
        e2: None,
    })
}

/// `A·diag(v)·Bᵀ` (or `A·Bᵀ` when `v` is `None`) for two matrices sharing the
/// basis' row supports.
fn weighted_product(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    v: Option<&[f64]>,
    basis: &TestFunctionBasis,
) -> DMatrix<f64> {
    let k = a.nrows();
    if !basis.is_banded() {
        let mut scaled = a.clone();
        if let Some(v) = v {
            for (mut col, &s) in scaled.column_iter_mut().zip(v) {
                col *= s;
            }
        }
        return scaled * b.transpose();
    }
    let mut out = DMatrix::zeros(k, k);
    for r in 0..k {
        let (lo_r, hi_r) = basis.support(r);
        // Supports are sorted by centre, so overlapping rows are contiguous.
        let mut first = r;
        while first > 0 && basis.support(first - 1).1 > lo_r {
            first -= 1;
        }
        let mut c = first;
        while c < k {
            let (lo_c, hi_c) = basis.support(c);
            if lo_c >= hi_r {
                break;
            }
            let (lo, hi) = (lo_r.max(lo_c), hi_r.min(hi_c));
            let mut acc = 0.0;
            match v {
                Some(v) => {
                    for m in lo..hi {
                        acc += a[(r, m)] * v[m] * b[(c, m)];
                    }
                }
                None => {
                    for m in lo..hi {
                        acc += a[(r, m)] * b[(c, m)];
                    }
                }
            }
            out[(r, c)] = acc;
            c += 1;
        }
    }
    out
}

/// `L·Lᵀ` assembled block by block without forming `L`.
fn covariance_gram(v: &[Vec<Vec<f64>>], basis: &TestFunctionBasis) -> DMatrix<f64> {
    let d = v.len();
    let k = basis.num_functions();
    let n = basis.grid().len();
    let phi = basis.phi();
    let phi_dot = basis.phi_dot();
    let nonzero = |x: &[f64]| x.iter().any(|&e| e != 0.0);
    let dd = weighted_product(phi_dot, phi_dot, None, basis);
    let x: Vec<Vec<Option<DMatrix<f64>>>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|bdim| {
                    nonzero(&v[a][bdim]).then(|| weighted_product(phi, phi_dot, Some(&v[a][bdim]), basis))
                })
                .collect()
        })
        .collect();
    let mut c = DMatrix::zeros(k * d, k * d);
    for i in 0..d {
        for ip in i..d {
            let s: Vec<f64> = (0..n).map(|m| (0..d).map(|j| v[i][j][m] * v[ip][j][m]).sum()).collect();
            let mut blk = if nonzero(&s) {
                weighted_product(phi, phi, Some(&s), basis)
            } else {
                DMatrix::zeros(k, k)
            };
            if let Some(xm) = &x[i][ip] {
                blk += xm;
            }
            if let Some(xm) = &x[ip][i] {
                blk += xm.transpose();
            }
            if i == ip {
                blk += &dd;
            }
            if i != ip {
                c.view_mut((ip * k, i * k), (k, k)).copy_from(&blk.transpose());
            }
            c.view_mut((i * k, ip * k), (k, k)).copy_from(&blk);
        }
    }
    c
}

/// Dense first-order noise-propagation operator `L`, of shape `(K·d) × ((M+1)·d)`.
pub fn build_covariance_factor(
    system: &OdeSystem,
    data: &Trajectory,
    basis: &TestFunctionBasis,
    w: &[f64],
) -> Result<DMatrix<f64>> {
    if w.len() != system.num_params() {
        return Err(Error::DimensionMismatch(format!(
            "parameter vector has {} entries, system has {}",
            w.len(),
            system.num_params()
        )));
    }
    let v = system.weighted_jacobian(w, data)?;
    let d = system.dim();
    let k = basis.num_functions();
    let n = data.grid().len();
    let mut l = DMatrix::zeros(k * d, n * d);
    for i in 0..d {
        for j in 0..d {
            let mut blk = basis.phi().clone();
            for (mut col, &s) in blk.column_iter_mut().zip(&v[i][j]) {
                col *= s;
            }
            if i == j {
                blk += basis.phi_dot();
            }
            l.view_mut((i * k, j * n), (k, n)).copy_from(&blk);
        }
    }
    Ok(l)
}

/// `LLᵀ` rescaled to unit mean diagonal.
///
/// The GLS step is invariant to a global scaling of `C`, so this only fixes
/// the meaning of `α` as a fraction of the typical variance. Without it, a
/// system whose states are large (Lorenz) pushes `α = 1e-10` below round-off.
fn normalized_gram(v: &[Vec<Vec<f64>>], basis: &TestFunctionBasis) -> DMatrix<f64> {
    let mut gram = covariance_gram(v, basis);
    let mean_diag = gram.trace() / gram.nrows() as f64;
    if mean_diag > 0.0 && mean_diag.is_finite() {
        gram /= mean_diag;
    }
    gram
}

/// `C(w) = (1 − α)LLᵀ/s + αI`, with `s` the mean diagonal of `LLᵀ`.
pub fn covariance(
    system: &OdeSystem,
    data: &Trajectory,
    basis: &TestFunctionBasis,
    w: &[f64],
    alpha: f64,
) -> Result<DMatrix<f64>> {
    let v = system.weighted_jacobian(w, data)?;
    let mut c = normalized_gram(&v, basis) * (1.0 - alpha);
    for i in 0..c.nrows() {
        c[(i, i)] += alpha;
    }
    Ok(c)
}

/// `LLᵀ` for a banded basis with rows interleaved as `k·d + i`, so that the
/// whole matrix is banded rather than just its `d × d` blocks. Normalised
/// like [`normalized_gram`].
fn band_gram(v: &[Vec<Vec<f64>>], basis: &TestFunctionBasis) -> BandMatrix {
    let d = v.len();
    let k = basis.num_functions();
    let n = basis.grid().len();
    let phi = basis.phi();
    let phi_dot = basis.phi_dot();
    let mut reach = 0;
    for r in 0..k {
        let hi = basis.support(r).1;
        let mut c = r;
        while c + 1 < k && basis.support(c + 1).0 < hi {
            c += 1;
        }
        reach = reach.max(c - r);
    }
    // s[i][i'] = Σ_j v_ij v_i'j, each a contiguous series over m.
    let s: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|ip| (0..n).map(|m| (0..d).map(|j| v[i][j][m] * v[ip][j][m]).sum()).collect())
                .collect()
        })
        .collect();
    let rows: Vec<KernelRow> = (0..k)
        .map(|r| {
            let (lo, hi) = basis.support(r);
            let p: Vec<f64> = (lo..hi).map(|m| phi[(r, m)]).collect();
            let q: Vec<f64> = (lo..hi).map(|m| phi_dot[(r, m)]).collect();
            (lo, p, q)
        })
        .collect();
    let mut c = BandMatrix::zeros(k * d, (reach + 1) * d - 1);
    match shift_of(&rows) {
        Some(delta) => shift_invariant_fill(&mut c, v, &s, &rows[0], delta, k, reach),
        None => generic_fill(&mut c, v, &s, &rows, reach),
    }
    let mean_diag = c.trace() / c.size() as f64;
    if mean_diag > 0.0 && mean_diag.is_finite() {
        c.scaled_shift(1.0 / mean_diag, 0.0)
    } else {
        c
    }
}

type KernelRow = (usize, Vec<f64>, Vec<f64>);

/// The common per-row shift if every row of `Φ` and `Φ̇` is the same kernel
/// translated by a fixed number of samples.
fn shift_of(rows: &[KernelRow]) -> Option<usize> {
    let (lo0, p0, q0) = &rows[0];
    let delta = rows.get(1).map_or(Some(0), |r| r.0.checked_sub(*lo0))?;
    rows.iter()
        .enumerate()
        .all(|(r, (lo, p, q))| *lo == lo0 + r * delta && p == p0 && q == q0)
        .then_some(delta)
}

fn generic_fill(c: &mut BandMatrix, v: &[Vec<Vec<f64>>], s: &[Vec<Vec<f64>>], rows: &[KernelRow], reach: usize) {
    let d = v.len();
    let k = rows.len();
    let dot3 = |a: &[f64], b: &[f64], c: &[f64]| -> f64 { a.iter().zip(b).zip(c).map(|((x, y), z)| x * y * z).sum() };
    for kr in 0..k {
        let (lo_r, ref pr, ref qr) = rows[kr];
        let hi_r = lo_r + pr.len();
        for kc in kr.saturating_sub(reach)..=kr {
            let (lo_c, ref pc, ref qc) = rows[kc];
            let (lo, hi) = (lo_r.max(lo_c), hi_r.min(lo_c + pc.len()));
            if lo >= hi {
                continue;
            }
            let (pr, qr) = (&pr[lo - lo_r..hi - lo_r], &qr[lo - lo_r..hi - lo_r]);
            let (pc, qc) = (&pc[lo - lo_c..hi - lo_c], &qc[lo - lo_c..hi - lo_c]);
            let qq: f64 = qr.iter().zip(qc).map(|(x, y)| x * y).sum();
            for i in 0..d {
                let ip_end = if kc == kr { i + 1 } else { d };
                for ip in 0..ip_end {
                    let mut acc = dot3(pr, pc, &s[i][ip][lo..hi])
                        + dot3(pr, qc, &v[i][ip][lo..hi])
                        + dot3(qr, pc, &v[ip][i][lo..hi]);
                    if i == ip {
                        acc += qq;
                    }
                    c.set(kr * d + i, kc * d + ip, acc);
                }
            }
        }
    }
}

/// Fills the band when all rows share one kernel. At a fixed lag the entries
/// down the band are correlations of a data series with products of the
/// kernel and its shift, so each block is a Hankel matrix of the series
/// times a dense matrix holding those products for every lag.
fn shift_invariant_fill(
    c: &mut BandMatrix,
    v: &[Vec<Vec<f64>>],
    s: &[Vec<Vec<f64>>],
    kernel: &KernelRow,
    delta: usize,
    k: usize,
    reach: usize,
) {
    let d = v.len();
    let (lo0, p, q) = kernel;
    let len = p.len();
    let lags = reach + 1;
    let mut pp = DMatrix::zeros(len, lags);
    // Columns `l` hold p·shift(q), columns `lags + l` hold q·shift(p).
    let mut cross = DMatrix::zeros(len, 2 * lags);
    let mut qq = vec![0.0; lags];
    for l in 0..lags {
        let off = delta * l;
        for a in 0..len.saturating_sub(off) {
            pp[(a, l)] = p[a] * p[a + off];
            cross[(a, l)] = p[a] * q[a + off];
            cross[(a, lags + l)] = q[a] * p[a + off];
            qq[l] += q[a] * q[a + off];
        }
    }
    let hankel = |f: &[f64]| DMatrix::from_fn(k, len, |r, a| f[lo0 + delta * r + a]);
    let xv: Vec<Vec<DMatrix<f64>>> = v
        .iter()
        .map(|vi| {
            vi.iter()
                .map(|f| {
                    if f.iter().any(|&x| x != 0.0) {
                        hankel(f) * &cross
                    } else {
                        DMatrix::zeros(k, 2 * lags)
                    }
                })
                .collect()
        })
        .collect();
    for i in 0..d {
        for ip in 0..=i {
            let es = hankel(&s[i][ip]) * &pp;
            let diag = if i == ip { &qq[..] } else { &[][..] };
            for l in 0..lags.min(k) {
                for kr in l..k {
                    let kc = kr - l;
                    let mut acc = es[(kr, l)] + xv[i][ip][(kr, l)] + xv[ip][i][(kr, lags + l)];
                    if let Some(x) = diag.get(l) {
                        acc += x;
                    }
                    c.set(kr * d + i, kc * d + ip, acc);
                    if l > 0 && i != ip {
                        let acc = es[(kr, l)] + xv[ip][i][(kr, l)] + xv[i][ip][(kr, lags + l)];
                        c.set(kr * d + ip, kc * d + i, acc);
                    }
                }
            }
        }
    }
}

/// Rows of a block-stacked matrix (`i·K + k`) reordered to `k·d + i`.
fn interleave_rows(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let k = a.nrows() / d;
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[((r % d) * k + r / d, c)])
}

/// One generalised least-squares step `argmin ‖L_C⁻¹(G·w − b)‖` with
/// `C = L_C·L_Cᵀ`, retrying with a larger `α` if the factorisation fails.
fn gls_step(
    ws: &WeakSystem,
    system: &OdeSystem,
    data: &Trajectory,
    basis: &TestFunctionBasis,
    w: &[f64],
    alpha: f64,
    g: &DMatrix<f64>,
    dims: &[usize],
) -> Result<Vec<f64>> {
    let v = system.weighted_jacobian(w, data)?;
    let b = DMatrix::from_column_slice(ws.nrows(), 1, ws.b().as_slice());
    if basis.is_banded() {
        let gram = band_gram(&v, basis);
        let d = ws.dim();
        let (g, b) = (interleave_rows(g, d), interleave_rows(&b, d));
        // A wide band gains nothing over the blocked dense factorisation.
        let dense = 4 * (gram.bandwidth() + 1) >= gram.size();
        let mut a = alpha;
        for _ in 0..4 {
            let c = gram.scaled_shift(1.0 - a.min(1.0), a.min(1.0));
            let whitened = if dense {
                Cholesky::new(&c.to_dense()).map(|chol| (chol.whiten(&g), chol.whiten(&b)))
            } else {
                BandCholesky::new(&c).map(|chol| (chol.whiten(&g), chol.whiten(&b)))
            };
            if let Some((gw, bw)) = whitened {
                let sol = qr_solve(gw, &bw.column(0).into_owned(), dims)?;
                return Ok(sol.as_slice().to_vec());
            }
            log::warn!("covariance not positive definite at alpha = {a:e}; retrying with {:e}", 10.0 * a);
            a *= 10.0;
        }
        return Err(Error::NotPositiveDefinite { alpha: a / 10.0 });
    }
    let gram = normalized_gram(&v, basis);
    let mut a = alpha;
    for _ in 0..4 {
        let mut c = &gram * (1.0 - a.min(1.0));
        for i in 0..c.nrows() {
            c[(i, i)] += a.min(1.0);
        }
        if let Some(chol) = Cholesky::new(&c) {
            let gw = chol.whiten(g);
            let bw = chol.whiten(&b);
            let sol = qr_solve(gw, &bw.column(0).into_owned(), dims)?;
            return Ok(sol.as_slice().to_vec());
        }
        log::warn!("covariance not positive definite at alpha = {a:e}; retrying with {:e}", 10.0 * a);
        a *= 10.0;
    }
    Err(Error::NotPositiveDefinite { alpha: a / 10.0 })
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let num: f64 = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = old.iter().map(|a| a * a).sum::<f64>().sqrt();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Iteratively reweighted least squares, started from the OLS estimate.
///
/// Without convergence the iterate with the smallest update is returned and
/// `converged` is false.
pub fn wendy_irls(
    ws: &WeakSystem,
    system: &OdeSystem,
    data: &Trajectory,
    basis: &TestFunctionBasis,
    cfg: &IrlsConfig,
) -> Result<EstimationResult> {
    cfg.validate()?;
    let start = Instant::now();
    let g = ws.g_dense();
    let dims: Vec<usize> = (0..ws.dim()).flat_map(|i| std::iter::repeat_n(i, ws.column_range(i).len())).collect();
    let mut w = ols_weights(ws)?;
    let mut history = Vec::new();
    if cfg.keep_history {
        history.push(w.clone());
    }
    let mut best = (f64::INFINITY, w.clone());
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let next = gls_step(ws, system, data, basis, &w, cfg.alpha, &g, &dims)?;
        iterations += 1;
        let change = rel_change(&next, &w);
        if cfg.keep_history {
            history.push(next.clone());
        }
        if !next.iter().all(|x| x.is_finite()) {
            return Err(Error::Consistency("IRLS produced non-finite coefficients".into()));
        }
        if change < best.0 {
            best = (change, next.clone());
        }
        w = next;
        if change <= cfg.tol {
            converged = true;
            break;
        }
    }
    let w_hat = if converged { w } else { best.1 };
    Ok(EstimationResult {
        w_hat,
        method: Estimator::Irls,
        iterations,
        converged,
        walltime_ms: start.elapsed().as_secs_f64() * 1e3,
        history,
        e2: None,
    })
}
