//! Monte-Carlo experiment runner behind the `wendy` command-line tool.
//!
//! An [`ExperimentConfig`] names a system, a grid, noise levels and a trial
//! count. Trial `i` draws its noise from seed `seed + i`, so every output
//! except the measured walltimes is reproducible from the configuration.
//! Trials run on a rayon pool and are collected in trial order.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{add_noise, e2_metric, NoiseConvention, NoiseSpec, TimeGrid, Trajectory};
use crate::integration_error::{
    choose_truncation_order, ehat_curve, true_eint_curve, ErrorCurve, EulerMaclaurinConfig,
};
use crate::regression::{assemble_weak_system, wendy_irls, wendy_ols, EstimationResult, IrlsConfig};
use crate::selection::{mg_select, sl_select, MgConfig};
use crate::systems::OdeSystem;
use crate::test_functions::{assemble_basis, centers_for_steps, ReferenceFunction, TestFunctionBasis};

/// Regression backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Regression {
    Ols,
    Irls,
}

/// Test-function set construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Construction {
    Sl,
    Mg,
}

/// One of the four estimator configurations, written `ols-sl`, `irls-mg`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Method {
    pub regression: Regression,
    pub construction: Construction,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::new(Regression::Ols, Construction::Sl),
        Method::new(Regression::Irls, Construction::Sl),
        Method::new(Regression::Ols, Construction::Mg),
        Method::new(Regression::Irls, Construction::Mg),
    ];

    pub const fn new(regression: Regression, construction: Construction) -> Self {
        Self {
            regression,
            construction,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = match self.regression {
            Regression::Ols => "ols",
            Regression::Irls => "irls",
        };
        let c = match self.construction {
            Construction::Sl => "sl",
            Construction::Mg => "mg",
        };
        write!(f, "{r}-{c}")
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (r, c) = lower
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("method `{s}` is not of the form <ols|irls>-<sl|mg>")))?;
        let regression = match r {
            "ols" => Regression::Ols,
            "irls" => Regression::Irls,
            _ => return Err(Error::Config(format!("unknown regression `{r}` in method `{s}`"))),
        };
        let construction = match c {
            "sl" => Construction::Sl,
            "mg" => Construction::Mg,
            _ => return Err(Error::Config(format!("unknown construction `{c}` in method `{s}`"))),
        };
        Ok(Self::new(regression, construction))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

fn regression_name(r: Regression) -> &'static str {
    match r {
        Regression::Ols => "ols",
        Regression::Irls => "irls",
    }
}

/// Truncation order: a fixed `S`, or `"auto"` to pick it from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderSetting {
    Fixed(usize),
    Named(String),
}

impl Default for OrderSetting {
    fn default() -> Self {
        OrderSetting::Fixed(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerMaclaurinSection {
    pub order: OrderSetting,
    /// Relative tolerance for `order = "auto"`.
    pub tau: f64,
    /// Stencil orders `μ_1..μ_2S`; only valid with a fixed order.
    pub fd_orders: Option<Vec<usize>>,
}

impl Default for EulerMaclaurinSection {
    fn default() -> Self {
        Self {
            order: OrderSetting::default(),
            tau: 0.1,
            fd_orders: None,
        }
    }
}

impl EulerMaclaurinSection {
    /// Resolve the policy against a data set.
    pub fn resolve(&self, data: &Trajectory) -> Result<EulerMaclaurinConfig> {
        match &self.order {
            OrderSetting::Fixed(s) => match &self.fd_orders {
                Some(mu) => EulerMaclaurinConfig::with_fd_orders(*s, mu.clone()),
                None => EulerMaclaurinConfig::new(*s),
            },
            OrderSetting::Named(name) if name == "auto" => {
                let mut s = 1;
                for i in 0..data.dim() {
                    s = s.max(choose_truncation_order(data.component(i), data.grid(), self.tau)?);
                }
                EulerMaclaurinConfig::new(s)
            }
            OrderSetting::Named(other) => Err(Error::Config(format!(
                "euler_maclaurin.order must be an integer or \"auto\", got \"{other}\""
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        if let OrderSetting::Named(n) = &self.order {
            if n != "auto" {
                return Err(Error::Config(format!(
                    "euler_maclaurin.order must be an integer or \"auto\", got \"{n}\""
                )));
            }
            if self.fd_orders.is_some() {
                return Err(Error::Config("fd_orders needs a fixed euler_maclaurin.order".into()));
            }
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("euler_maclaurin.tau must lie in (0, 1), got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    #[default]
    Geometric,
}

/// Which fixed radii the radius sweep visits, in grid steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit list; overrides the generated range below.
    pub steps: Option<Vec<usize>>,
    pub count: usize,
    pub min_steps: usize,
    /// Defaults to `⌊M/4⌋`.
    pub max_steps: Option<usize>,
    pub spacing: Spacing,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            steps: None,
            count: 14,
            min_steps: 4,
            max_steps: None,
            spacing: Spacing::default(),
        }
    }
}

impl SweepSection {
    pub fn radii_steps(&self, intervals: usize) -> Result<Vec<usize>> {
        let max_admissible = intervals / 2;
        let mut steps = match &self.steps {
            Some(list) => list.clone(),
            None => {
                let hi = self.max_steps.unwrap_or(intervals / 4).min(max_admissible);
                let lo = self.min_steps.max(2);
                if lo > hi || self.count == 0 {
                    return Err(Error::Config(format!(
                        "empty radius sweep: min_steps {lo}, max_steps {hi}, count {}",
                        self.count
                    )));
                }
                if self.count == 1 {
                    vec![lo]
                } else {
                    let last = (self.count - 1) as f64;
                    (0..self.count)
                        .map(|i| {
                            let f = i as f64 / last;
                            let s = match self.spacing {
                                Spacing::Linear => lo as f64 + (hi - lo) as f64 * f,
                                Spacing::Geometric => lo as f64 * (hi as f64 / lo as f64).powf(f),
                            };
                            s.round() as usize
                        })
                        .collect()
                }
            }
        };
        steps.sort_unstable();
        steps.dedup();
        if let Some(&bad) = steps.iter().find(|&&s| s < 2 || s > max_admissible) {
            return Err(Error::Config(format!(
                "sweep radius of {bad} steps is outside 2..={max_admissible}"
            )));
        }
        Ok(steps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// Grid sizes `M`; defaults to the top-level `intervals`.
    pub resolutions: Option<Vec<usize>>,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { resolutions: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesSection {
    /// Polynomial orders for the `(r, p)` surface.
    pub orders: Vec<usize>,
    /// Realisations in the noisy `ê` envelope; defaults to `trials`.
    pub envelope_trials: Option<usize>,
    /// Noise ratio for the envelope; defaults to the largest `noise` entry.
    pub envelope_noise: Option<f64>,
}

impl Default for CurvesSection {
    fn default() -> Self {
        Self {
            orders: vec![4, 8, 12, 16, 20],
            envelope_trials: None,
            envelope_noise: None,
        }
    }
}

/// Everything a run needs; see the README for the file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in system name.
    pub system: Option<String>,
    /// Path to a system definition file; relative paths resolve against the
    /// configuration file's directory.
    pub system_file: Option<PathBuf>,
    pub intervals: usize,
    pub noise: Vec<f64>,
    pub noise_convention: NoiseConvention,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Polynomial test-function order `p`.
    pub poly_order: usize,
    /// Spacing between test-function centres in grid steps.
    pub stride: usize,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub out_dir: PathBuf,
    pub euler_maclaurin: EulerMaclaurinSection,
    pub mg: MgConfig,
    pub irls: IrlsConfig,
    pub sweep: SweepSection,
    pub compare: CompareSection,
    pub curves: CurvesSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: None,
            system_file: None,
            intervals: 500,
            noise: vec![0.01, 0.05, 0.1, 0.2],
            noise_convention: NoiseConvention::default(),
            trials: 25,
            seed: 0,
            methods: Method::ALL.to_vec(),
            poly_order: 16,
            stride: 1,
            threads: 0,
            out_dir: PathBuf::from("out"),
            euler_maclaurin: EulerMaclaurinSection::default(),
            mg: MgConfig::default(),
            irls: IrlsConfig::default(),
            sweep: SweepSection::default(),
            compare: CompareSection::default(),
            curves: CurvesSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse a configuration file and anchor `system_file` to its directory.
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(file), Some(dir)) = (&cfg.system_file, path.parent()) {
            if file.is_relative() {
                cfg.system_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.system.is_some() && self.system_file.is_some() {
            return Err(Error::Config("set either `system` or `system_file`, not both".into()));
        }
        if self.intervals < 8 {
            return Err(Error::Config(format!("intervals must be at least 8, got {}", self.intervals)));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.noise.is_empty() {
            return Err(Error::Config("noise list is empty".into()));
        }
        if let Some(&bad) = self.noise.iter().find(|&&n| !(n >= 0.0 && n.is_finite())) {
            return Err(Error::Config(format!("noise ratios must be finite and >= 0, got {bad}")));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods list is empty".into()));
        }
        if !(2..=40).contains(&self.poly_order) {
            return Err(Error::Config(format!("poly_order must lie in 2..=40, got {}", self.poly_order)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        self.euler_maclaurin.validate()?;
        self.mg.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.irls.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.curves.orders.iter().any(|&p| !(2..=40).contains(&p)) {
            return Err(Error::Config("curves.orders entries must lie in 2..=40".into()));
        }
        Ok(())
    }

    /// The system named by `system` or `system_file`.
    pub fn load_system(&self) -> Result<OdeSystem> {
        match (&self.system, &self.system_file) {
            (Some(name), None) => OdeSystem::by_name(name),
            (None, Some(path)) => OdeSystem::from_toml_file(path),
            (None, None) => Err(Error::Config("no system configured (set `system` or `system_file`)".into())),
            (Some(_), Some(_)) => Err(Error::Config("set either `system` or `system_file`, not both".into())),
        }
    }

    pub fn noise_spec(&self, ratio: f64, trial: usize) -> NoiseSpec {
        NoiseSpec::new(ratio, self.trial_seed(trial)).with_convention(self.noise_convention)
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    pub fn resolutions(&self) -> Vec<usize> {
        self.compare.resolutions.clone().unwrap_or_else(|| vec![self.intervals])
    }

    fn regressions(&self) -> Vec<Regression> {
        let mut r: Vec<Regression> = self.methods.iter().map(|m| m.regression).collect();
        r.sort();
        r.dedup();
        r
    }

    /// Run `f` on a pool sized by `threads`.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Noise-free trajectory of `system` on `M` intervals over its own span.
pub fn simulate_clean(system: &OdeSystem, intervals: usize) -> Result<Trajectory> {
    let grid = TimeGrid::new(system.t_end(), intervals)?;
    system.simulate_default(&grid)
}

/// Median of the finite entries, NaN if there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn csv_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:e}")
    }
}

fn polynomial_basis(grid: &TimeGrid, steps: usize, p: usize, stride: usize) -> Result<TestFunctionBasis> {
    let psi = ReferenceFunction::polynomial(steps as f64 * grid.dt(), p)?;
    assemble_basis(&psi, &centers_for_steps(grid, steps, stride)?, grid)
}

fn estimate_with(
    regression: Regression,
    system: &OdeSystem,
    data: &Trajectory,
    basis: &TestFunctionBasis,
    irls: &IrlsConfig,
) -> Result<EstimationResult> {
    let ws = assemble_weak_system(system, data, basis)?;
    let mut fit = match regression {
        Regression::Ols => wendy_ols(&ws)?,
        Regression::Irls => wendy_irls(&ws, system, data, basis, irls)?,
    };
    fit.e2 = Some(e2_metric(&fit.w_hat, system.w_star())?);
    Ok(fit)
}

/// Result of one selection step.
#[derive(Clone, Debug, Serialize)]
pub struct SelectionSummary {
    pub method: String,
    /// `r̂_c` for SL, `r_min` for MG.
    pub radius: f64,
    #[serde(rename = "K")]
    pub num_functions: usize,
    pub walltime_ms: f64,
    pub curve_csv_path: Option<String>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl SelectionSummary {
    /// JSON with the radius under `r_hat_c` (SL) or `r_min` (MG).
    pub fn to_json(&self) -> String {
        let key = if self.method.ends_with("mg") { "r_min" } else { "r_hat_c" };
        let mut obj = serde_json::Map::new();
        obj.insert("method".into(), self.method.clone().into());
        obj.insert(key.into(), self.radius.into());
        obj.insert("K".into(), self.num_functions.into());
        obj.insert("walltime_ms".into(), self.walltime_ms.into());
        obj.insert(
            "curve_csv_path".into(),
            self.curve_csv_path.clone().map_or(serde_json::Value::Null, Into::into),
        );
        if self.degenerate {
            obj.insert("degenerate".into(), true.into());
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(obj)).expect("JSON map serialises")
    }
}

/// Basis chosen by a construction, with its selection summary and curve.
pub struct Selected {
    pub basis: TestFunctionBasis,
    pub summary: SelectionSummary,
    pub curve: ErrorCurve,
}

pub fn select(
    construction: Construction,
    data: &Trajectory,
    cfg: &ExperimentConfig,
    em: &EulerMaclaurinConfig,
) -> Result<Selected> {
    let start = Instant::now();
    let (basis, radius, degenerate, curve) = match construction {
        Construction::Sl => {
            let sel = sl_select(data, cfg.poly_order, em, cfg.stride)?;
            (sel.basis, sel.r_hat, sel.degenerate, sel.curve)
        }
        Construction::Mg => {
            let sel = mg_select(data, &cfg.mg)?;
            (sel.basis, sel.r_min, sel.degenerate, sel.curve)
        }
    };
    let walltime_ms = start.elapsed().as_secs_f64() * 1e3;
    let method = match construction {
        Construction::Sl => "sl",
        Construction::Mg => "mg",
    };
    Ok(Selected {
        summary: SelectionSummary {
            method: method.into(),
            radius,
            num_functions: basis.num_functions(),
            walltime_ms,
            curve_csv_path: None,
            degenerate,
        },
        basis,
        curve,
    })
}

/// Selection followed by estimation; the reported walltime covers both.
pub fn run_method(
    method: Method,
    system: &OdeSystem,
    data: &Trajectory,
    cfg: &ExperimentConfig,
) -> Result<(EstimationResult, Selected)> {
    let em = cfg.euler_maclaurin.resolve(data)?;
    let sel = select(method.construction, data, cfg, &em)?;
    let mut fit = estimate_with(method.regression, system, data, &sel.basis, &cfg.irls)?;
    fit.walltime_ms += sel.summary.walltime_ms;
    Ok((fit, sel))
}

// ---------------------------------------------------------------- sweep ----

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub method: Regression,
    pub noise: f64,
    pub steps: usize,
    pub radius: f64,
    pub trial: usize,
    /// NaN when the fit failed.
    pub e2: f64,
    pub walltime_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhatRow {
    pub noise: f64,
    pub trial: usize,
    pub steps: usize,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub method: String,
    pub noise: f64,
    pub radius: f64,
    pub trial: usize,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub system: String,
    pub grid: TimeGrid,
    pub steps: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub rhat: Vec<RhatRow>,
    pub failures: Vec<Failure>,
}

/// Median `E₂` per radius for one method and noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct MedianCurve {
    pub steps: Vec<usize>,
    pub radii: Vec<f64>,
    pub median_e2: Vec<f64>,
}

impl MedianCurve {
    pub fn argmin(&self) -> Option<usize> {
        (0..self.median_e2.len())
            .filter(|&i| self.median_e2[i].is_finite())
            .min_by(|&a, &b| self.median_e2[a].total_cmp(&self.median_e2[b]))
    }

    /// The contiguous run of radii around the minimum where the median is
    /// within `factor` of it, as `(lo, hi)` radii.
    pub fn near_min_interval(&self, factor: f64) -> Option<(f64, f64)> {
        let best = self.argmin()?;
        let limit = factor * self.median_e2[best];
        let ok = |i: usize| self.median_e2[i].is_finite() && self.median_e2[i] <= limit;
        let mut lo = best;
        while lo > 0 && ok(lo - 1) {
            lo -= 1;
        }
        let mut hi = best;
        while hi + 1 < self.median_e2.len() && ok(hi + 1) {
            hi += 1;
        }
        Some((self.radii[lo], self.radii[hi]))
    }
}

impl SweepResult {
    pub fn median_curve(&self, method: Regression, noise: f64) -> MedianCurve {
        let mut by_steps: BTreeMap<usize, Vec<f64>> = self.steps.iter().map(|&s| (s, Vec::new())).collect();
        for row in self.rows.iter().filter(|r| r.method == method && r.noise == noise) {
            by_steps.entry(row.steps).or_default().push(row.e2);
        }
        MedianCurve {
            steps: by_steps.keys().copied().collect(),
            radii: by_steps.keys().map(|&s| s as f64 * self.grid.dt()).collect(),
            median_e2: by_steps.values().map(|v| median(v)).collect(),
        }
    }

    /// Median over trials of the selected `r̂_c` at a noise level.
    pub fn median_rhat(&self, noise: f64) -> f64 {
        let v: Vec<f64> = self.rhat.iter().filter(|r| r.noise == noise).map(|r| r.radius).collect();
        median(&v)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("system,method,noise,r,trial,E2,walltime_ms\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3}",
                self.system,
                regression_name(r.method),
                r.noise,
                csv_num(r.radius),
                r.trial,
                csv_num(r.e2),
                r.walltime_ms
            );
        }
        out
    }

    pub fn summary_csv_string(&self, regressions: &[Regression], noises: &[f64]) -> String {
        let mut out = String::from("system,method,noise,r,median_E2,median_r_hat_c\n");
        for &noise in noises {
            let rhat = self.median_rhat(noise);
            for &m in regressions {
                let curve = self.median_curve(m, noise);
                for i in 0..curve.radii.len() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        self.system,
                        regression_name(m),
                        noise,
                        csv_num(curve.radii[i]),
                        csv_num(curve.median_e2[i]),
                        csv_num(rhat)
                    );
                }
            }
        }
        out
    }

    pub fn rhat_csv_string(&self) -> String {
        let mut out = String::from("system,noise,trial,r_hat_c\n");
        for r in &self.rhat {
            let _ = writeln!(out, "{},{},{},{}", self.system, r.noise, r.trial, csv_num(r.radius));
        }
        out
    }
}

struct TrialSweep {
    rows: Vec<SweepRow>,
    rhat: Option<RhatRow>,
    failures: Vec<Failure>,
}

fn sweep_trial(
    system: &OdeSystem,
    clean: &Trajectory,
    cfg: &ExperimentConfig,
    steps: &[usize],
    regressions: &[Regression],
    noise: f64,
    trial: usize,
) -> TrialSweep {
    let mut out = TrialSweep {
        rows: Vec::new(),
        rhat: None,
        failures: Vec::new(),
    };
    let grid = *clean.grid();
    let noisy = match add_noise(clean, &cfg.noise_spec(noise, trial)) {
        Ok(d) => d,
        Err(e) => {
            out.failures.push(Failure {
                method: "noise".into(),
                noise,
                radius: f64::NAN,
                trial,
                message: e.to_string(),
            });
            return out;
        }
    };
    match cfg
        .euler_maclaurin
        .resolve(&noisy)
        .and_then(|em| sl_select(&noisy, cfg.poly_order, &em, cfg.stride))
    {
        Ok(sel) => {
            out.rhat = Some(RhatRow {
                noise,
                trial,
                steps: sel.steps,
                radius: sel.r_hat,
            })
        }
        Err(e) => out.failures.push(Failure {
            method: "sl-select".into(),
            noise,
            radius: f64::NAN,
            trial,
            message: e.to_string(),
        }),
    }
    for &s in steps {
        let radius = s as f64 * grid.dt();
        let basis = polynomial_basis(&grid, s, cfg.poly_order, cfg.stride);
        for &m in regressions {
            let start = Instant::now();
            let fit = match &basis {
                Ok(b) => estimate_with(m, system, &noisy, b, &cfg.irls),
                Err(e) => Err(Error::Consistency(e.to_string())),
            };
            let walltime_ms = start.elapsed().as_secs_f64() * 1e3;
            let e2 = match fit {
                Ok(f) => f.e2.unwrap_or(f64::NAN),
                Err(e) => {
                    out.failures.push(Failure {
                        method: regression_name(m).into(),
                        noise,
                        radius,
                        trial,
                        message: e.to_string(),
                    });
                    f64::NAN
                }
            };
            out.rows.push(SweepRow {
                method: m,
                noise,
                steps: s,
                radius,
                trial,
                e2,
                walltime_ms,
            });
        }
    }
    out
}

/// Fixed-radius OLS/IRLS fits over the sweep radii for every noise level and
/// trial, plus the SL-selected radius of every trial.
pub fn run_sweep(system: &OdeSystem, cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let clean = simulate_clean(system, cfg.intervals)?;
    let steps = cfg.sweep.radii_steps(cfg.intervals)?;
    let regressions = cfg.regressions();
    let jobs: Vec<(f64, usize)> = cfg
        .noise
        .iter()
        .flat_map(|&n| (0..cfg.trials).map(move |t| (n, t)))
        .collect();
    let per_trial: Vec<TrialSweep> = cfg.install(|| {
        jobs.par_iter()
            .map(|&(noise, trial)| sweep_trial(system, &clean, cfg, &steps, &regressions, noise, trial))
            .collect()
    })?;
    let mut result = SweepResult {
        system: system.name().to_string(),
        grid: *clean.grid(),
        steps,
        rows: Vec::new(),
        rhat: Vec::new(),
        failures: Vec::new(),
    };
    for t in per_trial {
        result.rows.extend(t.rows);
        result.rhat.extend(t.rhat);
        result.failures.extend(t.failures);
    }
    if !result.failures.is_empty() {
        warn!("{} sweep fits failed; see the failures file", result.failures.len());
    }
    Ok(result)
}

// -------------------------------------------------------------- compare ----

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub method: Method,
    pub intervals: usize,
    pub noise: f64,
    pub trial: usize,
    pub e2: f64,
    pub walltime_ms: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `r̂_c` for SL, `r_min` for MG.
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct CompareResult {
    pub system: String,
    pub rows: Vec<CompareRow>,
    pub failures: Vec<Failure>,
}

impl CompareResult {
    fn select_rows(&self, method: Method, intervals: usize, noise: f64) -> impl Iterator<Item = &CompareRow> {
        self.rows
            .iter()
            .filter(move |r| r.method == method && r.intervals == intervals && r.noise == noise)
    }

    pub fn median_e2(&self, method: Method, intervals: usize, noise: f64) -> f64 {
        median(&self.select_rows(method, intervals, noise).map(|r| r.e2).collect::<Vec<_>>())
    }

    pub fn median_walltime(&self, method: Method, intervals: usize, noise: f64) -> f64 {
        median(&self.select_rows(method, intervals, noise).map(|r| r.walltime_ms).collect::<Vec<_>>())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("system,method,M,noise,trial,E2,walltime_ms,iterations,converged,r\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3},{},{},{}",
                self.system,
                r.method,
                r.intervals,
                r.noise,
                r.trial,
                csv_num(r.e2),
                r.walltime_ms,
                r.iterations,
                r.converged,
                csv_num(r.radius)
            );
        }
        out
    }

    pub fn medians_csv_string(&self) -> String {
        let mut keys: Vec<(Method, usize, u64)> = self
            .rows
            .iter()
            .map(|r| (r.method, r.intervals, r.noise.to_bits()))
            .collect();
        keys.sort_by(|a, b| (a.1, f64::from_bits(a.2), a.0).partial_cmp(&(b.1, f64::from_bits(b.2), b.0)).unwrap());
        keys.dedup();
        let mut out = String::from("system,method,M,noise,median_E2,median_walltime_ms,trials\n");
        for (m, n, bits) in keys {
            let noise = f64::from_bits(bits);
            let count = self.select_rows(m, n, noise).count();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.3},{}",
                self.system,
                m,
                n,
                noise,
                csv_num(self.median_e2(m, n, noise)),
                self.median_walltime(m, n, noise),
                count
            );
        }
        out
    }
}

fn compare_trial(
    system: &OdeSystem,
    clean: &Trajectory,
    cfg: &ExperimentConfig,
    noise: f64,
    trial: usize,
) -> (Vec<CompareRow>, Vec<Failure>) {
    let intervals = clean.grid().intervals();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let noisy = match add_noise(clean, &cfg.noise_spec(noise, trial)) {
        Ok(d) => d,
        Err(e) => {
            failures.push(Failure {
                method: "noise".into(),
                noise,
                radius: f64::NAN,
                trial,
                message: e.to_string(),
            });
            return (rows, failures);
        }
    };
    for &method in &cfg.methods {
        match run_method(method, system, &noisy, cfg) {
            Ok((fit, sel)) => rows.push(CompareRow {
                method,
                intervals,
                noise,
                trial,
                e2: fit.e2.unwrap_or(f64::NAN),
                walltime_ms: fit.walltime_ms,
                iterations: fit.iterations,
                converged: fit.converged,
                radius: sel.summary.radius,
            }),
            Err(e) => {
                failures.push(Failure {
                    method: method.to_string(),
                    noise,
                    radius: f64::NAN,
                    trial,
                    message: e.to_string(),
                });
                rows.push(CompareRow {
                    method,
                    intervals,
                    noise,
                    trial,
                    e2: f64::NAN,
                    walltime_ms: f64::NAN,
                    iterations: 0,
                    converged: false,
                    radius: f64::NAN,
                });
            }
        }
    }
    (rows, failures)
}

/// Every configured method on every (resolution, noise, trial).
pub fn run_compare(system: &OdeSystem, cfg: &ExperimentConfig) -> Result<CompareResult> {
    cfg.validate()?;
    let mut result = CompareResult {
        system: system.name().to_string(),
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for intervals in cfg.resolutions() {
        let clean = simulate_clean(system, intervals)?;
        let jobs: Vec<(f64, usize)> = cfg
            .noise
            .iter()
            .flat_map(|&n| (0..cfg.trials).map(move |t| (n, t)))
            .collect();
        let per_trial: Vec<(Vec<CompareRow>, Vec<Failure>)> = cfg.install(|| {
            jobs.par_iter()
                .map(|&(noise, trial)| compare_trial(system, &clean, cfg, noise, trial))
                .collect()
        })?;
        for (rows, failures) in per_trial {
            result.rows.extend(rows);
            result.failures.extend(failures);
        }
    }
    Ok(result)
}

// --------------------------------------------------------- error curves ----

#[derive(Clone, Debug)]
pub struct SurfaceSlice {
    pub order: usize,
    pub truth: ErrorCurve,
    /// `r̂_c` from the noise-free `ê` at this order, in grid steps.
    pub rhat_steps: usize,
}

#[derive(Clone, Debug)]
pub struct CurvesResult {
    pub system: String,
    pub truth: ErrorCurve,
    /// `(S, ê)` on noise-free data.
    pub estimates: Vec<(usize, ErrorCurve)>,
    pub envelope_noise: f64,
    pub envelope_min: Vec<f64>,
    pub envelope_max: Vec<f64>,
    /// `r̂_c` of every noisy realisation, in grid steps.
    pub envelope_rhat: Vec<usize>,
    pub surface: Vec<SurfaceSlice>,
}

impl CurvesResult {
    pub fn curves_csv_string(&self) -> String {
        let mut out = String::from("series,r,K,value\n");
        let mut put = |name: &str, c: &ErrorCurve, values: &[f64]| {
            for i in 0..c.len() {
                let _ = writeln!(out, "{name},{},{},{}", csv_num(c.radii[i]), c.counts[i], csv_num(values[i]));
            }
        };
        put("true", &self.truth, &self.truth.values);
        for (s, c) in &self.estimates {
            put(&format!("ehat_s{s}"), c, &c.values);
        }
        if !self.envelope_min.is_empty() {
            let base = &self.estimates[0].1;
            put("envelope_min", base, &self.envelope_min);
            put("envelope_max", base, &self.envelope_max);
        }
        out
    }

    pub fn surface_csv_string(&self) -> String {
        let mut out = String::from("p,r,e\n");
        for s in &self.surface {
            for i in 0..s.truth.len() {
                let _ = writeln!(out, "{},{},{}", s.order, csv_num(s.truth.radii[i]), csv_num(s.truth.values[i]));
            }
        }
        out
    }

    pub fn markers_csv_string(&self, dt: f64) -> String {
        let mut out = String::from("p,r_hat_c,e_at_r_hat_c,min_e\n");
        for s in &self.surface {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                s.order,
                csv_num(s.rhat_steps as f64 * dt),
                csv_num(s.truth.value_at_steps(s.rhat_steps).unwrap_or(f64::NAN)),
                csv_num(s.truth.min_value())
            );
        }
        out
    }

    pub fn envelope_rhat_csv_string(&self, dt: f64) -> String {
        let mut out = String::from("trial,r_hat_c,e_at_r_hat_c\n");
        for (t, &s) in self.envelope_rhat.iter().enumerate() {
            let e = self.truth.value_at_steps(s).unwrap_or(f64::NAN);
            let _ = writeln!(out, "{t},{},{}", csv_num(s as f64 * dt), csv_num(e));
        }
        out
    }
}

fn rhat_steps(curve: &ErrorCurve) -> Result<usize> {
    let logs = curve.log_values();
    let flat = logs.iter().all(|&v| (v - logs[0]).abs() <= 1e-9 * logs[0].abs().max(1.0));
    if flat {
        return Ok(curve.steps[0]);
    }
    Ok(curve.steps[crate::changepoint::detect_changepoint(&curve.radii, &logs)?.index])
}

/// True and estimated integration-error curves, the noisy envelope and the
/// `(r, p)` surface. Needs `w*`, so it is a validation tool.
pub fn run_error_curves(system: &OdeSystem, cfg: &ExperimentConfig) -> Result<CurvesResult> {
    cfg.validate()?;
    let clean = simulate_clean(system, cfg.intervals)?;
    let p = cfg.poly_order;
    let truth = true_eint_curve(system, &clean, p)?;
    let estimates = [1usize, 2]
        .iter()
        .map(|&s| Ok((s, ehat_curve(&clean, p, &EulerMaclaurinConfig::new(s)?)?)))
        .collect::<Result<Vec<_>>>()?;
    let envelope_noise = cfg
        .curves
        .envelope_noise
        .unwrap_or_else(|| cfg.noise.iter().copied().fold(0.0, f64::max));
    let n_env = cfg.curves.envelope_trials.unwrap_or(cfg.trials);
    let em = EulerMaclaurinConfig::new(1)?;
    let noisy_curves: Vec<ErrorCurve> = cfg.install(|| {
        (0..n_env)
            .into_par_iter()
            .map(|t| ehat_curve(&add_noise(&clean, &cfg.noise_spec(envelope_noise, t))?, p, &em))
            .collect::<Result<Vec<_>>>()
    })??;
    let len = truth.len();
    let mut envelope_min = Vec::new();
    let mut envelope_max = Vec::new();
    if !noisy_curves.is_empty() {
        envelope_min = (0..len)
            .map(|i| noisy_curves.iter().map(|c| c.values[i]).fold(f64::INFINITY, f64::min))
            .collect();
        envelope_max = (0..len)
            .map(|i| noisy_curves.iter().map(|c| c.values[i]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
    }
    let envelope_rhat = noisy_curves.iter().map(rhat_steps).collect::<Result<Vec<_>>>()?;
    let surface = cfg
        .curves
        .orders
        .iter()
        .map(|&q| {
            Ok(SurfaceSlice {
                order: q,
                truth: true_eint_curve(system, &clean, q)?,
                rhat_steps: rhat_steps(&ehat_curve(&clean, q, &em)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    info!("error curves for {} computed over {} radii", system.name(), len);
    Ok(CurvesResult {
        system: system.name().to_string(),
        truth,
        estimates,
        envelope_noise,
        envelope_min,
        envelope_max,
        envelope_rhat,
        surface,
    })
}

// --------------------------------------------------------------- output ----

/// Writes files under an output directory, creating it on first use.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_failures(&self, name: &str, system: &str, failures: &[Failure]) -> Result<Option<PathBuf>> {
        if failures.is_empty() {
            return Ok(None);
        }
        let mut out = String::from("system,method,noise,r,trial,error\n");
        for f in failures {
            let msg = f.message.replace(['\n', ','], ";");
            let _ = writeln!(out, "{system},{},{},{},{},{msg}", f.method, f.noise, csv_num(f.radius), f.trial);
        }
        self.write(name, &out).map(Some)
    }

    /// Run metadata, including the wall-clock timestamps kept out of the
    /// reproducible outputs.
    pub fn write_metadata(&self, command: &str, cfg: &ExperimentConfig, started: SystemTime) -> Result<PathBuf> {
        let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let finished = SystemTime::now();
        let value = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "started_unix": secs(started),
            "finished_unix": secs(finished),
            "config": cfg,
        });
        let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Config(e.to_string()))?;
        self.write(&format!("{command}_metadata.json"), &text)
    }
}
