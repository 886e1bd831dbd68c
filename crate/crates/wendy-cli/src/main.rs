//! `wendy`: command-line experiment runner.
//!
//! Settings come from an optional TOML file (`--config`), then from flags.
//! Exit status is 0 on success, 1 for bad input or configuration and 2 when
//! a numerical procedure fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};
use log::info;
use wendy::experiment::{
    run_compare, run_error_curves, run_method, run_sweep, select, simulate_clean, Construction, ExperimentConfig,
    Method, OutputDir,
};
use wendy::{add_noise, Error, OdeSystem, Result, Trajectory};

#[derive(Parser, Debug)]
#[command(name = "wendy", version, about = "Weak-form ODE parameter estimation experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed; trial i uses seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Built-in system: logistic-growth, lorenz, fitzhugh-nagumo or duffing.
    #[arg(long, global = true)]
    system: Option<String>,

    /// Number of grid intervals.
    #[arg(long = "M", global = true, value_name = "M")]
    intervals: Option<usize>,

    /// Noise ratios, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    noise: Option<Vec<f64>>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the noise-free trajectory of the configured system.
    Simulate,
    /// Fixed-radius OLS and IRLS fits over a radius sweep.
    SweepRadius,
    /// Pick a test-function basis for one noisy data set.
    Select {
        /// `sl` or `mg`.
        #[arg(long, default_value = "sl")]
        construction: String,
        /// Trajectory CSV to use instead of simulated data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Estimate parameters for one noisy data set.
    Estimate {
        /// One of ols-sl, irls-sl, ols-mg, irls-mg.
        #[arg(long, default_value = "irls-sl")]
        method: Method,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// True and estimated integration-error curves.
    ErrorCurves,
    /// All configured methods across noise levels and resolutions.
    Compare,
}

fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::from_toml_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &g.system {
        cfg.system = Some(name.clone());
        cfg.system_file = None;
    }
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    if let Some(v) = &g.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = g.trials {
        cfg.trials = v;
    }
    if let Some(v) = g.threads {
        cfg.threads = v;
    }
    if let Some(v) = g.intervals {
        cfg.intervals = v;
    }
    if let Some(v) = &g.noise {
        cfg.noise = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The data set `select` and `estimate` work on: a CSV if given, otherwise
/// the simulated trajectory with the first noise level and trial-0 seed.
fn input_data(system: &OdeSystem, cfg: &ExperimentConfig, path: Option<&PathBuf>) -> Result<Trajectory> {
    match path {
        Some(p) => {
            let data = Trajectory::read_csv(p)?;
            if data.dim() != system.dim() {
                return Err(Error::Config(format!(
                    "{} has {} state columns but {} needs {}",
                    p.display(),
                    data.dim(),
                    system.name(),
                    system.dim()
                )));
            }
            Ok(data)
        }
        None => add_noise(&simulate_clean(system, cfg.intervals)?, &cfg.noise_spec(cfg.noise[0], 0)),
    }
}

fn run(cli: Cli) -> Result<()> {
    let started = SystemTime::now();
    let cfg = load_config(&cli.global)?;
    let system = cfg.load_system()?;
    let out = OutputDir::create(&cfg.out_dir)?;
    let name = system.name().to_string();
    let command = match &cli.command {
        Command::Simulate => {
            let clean = simulate_clean(&system, cfg.intervals)?;
            clean.write_csv(out.path(&format!("trajectory_{name}_M{}.csv", cfg.intervals)))?;
            "simulate"
        }
        Command::SweepRadius => {
            let res = run_sweep(&system, &cfg)?;
            out.write(&format!("sweep_{name}.csv"), &res.to_csv_string())?;
            let regressions: Vec<_> = {
                let mut r: Vec<_> = cfg.methods.iter().map(|m| m.regression).collect();
                r.sort();
                r.dedup();
                r
            };
            out.write(&format!("sweep_{name}_summary.csv"), &res.summary_csv_string(&regressions, &cfg.noise))?;
            out.write(&format!("sweep_{name}_rhat.csv"), &res.rhat_csv_string())?;
            out.write_failures(&format!("sweep_{name}_failures.csv"), &name, &res.failures)?;
            "sweep-radius"
        }
        Command::Select { construction, data } => {
            let construction = match construction.to_ascii_lowercase().as_str() {
                "sl" => Construction::Sl,
                "mg" => Construction::Mg,
                other => return Err(Error::Config(format!("unknown construction `{other}`; use sl or mg"))),
            };
            let data = input_data(&system, &cfg, data.as_ref())?;
            let em = cfg.euler_maclaurin.resolve(&data)?;
            let mut sel = select(construction, &data, &cfg, &em)?;
            let curve_name = format!("selection_{name}_{}_curve.csv", sel.summary.method);
            let curve_path = out.write(&curve_name, &sel.curve.to_csv_string())?;
            sel.summary.curve_csv_path = Some(curve_path.display().to_string());
            let json = sel.summary.to_json();
            out.write(&format!("selection_{name}_{}.json", sel.summary.method), &json)?;
            println!("{json}");
            "select"
        }
        Command::Estimate { method, data } => {
            let data = input_data(&system, &cfg, data.as_ref())?;
            let (fit, sel) = run_method(*method, &system, &data, &cfg)?;
            let value = serde_json::json!({
                "system": name,
                "method": method.to_string(),
                "radius": sel.summary.radius,
                "K": sel.summary.num_functions,
                "w_star": system.w_star(),
                "result": fit,
            });
            let json = serde_json::to_string_pretty(&value).map_err(|e| Error::Config(e.to_string()))?;
            out.write(&format!("estimate_{name}_{method}.json"), &json)?;
            println!("{json}");
            "estimate"
        }
        Command::ErrorCurves => {
            let res = run_error_curves(&system, &cfg)?;
            let dt = system.t_end() / cfg.intervals as f64;
            out.write(&format!("curves_{name}.csv"), &res.curves_csv_string())?;
            out.write(&format!("surface_{name}.csv"), &res.surface_csv_string())?;
            out.write(&format!("surface_{name}_markers.csv"), &res.markers_csv_string(dt))?;
            out.write(&format!("curves_{name}_envelope_rhat.csv"), &res.envelope_rhat_csv_string(dt))?;
            "error-curves"
        }
        Command::Compare => {
            let res = run_compare(&system, &cfg)?;
            out.write(&format!("compare_{name}.csv"), &res.to_csv_string())?;
            out.write(&format!("compare_{name}_medians.csv"), &res.medians_csv_string())?;
            out.write_failures(&format!("compare_{name}_failures.csv"), &name, &res.failures)?;
            "compare"
        }
    };
    out.write_metadata(command, &cfg, started)?;
    info!("{command} finished");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
