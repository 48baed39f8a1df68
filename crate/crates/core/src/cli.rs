//! The `fracsde` command-line runner.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime failure,
//! 3 result outside its acceptance band.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::assumptions::{audit_assumptions, default_audit_grid};
use crate::config::{parse_config, ConfigErrors, RunConfig};
use crate::convergence::{run_strong_error, ConvergenceReport, Target};
use crate::error::Error;
use crate::fbm::{sampler, FbmMethod, Hurst, TimeGrid};
use crate::moments::{moment_sweep, MomentProbe, STABILITY_TOL};
use crate::output::{write_json, CsvTable, Provenance};
use crate::rng::SeedProvenance;
use crate::solver::{integrate, power_path, SchemeConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_BAND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fracsde", version, about = "Drift-implicit Euler simulation of fBM-driven SDEs")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Also write per-path errors.
    #[arg(long, global = true)]
    pub keep_paths: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample fBM paths to CSV.
    Fbm(FbmArgs),
    /// Integrate a model along sampled fBM paths.
    Simulate(SimulateArgs),
    /// Run a strong-convergence experiment.
    Converge(ConvergeArgs),
    /// Estimate inverse and positive moments across step counts.
    Moments(MomentsArgs),
    /// Audit the drift assumptions of the configured model.
    VerifyAssumptions(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct FbmArgs {
    #[arg(long)]
    pub hurst: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    #[arg(long)]
    pub method: Option<FbmMethod>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    /// Experiment configuration; same format as --config.
    #[arg(long)]
    pub plan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    /// Nested step counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub steps: Vec<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Random point pairs for the one-sided Lipschitz check.
    #[arg(long, default_value_t = 2000)]
    pub pairs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
    Band(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Runtime(_) => EXIT_RUNTIME,
            Failure::Band(_) => EXIT_BAND,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) | Failure::Band(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Parameter(_) | Error::Usage(_) | Error::Config(_) => {
                Failure::Validation(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<ConfigErrors> for Failure {
    fn from(e: ConfigErrors) -> Self {
        Failure::Validation(e.to_string())
    }
}

pub type Outcome = std::result::Result<(), Failure>;

/// Parse `args` and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Fbm(a) => run_fbm(cli, a),
        Command::Simulate(a) => run_simulate(cli, a),
        Command::Converge(a) => run_converge(cli, a),
        Command::Moments(a) => run_moments(cli, a),
        Command::VerifyAssumptions(a) => run_verify(cli, a),
    }
}

fn load_config(path: Option<&Path>) -> std::result::Result<Option<RunConfig>, Failure> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
    Ok(Some(parse_config(&text)?))
}

/// Load the configuration `command` needs and apply the global overrides.
fn resolved(cli: &Cli, path: Option<&Path>, command: &str) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = load_config(path.or(cli.config.as_deref()))?
        .ok_or_else(|| Failure::Validation(format!("`{command}` needs --config")))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.io.out_dir = Some(dir.display().to_string());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(cfg.io.out_dir.as_deref().unwrap_or("."))
}

fn out_file(cfg: &RunConfig, flag: Option<&Path>, default_name: &str) -> PathBuf {
    match (flag, cfg.io.out.as_deref()) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => out_dir(cfg).join(default_name),
    }
}

fn provenance(cfg: &RunConfig) -> Provenance {
    Provenance { seed: cfg.seed, config_digest: cfg.digest() }
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn run_fbm(cli: &Cli, a: &FbmArgs) -> Outcome {
    let cfg = load_config(cli.config.as_deref())?;
    let model_hurst = cfg.as_ref().and_then(|c| c.model.as_ref()).map(|m| m.hurst);
    let hurst = a.hurst.or(model_hurst).ok_or_else(|| Failure::Validation("--hurst is required".into()))?;
    let hurst = Hurst::new(hurst)?;
    let scheme = cfg.as_ref().map(|c| c.scheme.clone()).unwrap_or_default();
    let steps = a.steps.or(scheme.steps).ok_or_else(|| Failure::Validation("--steps is required".into()))?;
    let horizon = a.horizon.unwrap_or(scheme.horizon);
    let method = a.method.unwrap_or(scheme.noise);
    let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    if a.paths == 0 {
        return Err(Failure::Validation("--paths must be at least 1".into()));
    }
    let grid = TimeGrid::new(horizon, steps)?;
    let settings = json!({
        "command": "fbm", "hurst": hurst.value(), "steps": steps, "horizon": horizon,
        "paths": a.paths, "method": method, "seed": seed,
    });
    let digest = hex::encode(Sha256::digest(settings.to_string().as_bytes()))[..16].to_string();
    let prov = Provenance { seed, config_digest: digest };
    let out = match (&a.out, &cli.out_dir, cfg.as_ref()) {
        (Some(p), _, _) => p.clone(),
        (None, Some(d), _) => d.join("fbm.csv"),
        (None, None, Some(c)) => out_file(c, None, "fbm.csv"),
        (None, None, None) => PathBuf::from("fbm.csv"),
    };

    let sampler = sampler(method, hurst, grid).map_err(runtime)?;
    let paths: Vec<_> =
        (0..a.paths).into_par_iter().map(|i| sampler.sample(SeedProvenance::new(seed, i as u64))).collect();
    let mut table = CsvTable::new(&prov, &["path_index", "node_index", "time", "value"]);
    for (i, p) in paths.iter().enumerate() {
        for (n, &v) in p.values().iter().enumerate() {
            table.row(&[i.into(), n.into(), grid.time(n).into(), v.into()]);
        }
    }
    table.write(&out).map_err(runtime)?;
    println!("wrote {} path(s) of {} steps to {}", a.paths, steps, out.display());
    Ok(())
}

struct Simulated {
    x: Vec<f64>,
    y: Vec<f64>,
    residuals: Vec<f64>,
    iterations: Vec<u32>,
}

fn run_simulate(cli: &Cli, a: &SimulateArgs) -> Outcome {
    let mut cfg = resolved(cli, None, "simulate")?;
    if let Some(s) = a.steps {
        cfg.scheme.steps = Some(s);
    }
    if let Some(p) = a.paths {
        if p == 0 {
            return Err(Failure::Validation("--paths must be at least 1".into()));
        }
        cfg.scheme.paths = p;
    }
    cfg.require_for("simulate")?;
    let model = cfg.model_spec()?;
    let grid = TimeGrid::new(cfg.scheme.horizon, cfg.scheme.steps.unwrap_or_default())?;
    let scheme = SchemeConfig::for_model(model, grid).with_root(cfg.scheme.root());
    scheme.validate(Some(model.certificate()))?;
    let prov = provenance(&cfg);
    let out = out_file(&cfg, a.out.as_deref(), "simulate.csv");

    let sampler = sampler(cfg.scheme.noise, model.hurst(), grid).map_err(runtime)?;
    let l = model.inverse_exponent();
    let seed = cfg.seed;
    let runs: Vec<Simulated> = (0..cfg.scheme.paths)
        .into_par_iter()
        .map(|i| {
            let noise = sampler.sample(SeedProvenance::new(seed, i as u64)).increments();
            let run = || -> crate::Result<Simulated> {
                let sol = integrate(model.drift(), &scheme, &noise)?;
                Ok(Simulated {
                    y: power_path(&sol, l)?,
                    x: sol.values().to_vec(),
                    residuals: sol.residuals().to_vec(),
                    iterations: sol.iterations().to_vec(),
                })
            };
            run().map_err(|e| Failure::Runtime(format!("path {i}: {e}")))
        })
        .collect::<std::result::Result<_, Failure>>()?;
    let mut table =
        CsvTable::new(&prov, &["path_index", "node_index", "time", "x_value", "y_value", "residual", "iterations"]);
    for (i, r) in runs.iter().enumerate() {
        for n in 0..r.x.len() {
            let (res, it) = if n == 0 { (0.0, 0) } else { (r.residuals[n - 1], r.iterations[n - 1]) };
            table.row(&[i.into(), n.into(), grid.time(n).into(), r.x[n].into(), r.y[n].into(), res.into(), it.into()]);
        }
    }
    table.write(&out).map_err(runtime)?;
    println!("wrote {} path(s) of {} steps to {}", runs.len(), grid.steps(), out.display());
    Ok(())
}

fn run_converge(cli: &Cli, a: &ConvergeArgs) -> Outcome {
    let cfg = resolved(cli, a.plan.as_deref(), "converge")?;
    cfg.require_for("converge")?;
    let plan = cfg.experiment_plan()?;
    plan.validate()?;
    let prov = provenance(&cfg);
    let dir = out_dir(&cfg);
    let report = run_strong_error(&plan)?;

    let mut levels = CsvTable::new(
        &prov,
        &["level", "steps", "h", "e_mean", "e_stderr", "e_nodes_mean", "e_nodes_stderr", "x_mean", "x_stderr"],
    );
    for l in &report.levels {
        levels.row(&[
            l.level.into(),
            l.steps.into(),
            l.h.into(),
            l.y.mean.into(),
            l.y.stderr.into(),
            l.y_nodes.mean.into(),
            l.y_nodes.stderr.into(),
            l.x.mean.into(),
            l.x.stderr.into(),
        ]);
    }
    levels.write(&dir.join("levels.csv")).map_err(runtime)?;
    write_json(&dir.join("report.json"), &prov, &report).map_err(runtime)?;
    if cli.keep_paths {
        let mut errs =
            CsvTable::new(&prov, &["path_index", "level", "h", "sup_x", "sup_x_nodes", "sup_y", "sup_y_nodes"]);
        for s in &report.samples {
            errs.row(&[
                s.path_index.into(),
                s.level.into(),
                s.h.into(),
                s.sup_x.into(),
                s.sup_x_nodes.into(),
                s.sup_y.into(),
                s.sup_y_nodes.into(),
            ]);
        }
        errs.write(&dir.join("errors.csv")).map_err(runtime)?;
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match report.corrected_slope() {
        Some(s) => println!(
            "{}: corrected slope {s:.4}, target {:.4} {}, pass={}",
            report.model,
            report.target.rate,
            band_text(&report.target),
            report.pass
        ),
        None => println!("{}: no fit (incomplete run)", report.model),
    }
    converge_verdict(&report)
}

fn band_text(t: &Target) -> String {
    match t.upper {
        Some(u) => format!("[{:.4}, {u:.4}]", t.lower),
        None => format!(">= {:.4}", t.lower),
    }
}

/// Exit classification of a finished experiment.
pub fn converge_verdict(report: &ConvergenceReport) -> Outcome {
    if !report.complete {
        let first = report.failures.first().map_or(String::new(), |f| format!("; first: {}", f.message));
        return Err(Failure::Runtime(format!("{} path failure(s), run incomplete{first}", report.failures.len())));
    }
    if report.pass {
        Ok(())
    } else {
        let slope = report.corrected_slope().unwrap_or(f64::NAN);
        Err(Failure::Band(format!("slope {slope:.4} outside {}", band_text(&report.target))))
    }
}

#[derive(Serialize)]
struct MomentChange {
    from_steps: usize,
    to_steps: usize,
    order: f64,
    relative_change: f64,
}

#[derive(Serialize)]
struct MomentsReport<'a> {
    probes: &'a [MomentProbe],
    changes: Vec<MomentChange>,
    tolerance: f64,
    stable: bool,
}

fn run_moments(cli: &Cli, a: &MomentsArgs) -> Outcome {
    let mut cfg = resolved(cli, None, "moments")?;
    if let Some(e) = cfg.experiment.as_mut() {
        if !a.steps.is_empty() {
            e.probe_steps = a.steps.clone();
        }
        if let Some(p) = a.paths {
            e.paths = p;
        }
    }
    cfg.require_for("moments")?;
    let model = cfg.model_spec()?;
    let settings = cfg.probe_settings()?;
    let steps = cfg.experiment()?.probe_steps.clone();
    let prov = provenance(&cfg);
    let dir = out_dir(&cfg);
    let probes = moment_sweep(model, &steps, &settings)?;

    let mut changes = Vec::new();
    for w in probes.windows(2) {
        for (order, rc) in w[0].negative_relative_change(&w[1]) {
            changes.push(MomentChange { from_steps: w[0].steps, to_steps: w[1].steps, order, relative_change: rc });
        }
    }
    let stable = changes.iter().all(|c| c.relative_change <= STABILITY_TOL);
    let mut modulus = CsvTable::new(&prov, &["steps", "lag", "h", "mean_ratio", "max_ratio"]);
    for p in &probes {
        for r in &p.modulus {
            modulus.row(&[p.steps.into(), r.lag.into(), r.h.into(), r.mean_ratio.into(), r.max_ratio.into()]);
        }
    }
    modulus.write(&dir.join("modulus.csv")).map_err(runtime)?;
    let report = MomentsReport { probes: &probes, changes, tolerance: STABILITY_TOL, stable };
    write_json(&dir.join("moments.json"), &prov, &report).map_err(runtime)?;
    for c in &report.changes {
        println!(
            "E sup X^-{}: N={} -> N={} relative change {:.4}",
            c.order, c.from_steps, c.to_steps, c.relative_change
        );
    }
    if stable {
        Ok(())
    } else {
        Err(Failure::Band(format!("inverse moments changed by more than {STABILITY_TOL}")))
    }
}

fn run_verify(cli: &Cli, a: &VerifyArgs) -> Outcome {
    let cfg = resolved(cli, None, "verify-assumptions")?;
    cfg.require_for("verify-assumptions")?;
    let model = cfg.model_spec()?;
    let report =
        audit_assumptions(model.drift(), model.certificate(), &default_audit_grid(), a.pairs, Some(model.hurst()));
    print!("{report}");
    let c = model.certificate();
    println!("K = {}, alpha = {}, regime = {:?}, max step = {}", c.k, c.alpha, model.regime(), c.max_step());
    if let Some(out) = &a.out {
        let body = json!({ "certificate": c, "audit": &report, "passed": report.passed() });
        write_json(out, &provenance(&cfg), &body).map_err(runtime)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Validation("assumption audit failed".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convergence::ExperimentPlan;
    use crate::{Hurst, ModelSpec};

    #[test]
    fn verdict_classes() {
        let model = ModelSpec::mean_reverting(1.0, 1.0, 0.7, 0.5, 1.0, Hurst::new(0.7).unwrap()).unwrap();
        let mut report = run_strong_error(&ExperimentPlan::new(model, 3, 5, 8, 8, 1)).unwrap();
        report.pass = true;
        assert!(converge_verdict(&report).is_ok());
        report.pass = false;
        assert_eq!(converge_verdict(&report).unwrap_err().code(), EXIT_BAND);
        report.complete = false;
        assert_eq!(converge_verdict(&report).unwrap_err().code(), EXIT_RUNTIME);
    }

    #[test]
    fn error_classes() {
        assert_eq!(Failure::from(Error::Parameter("x".into())).code(), EXIT_VALIDATION);
        assert_eq!(Failure::from(Error::NoConvergence { iterations: 1, residual: 1.0 }).code(), EXIT_RUNTIME);
        assert_eq!(main_with_args(["fracsde", "--bogus"]), EXIT_VALIDATION);
    }
}
