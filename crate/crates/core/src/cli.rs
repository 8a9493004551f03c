//! Run configuration and orchestration behind the `stillwater` binary.
//!
//! A run is described by one TOML file:
//!
//! ```toml
//! [grid]
//! periods = [0.3, 0.3]
//! n = [128, 128]
//!
//! [dimensional]          # or [nondimensional] with a, g
//! alpha = 0.65
//! g = 0.5
//! mu = 0.3
//! sigma = 1.1
//! h = 1.0
//!
//! [bathymetry]
//! kind = "half_ellipse"
//! center = [0.15, 0.15]
//! semi_axes = [0.075, 0.045]
//! amplitude = 2.0
//! invert = true
//!
//! [forcing]
//! kind = "gravity"
//! direction = [1.0, 0.0]
//!
//! [schedule]
//! kappa_hat = { stop = 20000.0, steps = 40 }
//! ```
//!
//! The output directory and the worker count may be overridden by
//! `STILLWATER_OUT` and `STILLWATER_JOBS`, and both by command-line flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::diagnostics::{self, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::io::{self, BranchRow, FieldFile};
use crate::model::{self, BathymetrySpec, DimensionalParams, ForcingSpec, Params, Scaling};
use crate::operators::{invert_principal, Problem, RhsPair, State};
use crate::solver::{
    self, blowup_monitor, ContinuationSettings, Schedule, SolveSettings, Termination, Thresholds,
};
use crate::spectral::{self, Grid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Exit status for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::NoConvergence { .. } => EXIT_NO_CONVERGENCE,
        _ => EXIT_OTHER,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solve,
    Continue,
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Newton,
    Picard,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Nondimensional periods `(L1, L2)`.
    pub periods: [f64; 2],
    pub n: [usize; 2],
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NondimensionalConfig {
    pub a: f64,
    pub g: f64,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    #[default]
    None,
    /// Gravity along the unit vector `direction`.
    Gravity { direction: [f64; 2] },
    /// Constant body force.
    Constant { value: [f64; 2] },
}

impl ForcingConfig {
    pub fn spec(&self) -> Result<ForcingSpec> {
        match self {
            ForcingConfig::None => Ok(ForcingSpec::default()),
            ForcingConfig::Gravity { direction } => {
                let norm = direction[0].hypot(direction[1]);
                if !((norm - 1.0).abs() <= 1e-12) {
                    return Err(Error::Config(format!(
                        "forcing.direction must be a unit vector, |{direction:?}| = {norm}"
                    )));
                }
                Ok(ForcingSpec::gravity(*direction))
            }
            ForcingConfig::Constant { value } => {
                if value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("forcing.value must be finite".into()));
                }
                Ok(ForcingSpec::constant(*value))
            }
        }
    }
}

/// Overrides of the solver defaults; absent keys keep the default.
#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Option<Method>,
    pub tol_nonlinear: Option<f64>,
    pub max_picard: Option<usize>,
    pub max_newton: Option<usize>,
    pub fd_epsilon: Option<f64>,
    pub max_backtracks: Option<usize>,
    pub tol_linear: Option<f64>,
    pub restart: Option<usize>,
    pub max_krylov: Option<usize>,
    pub max_halvings: Option<usize>,
}

impl SolverConfig {
    pub fn settings(&self) -> SolveSettings {
        let d = SolveSettings::default();
        SolveSettings {
            tol_nonlinear: self.tol_nonlinear.unwrap_or(d.tol_nonlinear),
            max_picard: self.max_picard.unwrap_or(d.max_picard),
            max_newton: self.max_newton.unwrap_or(d.max_newton),
            fd_epsilon: self.fd_epsilon.unwrap_or(d.fd_epsilon),
            max_backtracks: self.max_backtracks.unwrap_or(d.max_backtracks),
            linear: crate::operators::LinearSettings {
                tol: self.tol_linear.unwrap_or(d.linear.tol),
                restart: self.restart.unwrap_or(d.linear.restart),
                max_iter: self.max_krylov.unwrap_or(d.linear.max_iter),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub eta_max: Option<f64>,
    pub depth_min: Option<f64>,
    pub kappa_max: Option<f64>,
}

/// A list of values or `steps` equal increments from `start` to `stop`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Values {
    List(Vec<f64>),
    Range {
        #[serde(default)]
        start: f64,
        stop: f64,
        steps: usize,
    },
}

impl Values {
    pub fn expand(&self) -> Result<Vec<f64>> {
        match self {
            Values::List(v) => Ok(v.clone()),
            Values::Range { start, stop, steps } => {
                if *steps == 0 {
                    return Err(Error::Config("schedule range needs steps >= 1".into()));
                }
                let n = *steps as f64;
                Ok((0..=*steps)
                    .map(|i| start + (stop - start) * i as f64 / n)
                    .collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Natural,
    Arclength,
}

/// Forcing strengths, nondimensional (`kappa`, `target`) or in acceleration
/// units (`kappa_hat`, `target_hat`, which need a `[dimensional]` block).
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub kind: ScheduleKind,
    pub kappa: Option<Values>,
    pub kappa_hat: Option<Values>,
    pub target: Option<f64>,
    pub target_hat: Option<f64>,
    pub ds: Option<f64>,
    pub ds_max: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub grid: GridConfig,
    pub dimensional: Option<DimensionalParams>,
    pub nondimensional: Option<NondimensionalConfig>,
    pub bathymetry: Option<BathymetrySpec>,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub emit: Vec<String>,
}

pub const DERIVED_FIELDS: [&str; 2] = ["div_u", "curl_u"];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Command-line and environment overrides.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub emit: Option<Vec<String>>,
}

impl Overrides {
    /// Fills `out` and `jobs` from `STILLWATER_OUT` and `STILLWATER_JOBS`
    /// where not already set.
    pub fn with_env(mut self) -> Result<Self> {
        if self.out.is_none() {
            self.out = std::env::var_os("STILLWATER_OUT").map(PathBuf::from);
        }
        if self.jobs.is_none() {
            if let Ok(v) = std::env::var("STILLWATER_JOBS") {
                let jobs = v
                    .parse()
                    .map_err(|_| Error::Config(format!("STILLWATER_JOBS = {v:?} is not a count")))?;
                self.jobs = Some(jobs);
            }
        }
        Ok(self)
    }
}

/// Validated run, ready to execute.
pub struct Setup {
    pub mode: Mode,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub emit: Vec<String>,
    pub method: Method,
    pub problem: Problem,
    pub scaling: Option<Scaling>,
    pub schedule: Schedule,
    /// Explicit list for solve and verify modes.
    pub kappas: Vec<f64>,
    pub continuation: ContinuationSettings,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl Setup {
    pub fn new(cfg: &RunConfig, overrides: &Overrides) -> Result<Self> {
        Self::build(cfg, overrides).map_err(config_err)
    }

    fn build(cfg: &RunConfig, ov: &Overrides) -> Result<Self> {
        let mode = match (ov.mode, cfg.mode) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!(
                    "mode conflict: command requests {a:?} but the file sets mode = {b:?}"
                )))
            }
            (Some(m), _) | (None, Some(m)) => m,
            (None, None) => return Err(Error::Config("no mode given".into())),
        };
        let (params, scaling) = match (&cfg.dimensional, &cfg.nondimensional) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "parameter conflict: give exactly one of [dimensional] and [nondimensional], not both"
                        .into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "missing parameters: give one of [dimensional] and [nondimensional]".into(),
                ))
            }
            (Some(d), None) => {
                let s = model::nondimensionalize(d)?;
                (s.params, Some(s))
            }
            (None, Some(nd)) => (Params::new(nd.a, nd.g)?, None),
        };
        params.validate()?;
        let grid = Grid::new(cfg.grid.periods, cfg.grid.n)?;
        let bathymetry = cfg.bathymetry.clone().unwrap_or(BathymetrySpec::Flat);
        let beta = model::make_bathymetry(&bathymetry, &grid)?;
        let forcing = cfg.forcing.spec()?;
        let problem = Problem::new(params, beta, forcing)?;

        let solve = cfg.solver.settings();
        solve.validate()?;
        let d = Thresholds::default();
        let thresholds = Thresholds {
            eta_max: cfg.thresholds.eta_max.unwrap_or(d.eta_max),
            depth_min: cfg.thresholds.depth_min.unwrap_or(d.depth_min),
            kappa_max: cfg.thresholds.kappa_max.unwrap_or(d.kappa_max),
        };
        let continuation = ContinuationSettings {
            solve,
            thresholds,
            max_halvings: cfg
                .solver
                .max_halvings
                .unwrap_or(ContinuationSettings::default().max_halvings),
        };

        let to_kappa = |v: f64| -> Result<f64> {
            match &scaling {
                Some(s) => Ok(s.kappa(v)),
                None => Err(Error::Config(
                    "kappa_hat and target_hat need a [dimensional] block".into(),
                )),
            }
        };
        let sc = &cfg.schedule;
        let kappas = match (&sc.kappa, &sc.kappa_hat) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "schedule conflict: give kappa or kappa_hat, not both".into(),
                ))
            }
            (Some(v), None) => v.expand()?,
            (None, Some(v)) => v.expand()?.into_iter().map(to_kappa).collect::<Result<_>>()?,
            (None, None) => Vec::new(),
        };
        if kappas.iter().any(|k| !k.is_finite()) {
            return Err(Error::Config("schedule values must be finite".into()));
        }
        let target = match (sc.target, sc.target_hat) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "schedule conflict: give target or target_hat, not both".into(),
                ))
            }
            (Some(t), None) => Some(t),
            (None, Some(t)) => Some(to_kappa(t)?),
            (None, None) => None,
        };
        let schedule = match sc.kind {
            ScheduleKind::Natural => {
                let mut list = kappas.clone();
                if list.is_empty() && mode != Mode::Verify {
                    return Err(Error::Config("schedule is empty".into()));
                }
                if list.first() != Some(&0.0) {
                    list.insert(0, 0.0);
                }
                Schedule::Natural(list)
            }
            ScheduleKind::Arclength => {
                let target = target
                    .or_else(|| kappas.last().copied())
                    .ok_or_else(|| Error::Config("arclength schedule needs a target".into()))?;
                let ds = sc.ds.unwrap_or(0.1 * target.abs().clamp(1e-3, 1.0));
                let ds_max = sc.ds_max.unwrap_or(10.0 * ds);
                if !(ds > 0.0 && ds_max >= ds && target.is_finite()) {
                    return Err(Error::Config(
                        "arclength schedule needs 0 < ds <= ds_max and a finite target".into(),
                    ));
                }
                Schedule::Arclength {
                    target,
                    ds,
                    ds_max,
                    max_steps: sc.max_steps.unwrap_or(200),
                }
            }
        };
        if mode == Mode::Solve && kappas.is_empty() {
            return Err(Error::Config("solve mode needs schedule.kappa or schedule.kappa_hat".into()));
        }

        let emit = ov.emit.clone().unwrap_or_else(|| cfg.emit.clone());
        if let Some(bad) = emit.iter().find(|e| !DERIVED_FIELDS.contains(&e.as_str())) {
            return Err(Error::Config(format!(
                "unknown derived field {bad:?}; expected one of {DERIVED_FIELDS:?}"
            )));
        }
        let jobs = ov.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        let out = ov
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .unwrap_or_else(|| PathBuf::from("stillwater-out"));
        Ok(Self {
            mode,
            seed: cfg.seed,
            out,
            jobs,
            emit,
            method: cfg.solver.method.unwrap_or_default(),
            problem,
            scaling,
            schedule,
            kappas,
            continuation,
        })
    }
}

/// Result of a run that completed; `status` is the process exit status.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub status: i32,
    pub summary: String,
}

/// SWF1 contents for a state: `eta, beta, u1, u2` and the requested derived
/// fields.
pub fn state_file(problem: &Problem, s: &State, emit: &[String]) -> FieldFile {
    let mut f = FieldFile::new(problem.grid());
    f.push("eta", &s.eta);
    f.push("beta", problem.beta());
    f.push("u1", &s.u.c[0]);
    f.push("u2", &s.u.c[1]);
    for name in emit {
        match name.as_str() {
            "div_u" => f.push("div_u", &spectral::divergence(&s.u)),
            "curl_u" => f.push("curl_u", &spectral::curl(&s.u)),
            _ => {}
        }
    }
    f
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn run(cfg: &RunConfig, overrides: &Overrides) -> Result<Outcome> {
    let setup = Setup::new(cfg, overrides)?;
    fs::create_dir_all(&setup.out)?;
    match setup.mode {
        Mode::Solve => run_solve(&setup),
        Mode::Continue => run_continue(&setup),
        Mode::Verify => run_verify(&setup),
    }
}

fn solve_one(setup: &Setup, kappa: f64) -> Result<solver::Solution> {
    let init = State::zeros(setup.problem.grid());
    let settings = &setup.continuation.solve;
    match setup.method {
        Method::Newton => solver::newton_solve(&setup.problem, kappa, &init, settings),
        Method::Picard => solver::picard_solve(&setup.problem, kappa, &init, settings),
    }
}

fn run_solve(setup: &Setup) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(setup.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<solver::Solution>> =
        pool.install(|| setup.kappas.par_iter().map(|&k| solve_one(setup, k)).collect());
    let single = setup.kappas.len() == 1;
    let mut entries = Vec::new();
    let mut summary = String::new();
    let mut first_error = None;
    for (i, (kappa, res)) in setup.kappas.iter().zip(results).enumerate() {
        let name = if single {
            "state.swf1".to_string()
        } else {
            format!("state_{i:03}.swf1")
        };
        match res {
            Ok(sol) => {
                let report = diagnostics::report(&setup.problem, &sol.state, sol.kappa)?;
                io::write_swf1(setup.out.join(&name), &state_file(&setup.problem, &sol.state, &setup.emit))?;
                let _ = writeln!(
                    summary,
                    "kappa {kappa:.6e}: converged in {} iterations, residual {:.3e}, eta_max {:.4e} -> {name}",
                    sol.iterations,
                    sol.residual,
                    sol.state.eta.max_abs()
                );
                entries.push(json!({
                    "kappa": kappa,
                    "file": name,
                    "iterations": sol.iterations,
                    "residual": sol.residual,
                    "fixed_point_residual": sol.fixed_point_residual,
                    "blowup": blowup_monitor(&sol.state, setup.problem.beta(), sol.kappa),
                    "diagnostics": report,
                }));
            }
            Err(e) => {
                let _ = writeln!(summary, "kappa {kappa:.6e}: {e}");
                entries.push(json!({ "kappa": kappa, "error": e.to_string() }));
                first_error.get_or_insert(e);
            }
        }
    }
    write_json(
        &setup.out.join("report.json"),
        &json!({
            "mode": "solve",
            "params": setup.problem.params,
            "scaling": setup.scaling,
            "method": setup.method,
            "solutions": entries,
        }),
    )?;
    let status = first_error.as_ref().map_or(EXIT_OK, exit_code);
    Ok(Outcome { status, summary })
}

fn branch_row(point: &solver::BranchPoint, report: &DiagnosticsReport) -> BranchRow {
    BranchRow {
        kappa: point.kappa,
        eta_max: point.blowup.eta_max,
        depth_min: point.blowup.depth_min(),
        residual: point.residual,
        power_relerr: report.power.relerr,
        h1_u: report.norms.u_h1,
        h2_eta: report.norms.eta_h2,
    }
}

fn run_continue(setup: &Setup) -> Result<Outcome> {
    let branch = solver::continue_branch(&setup.problem, &setup.schedule, &setup.continuation)?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (i, p) in branch.points.iter().enumerate() {
        let report = diagnostics::report(&setup.problem, &p.state, p.kappa)?;
        let name = format!("point_{i:04}.swf1");
        io::write_swf1(setup.out.join(&name), &state_file(&setup.problem, &p.state, &setup.emit))?;
        rows.push(branch_row(p, &report));
        points.push(json!({
            "kappa": p.kappa,
            "file": name,
            "newton_iterations": p.newton_iterations,
            "step": p.step,
            "fixed_point_residual": p.fixed_point_residual,
            "diagnostics": report,
        }));
    }
    io::write_branch_csv(setup.out.join("branch.csv"), &rows)?;
    write_json(
        &setup.out.join("report.json"),
        &json!({
            "mode": "continue",
            "params": setup.problem.params,
            "scaling": setup.scaling,
            "termination": branch.termination,
            "detail": branch.detail,
            "points": points,
        }),
    )?;
    let last = rows.last().map_or(0.0, |r| r.kappa);
    let summary = format!(
        "{} points, last kappa {last:.6e}, termination {} ({})\n",
        rows.len(),
        branch.termination.as_str(),
        branch.detail
    );
    let status = if branch.termination == Termination::StepFailure {
        EXIT_NO_CONVERGENCE
    } else {
        EXIT_OK
    };
    Ok(Outcome { status, summary })
}

/// One line of the invariant suite.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
    pub note: String,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
            note: String::new(),
        }
    }

    fn failed(name: impl Into<String>, note: String) -> Self {
        Self {
            name: name.into(),
            value: f64::NAN,
            limit: f64::NAN,
            passed: false,
            note,
        }
    }

    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        if self.value.is_nan() {
            format!("{tag} {}: {}", self.name, self.note)
        } else {
            format!("{tag} {}: {:.3e} <= {:.3e}", self.name, self.value, self.limit)
        }
    }
}

/// Worst of a family of `(value, limit)` pairs by the ratio `value / limit`.
fn worst(name: &str, values: impl IntoIterator<Item = Result<(f64, f64)>>) -> Check {
    let mut out = Check::new(name, 0.0, 0.0);
    let mut ratio = f64::NEG_INFINITY;
    for v in values {
        let (value, limit) = match v {
            Ok(pair) => pair,
            Err(e) => return Check::failed(name, e.to_string()),
        };
        let r = if value <= limit {
            if limit > 0.0 { value / limit } else { 0.0 }
        } else {
            f64::INFINITY
        };
        if r > ratio {
            ratio = r;
            out = Check::new(name, value, limit);
        }
    }
    out
}

/// The invariant suite on the configured problem.
pub fn verify_suite(setup: &Setup) -> Vec<Check> {
    let problem = &setup.problem;
    let grid = problem.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut checks = Vec::new();

    let pairs: Vec<RhsPair> = (0..20).map(|_| RhsPair::random(grid, &mut rng)).collect();
    checks.push(worst(
        "principal inverse round trip",
        pairs.iter().map(|r| {
            let x = invert_principal(r, &problem.params)?;
            Ok((problem.principal(&x).sub(r).norm(), 1e-11 * r.norm()))
        }),
    ));

    let states: Vec<State> = (0..10)
        .map(|_| State::random(grid, &mut rng, 0.2))
        .collect();
    checks.push(worst(
        "decomposition identity",
        states.iter().map(|s| {
            let a = problem.residual(s, 1.0)?;
            let b = problem.residual_direct(s, 1.0)?;
            Ok((a.sub(&b).norm_l2(), 1e-9 * b.norm_l2().max(1e-300)))
        }),
    ));

    checks.push(worst(
        "bathymetric linear solve",
        pairs.iter().take(5).map(|r| {
            let sol = problem.solve_linear(r)?;
            let res = problem.linear_part(&sol.state).sub(r).norm();
            Ok((res, 1e-10 * r.norm()))
        }),
    ));

    let settings = &setup.continuation.solve;
    checks.push(worst(
        "trivial forcing uniqueness",
        (0..3).map(|_| {
            let init = State::random(grid, &mut rng, 1e-2);
            let sol = solver::newton_solve(problem, 0.0, &init, settings)?;
            Ok((sol.state.norm_x(), 1e-10))
        }),
    ));

    let tol = settings.tol_nonlinear;
    match solver::continue_branch(problem, &setup.schedule, &setup.continuation) {
        Ok(branch) => {
            let accepted: Vec<_> = branch.points.iter().filter(|p| p.kappa != 0.0).collect();
            let reports: Result<Vec<DiagnosticsReport>> = accepted
                .iter()
                .map(|p| diagnostics::report(problem, &p.state, p.kappa))
                .collect();
            match reports {
                Ok(reports) => {
                    let pairs = || accepted.iter().zip(&reports);
                    checks.push(worst(
                        "power balance",
                        pairs().map(|(_, r)| Ok((r.power.relerr, 1e-8))),
                    ));
                    checks.push(worst(
                        "continuity residual",
                        pairs().map(|(_, r)| {
                            Ok((r.continuity_residual, 10.0 * tol * (1.0 + r.norms.u_h1)))
                        }),
                    ));
                    checks.push(worst(
                        "mean log flux",
                        pairs().map(|(p, r)| {
                            let u_l2 = spectral::vector_norm_sobolev(&p.state.u, 0);
                            Ok((r.mean_log_flux.abs(), 1e-10 * u_l2))
                        }),
                    ));
                }
                Err(e) => checks.push(Check::failed("identity checks", e.to_string())),
            }
            let mut c = Check::new(
                "branch progress",
                if branch.termination == Termination::StepFailure { 1.0 } else { 0.0 },
                0.0,
            );
            c.note = format!("{} ({})", branch.termination.as_str(), branch.detail);
            checks.push(c);
            for axis in 0..2 {
                let mut worst_sym = Check::new(format!("symmetry along x{}", axis + 1), 0.0, 1e-8);
                let mut applicable = true;
                for p in &accepted {
                    match diagnostics::symmetry_check(&p.state, axis, problem) {
                        Ok(v) if v > worst_sym.value => worst_sym = Check::new(worst_sym.name.clone(), v, 1e-8),
                        Ok(_) => {}
                        Err(Error::PreconditionViolation(_)) => applicable = false,
                        Err(e) => worst_sym = Check::failed(worst_sym.name.clone(), e.to_string()),
                    }
                }
                if applicable && !accepted.is_empty() {
                    checks.push(worst_sym);
                }
            }
            if let Some(p) = accepted.last() {
                let file = state_file(problem, &p.state, &DERIVED_FIELDS.map(String::from));
                let value = match file.to_bytes().and_then(|b| FieldFile::from_bytes(&b)) {
                    Ok(back) if back == file => 0.0,
                    _ => 1.0,
                };
                checks.push(Check::new("field file round trip", value, 0.0));
            }
        }
        Err(e) => checks.push(Check::failed("branch", e.to_string())),
    }
    checks
}

fn run_verify(setup: &Setup) -> Result<Outcome> {
    let checks = verify_suite(setup);
    let mut summary = String::new();
    for c in &checks {
        let _ = writeln!(summary, "{}", c.line());
    }
    let passed = checks.iter().all(|c| c.passed);
    write_json(
        &setup.out.join("verify.json"),
        &json!({ "mode": "verify", "passed": passed, "checks": checks }),
    )?;
    Ok(Outcome {
        status: if passed { EXIT_OK } else { EXIT_VERIFY },
        summary,
    })
}
