//! Nonlinear solvers for `x + K(x, kappa) = 0` and continuation in `kappa`.
//!
//! Both solvers accept a point only when two conditions hold:
//! the fixed-point residual `||x + K(x)||_X <= tol max(1, ||x||_X)` in the
//! `H2 x H3` norm, and the equation residual
//! `||Q(x) - kappa (0, F)||_{L2} <= tol (1 + ||kappa F||_{L2})`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::{LinearSettings, Problem, RhsPair, State};
use crate::spectral::{self, dealias, Field};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveSettings {
    pub tol_nonlinear: f64,
    pub max_picard: usize,
    pub max_newton: usize,
    /// Relative directional-difference step.
    pub fd_epsilon: f64,
    pub max_backtracks: usize,
    pub linear: LinearSettings,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            tol_nonlinear: 1e-9,
            max_picard: 200,
            max_newton: 30,
            fd_epsilon: 1e-7,
            max_backtracks: 8,
            linear: LinearSettings::default(),
        }
    }
}

impl SolveSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_nonlinear", self.tol_nonlinear),
            ("fd_epsilon", self.fd_epsilon),
            ("tol_lin", self.linear.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::BadSpec(format!("{name} must be positive")));
            }
        }
        if self.max_picard == 0 || self.max_newton == 0 || self.linear.max_iter == 0 {
            return Err(Error::BadSpec("iteration limits must be at least 1".into()));
        }
        if self.linear.restart == 0 {
            return Err(Error::BadSpec("Krylov restart length must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a nonlinear solve.
#[derive(Clone, Debug)]
pub struct Solution {
    pub state: State,
    pub kappa: f64,
    pub iterations: usize,
    /// Relative fixed-point residual after each iteration.
    pub history: Vec<f64>,
    /// `||x + K(x)||_X / max(1, ||x||_X)` at the returned state.
    pub fixed_point_residual: f64,
    /// `||Q(x) - kappa (0, F)||_{L2}` at the returned state.
    pub residual: f64,
    /// `||kappa F||_{L2}` at the returned state.
    pub forcing_norm: f64,
}

struct Eval {
    r: RhsPair,
    g: State,
    rel_g: f64,
    res: f64,
    forcing: f64,
}

fn evaluate(problem: &Problem, x: &State, kappa: f64) -> Result<Eval> {
    let r = problem.residual(x, kappa)?;
    let g = problem.solve_linear(&r)?.state;
    let rel_g = g.norm_x() / x.norm_x().max(1.0);
    let forcing = if kappa == 0.0 {
        0.0
    } else {
        let f = problem.forcing(&x.eta)?.map_components(dealias);
        kappa.abs() * spectral::vector_norm_sobolev(&f, 0)
    };
    Ok(Eval {
        res: r.norm_l2(),
        r,
        g,
        rel_g,
        forcing,
    })
}

fn accepted(e: &Eval, tol: f64) -> bool {
    e.rel_g <= tol && e.res <= tol * (1.0 + e.forcing)
}

fn finish(x: State, kappa: f64, iterations: usize, history: Vec<f64>, e: &Eval) -> Solution {
    Solution {
        state: x,
        kappa,
        iterations,
        history,
        fixed_point_residual: e.rel_g,
        residual: e.res,
        forcing_norm: e.forcing,
    }
}

fn linear_problem(problem: &Problem, settings: &SolveSettings) -> Problem {
    problem.clone().with_linear(settings.linear)
}

/// Picard iteration `x <- -K(x, kappa)`.
pub fn picard_solve(
    problem: &Problem,
    kappa: f64,
    init: &State,
    settings: &SolveSettings,
) -> Result<Solution> {
    settings.validate()?;
    let problem = linear_problem(problem, settings);
    let mut x = init.band_limited();
    let mut history = Vec::new();
    for it in 0..=settings.max_picard {
        let e = evaluate(&problem, &x, kappa)?;
        history.push(e.rel_g);
        if accepted(&e, settings.tol_nonlinear) {
            return Ok(finish(x, kappa, it, history, &e));
        }
        if !e.rel_g.is_finite() || it == settings.max_picard {
            break;
        }
        // x - G(x) = -K(x)
        x = x.sub(&e.g).band_limited();
    }
    Err(Error::NoConvergence {
        iterations: settings.max_picard,
        history,
    })
}

/// `M(x) = N(x) - kappa (0, F(eta))`.
fn nonlinear_rhs(problem: &Problem, x: &State, kappa: f64) -> Result<RhsPair> {
    problem.nonlinear_rhs(x, kappa)
}

fn l2(s: &State) -> f64 {
    s.norm(0, 0)
}

/// Solves `J d = rhs` with `J = P + L + DM(x)`, the derivative of the
/// residual, using directional differences for `DM`.
fn newton_direction(
    problem: &Problem,
    x: &State,
    m_x: &RhsPair,
    kappa: f64,
    rhs: &RhsPair,
    fd_epsilon: f64,
) -> Result<State> {
    let xnorm = l2(x);
    let jv = |v: &State| -> Result<RhsPair> {
        let vnorm = l2(v);
        let l = problem.remainder(v);
        if vnorm == 0.0 {
            return Ok(l);
        }
        let h = fd_epsilon * (1.0 + xnorm) / vnorm;
        let shifted = nonlinear_rhs(problem, &x.axpby(1.0, v, h), kappa)?;
        Ok(l.add(&shifted.sub(m_x).scale(1.0 / h)))
    };
    let sol = problem.gmres_preconditioned(jv, rhs, true)?;
    // an inexact direction is still useful; the line search guards it
    if sol.relative_residual > 0.5 {
        return Err(Error::LinearSolveFailure {
            iterations: sol.iterations,
            history: vec![sol.relative_residual],
        });
    }
    Ok(sol.state)
}

const POLISH_LINEAR_TOL: f64 = 1e-6;

/// One more Newton correction at fixed `kappa` after acceptance, kept only if
/// it lowers `||G||_X`. The mean of `u . grad log h` is controlled by the
/// divergence residual, so this pushes it toward round-off at the cost of
/// one step.
fn polish(base: &Problem, x: State, kappa: f64, e: Eval, settings: &SolveSettings) -> (State, Eval) {
    let attempt = || -> Result<(State, Eval)> {
        // a modest inner tolerance already gains several digits here
        let loose = base.clone().with_linear(LinearSettings {
            tol: POLISH_LINEAR_TOL.max(settings.linear.tol),
            ..settings.linear
        });
        let m_x = nonlinear_rhs(base, &x, kappa)?;
        let step = newton_direction(&loose, &x, &m_x, kappa, &e.r.scale(-1.0), settings.fd_epsilon)?;
        let trial = x.add(&step).band_limited();
        let te = evaluate(base, &trial, kappa)?;
        Ok((trial, te))
    };
    match attempt() {
        Ok((trial, te)) if te.g.norm_x() < e.g.norm_x() && accepted(&te, settings.tol_nonlinear) => {
            (trial, te)
        }
        _ => (x, e),
    }
}

/// Jacobian-free Newton-Krylov with backtracking on `||G||_X`.
pub fn newton_solve(
    problem: &Problem,
    kappa: f64,
    init: &State,
    settings: &SolveSettings,
) -> Result<Solution> {
    settings.validate()?;
    let base = linear_problem(problem, settings);
    let mut x = init.band_limited();
    let mut e = evaluate(&base, &x, kappa)?;
    let mut history = vec![e.rel_g];
    for it in 0..settings.max_newton {
        if accepted(&e, settings.tol_nonlinear) {
            let (x, e) = polish(&base, x, kappa, e, settings);
            return Ok(finish(x, kappa, it, history, &e));
        }
        // loose inner solves far from the root, tight ones near it
        let inner = (e.rel_g.min(1e-2) * 1e-2).max(settings.linear.tol);
        let inner_problem = base.clone().with_linear(LinearSettings {
            tol: inner,
            ..settings.linear
        });
        let m_x = nonlinear_rhs(&base, &x, kappa)?;
        let step = newton_direction(
            &inner_problem,
            &x,
            &m_x,
            kappa,
            &e.r.scale(-1.0),
            settings.fd_epsilon,
        )?;
        let gnorm = e.g.norm_x();
        let mut lambda = 1.0;
        let mut next = None;
        for _ in 0..=settings.max_backtracks {
            let trial = x.axpby(1.0, &step, lambda).band_limited();
            if let Ok(te) = evaluate(&base, &trial, kappa) {
                if te.g.norm_x() < (1.0 - 1e-4 * lambda) * gnorm {
                    next = Some((trial, te));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((trial, te)) = next else {
            break;
        };
        x = trial;
        e = te;
        history.push(e.rel_g);
    }
    if accepted(&e, settings.tol_nonlinear) {
        let iterations = history.len() - 1;
        let (x, e) = polish(&base, x, kappa, e, settings);
        return Ok(finish(x, kappa, iterations, history, &e));
    }
    Err(Error::NoConvergence {
        iterations: history.len() - 1,
        history,
    })
}

/// `(||eta||_inf, 1 / min(1 + beta + eta), |kappa|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Blowup {
    pub eta_max: f64,
    pub inv_depth_min: f64,
    pub kappa_abs: f64,
}

impl Blowup {
    pub fn depth_min(&self) -> f64 {
        1.0 / self.inv_depth_min
    }
}

pub fn blowup_monitor(s: &State, beta: &Field, kappa: f64) -> Blowup {
    let depth_min = s.depth(beta).min();
    Blowup {
        eta_max: s.eta.max_abs(),
        inv_depth_min: if depth_min > 0.0 {
            1.0 / depth_min
        } else {
            f64::INFINITY
        },
        kappa_abs: kappa.abs(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub eta_max: f64,
    pub depth_min: f64,
    pub kappa_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            eta_max: 10.0,
            depth_min: 1e-3,
            kappa_max: f64::INFINITY,
        }
    }
}

impl Thresholds {
    /// Name of the first threshold crossed, if any.
    pub fn crossed(&self, b: &Blowup) -> Option<&'static str> {
        if b.eta_max > self.eta_max {
            Some("eta_max")
        } else if b.depth_min() < self.depth_min {
            Some("depth_min")
        } else if b.kappa_abs > self.kappa_max {
            Some("kappa_max")
        } else {
            None
        }
    }
}

#[derive(Clone, Debug)]
pub enum Schedule {
    /// March through the listed values, which must start at 0 and be
    /// strictly monotone.
    Natural(Vec<f64>),
    /// Pseudo-arclength steps until `kappa` reaches `target`.
    Arclength {
        target: f64,
        ds: f64,
        ds_max: f64,
        max_steps: usize,
    },
}

#[derive(Clone, Debug)]
pub struct ContinuationSettings {
    pub solve: SolveSettings,
    pub thresholds: Thresholds,
    /// Step halvings allowed before the branch stops with `StepFailure`.
    pub max_halvings: usize,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self {
            solve: SolveSettings::default(),
            thresholds: Thresholds::default(),
            max_halvings: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BranchPoint {
    pub state: State,
    pub kappa: f64,
    pub blowup: Blowup,
    pub residual: f64,
    pub fixed_point_residual: f64,
    pub newton_iterations: usize,
    /// Parameter step (natural) or arclength step that produced the point.
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TargetReached,
    BlowupThreshold,
    StepFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::TargetReached => "target_reached",
            Termination::BlowupThreshold => "blowup_threshold",
            Termination::StepFailure => "step_failure",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub termination: Termination,
    /// Human-readable detail: the threshold crossed or the failing step.
    pub detail: String,
}

fn point(problem: &Problem, sol: Solution, step: f64) -> BranchPoint {
    BranchPoint {
        blowup: blowup_monitor(&sol.state, problem.beta(), sol.kappa),
        state: sol.state,
        kappa: sol.kappa,
        residual: sol.residual,
        fixed_point_residual: sol.fixed_point_residual,
        newton_iterations: sol.iterations,
        step,
    }
}

fn trivial_point(problem: &Problem) -> BranchPoint {
    let state = State::zeros(problem.grid());
    BranchPoint {
        blowup: blowup_monitor(&state, problem.beta(), 0.0),
        state,
        kappa: 0.0,
        residual: 0.0,
        fixed_point_residual: 0.0,
        newton_iterations: 0,
        step: 0.0,
    }
}

/// Predictor for the state at `kappa` from the accepted points.
fn predict(problem: &Problem, points: &[BranchPoint], kappa: f64) -> Result<State> {
    match points {
        [] => Ok(State::zeros(problem.grid())),
        [only] if only.kappa == 0.0 => {
            // linear response -K(0, kappa)
            Ok(problem.apply_k(&only.state, kappa)?.scale(-1.0))
        }
        [.., a, b] => {
            let t = (kappa - b.kappa) / (b.kappa - a.kappa);
            Ok(b.state.axpby(1.0 + t, &a.state, -t))
        }
        [only] => Ok(only.state.clone()),
    }
}

fn depth_ok(problem: &Problem, s: &State) -> bool {
    s.depth(problem.beta()).min() > crate::model::DEPTH_FLOOR
}

/// Continuation from the trivial state at `kappa = 0`.
pub fn continue_branch(
    problem: &Problem,
    schedule: &Schedule,
    settings: &ContinuationSettings,
) -> Result<Branch> {
    settings.solve.validate()?;
    match schedule {
        Schedule::Natural(kappas) => natural(problem, kappas, settings),
        Schedule::Arclength {
            target,
            ds,
            ds_max,
            max_steps,
        } => arclength(problem, *target, *ds, *ds_max, *max_steps, settings),
    }
}

fn check_schedule(kappas: &[f64]) -> Result<()> {
    if kappas.first() != Some(&0.0) {
        return Err(Error::BadSpec("schedule must start at kappa = 0".into()));
    }
    if kappas.iter().any(|k| !k.is_finite()) {
        return Err(Error::BadSpec("schedule entries must be finite".into()));
    }
    let increasing = kappas.windows(2).all(|w| w[1] > w[0]);
    let decreasing = kappas.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(Error::BadSpec("schedule must be strictly monotone".into()));
    }
    Ok(())
}

fn natural(
    problem: &Problem,
    kappas: &[f64],
    settings: &ContinuationSettings,
) -> Result<Branch> {
    check_schedule(kappas)?;
    let mut points = vec![trivial_point(problem)];
    for &target in &kappas[1..] {
        let mut halvings = 0usize;
        loop {
            let last = points.last().expect("nonempty branch");
            let from = last.kappa;
            let kappa = from + (target - from) * 0.5f64.powi(halvings as i32);
            let attempt = predict(problem, &points, kappa)
                .and_then(|guess| newton_solve(problem, kappa, &guess, &settings.solve));
            match attempt {
                Ok(sol) if depth_ok(problem, &sol.state) => {
                    let p = point(problem, sol, kappa - from);
                    let crossed = settings.thresholds.crossed(&p.blowup);
                    points.push(p);
                    if let Some(which) = crossed {
                        return Ok(Branch {
                            points,
                            termination: Termination::BlowupThreshold,
                            detail: which.to_string(),
                        });
                    }
                    if kappa == target {
                        break;
                    }
                    halvings = halvings.saturating_sub(1);
                }
                other => {
                    halvings += 1;
                    if halvings > settings.max_halvings {
                        let why = match other {
                            Err(e) => e.to_string(),
                            Ok(_) => "depth at or below the floor".to_string(),
                        };
                        return Ok(Branch {
                            points,
                            termination: Termination::StepFailure,
                            detail: format!("step toward kappa = {target}: {why}"),
                        });
                    }
                }
            }
        }
    }
    Ok(Branch {
        points,
        termination: Termination::TargetReached,
        detail: String::new(),
    })
}

/// Inner product used by the arclength constraint.
fn inner(a: &State, b: &State) -> f64 {
    let w = a.grid().cell_area();
    a.to_flat()
        .iter()
        .zip(b.to_flat())
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * w
}

struct Tangent {
    dx: State,
    dk: f64,
}

fn arclength(
    problem: &Problem,
    target: f64,
    ds0: f64,
    ds_max: f64,
    max_steps: usize,
    settings: &ContinuationSettings,
) -> Result<Branch> {
    if !(ds0 > 0.0 && ds_max >= ds0 && target.is_finite() && target != 0.0) {
        return Err(Error::BadSpec(
            "arclength needs 0 < ds <= ds_max and a nonzero target".into(),
        ));
    }
    let solve = &settings.solve;
    let base = problem.clone().with_linear(solve.linear);
    let mut points = vec![trivial_point(problem)];
    // tangent at the trivial state: dx/dkappa = -K(0, 1)
    let dir = target.signum();
    let mut tangent = Tangent {
        dx: base.apply_k(&points[0].state, dir)?.scale(-1.0),
        dk: dir,
    };
    let mut ds = ds0;
    let mut halvings = 0;
    for _ in 0..max_steps {
        let prev = points.last().expect("nonempty branch").clone();
        let wx = 1.0 / (1.0 + l2(&prev.state)).powi(2);
        let wk = 1.0 / (1.0 + prev.kappa.abs()).powi(2);
        let tnorm = (wx * inner(&tangent.dx, &tangent.dx) + wk * tangent.dk * tangent.dk).sqrt();
        let (tx, tk) = (tangent.dx.scale(1.0 / tnorm), tangent.dk / tnorm);
        let pred_k = prev.kappa + ds * tk;
        let result = if (pred_k - target) * dir >= 0.0 {
            // land on the target with a natural step
            let guess = prev.state.axpby(1.0, &tx, (target - prev.kappa) / tk);
            newton_solve(&base, target, &guess, solve).map(|s| (s, true))
        } else {
            let guess = prev.state.axpby(1.0, &tx, ds);
            arclength_corrector(&base, &prev, &tx, tk, wx, wk, ds, guess, pred_k, solve)
                .map(|s| (s, false))
        };
        match result {
            Ok((sol, landed)) if depth_ok(problem, &sol.state) => {
                let new_tangent = Tangent {
                    dx: sol.state.sub(&prev.state),
                    dk: sol.kappa - prev.kappa,
                };
                let p = point(problem, sol, ds);
                let crossed = settings.thresholds.crossed(&p.blowup);
                let iters = p.newton_iterations;
                points.push(p);
                if let Some(which) = crossed {
                    return Ok(Branch {
                        points,
                        termination: Termination::BlowupThreshold,
                        detail: which.to_string(),
                    });
                }
                if landed {
                    return Ok(Branch {
                        points,
                        termination: Termination::TargetReached,
                        detail: String::new(),
                    });
                }
                tangent = new_tangent;
                halvings = 0;
                if iters <= 3 {
                    ds = (ds * 1.5).min(ds_max);
                }
            }
            other => {
                halvings += 1;
                if halvings > settings.max_halvings {
                    let why = match other {
                        Err(e) => e.to_string(),
                        Ok(_) => "depth at or below the floor".to_string(),
                    };
                    return Ok(Branch {
                        points,
                        termination: Termination::StepFailure,
                        detail: format!("arclength step {ds:.3e}: {why}"),
                    });
                }
                ds *= 0.5;
            }
        }
    }
    Ok(Branch {
        points,
        termination: Termination::StepFailure,
        detail: format!("step budget of {max_steps} exhausted"),
    })
}

/// Newton on the bordered system `R(x, kappa) = 0`,
/// `wx <tx, x - x0> + wk tk (kappa - k0) = ds`.
#[allow(clippy::too_many_arguments)]
fn arclength_corrector(
    problem: &Problem,
    prev: &BranchPoint,
    tx: &State,
    tk: f64,
    wx: f64,
    wk: f64,
    ds: f64,
    guess: State,
    pred_k: f64,
    settings: &SolveSettings,
) -> Result<Solution> {
    let mut x = guess.band_limited();
    let mut kappa = pred_k;
    let mut history = Vec::new();
    for it in 0..settings.max_newton {
        let e = evaluate(problem, &x, kappa)?;
        history.push(e.rel_g);
        let c = wx * inner(tx, &x.sub(&prev.state)) + wk * tk * (kappa - prev.kappa) - ds;
        if accepted(&e, settings.tol_nonlinear) && c.abs() <= 1e-6 * ds {
            let (x, e) = polish(problem, x, kappa, e, settings);
            return Ok(finish(x, kappa, it, history, &e));
        }
        let inner_tol = (e.rel_g.min(1e-2) * 1e-2).max(settings.linear.tol);
        let inner_problem = problem.clone().with_linear(LinearSettings {
            tol: inner_tol,
            ..settings.linear
        });
        let m_x = nonlinear_rhs(problem, &x, kappa)?;
        // R_kappa = -(0, F)
        let f = problem.forcing(&x.eta)?.map_components(dealias);
        let r_kappa = RhsPair {
            g: Field::zeros(problem.grid()),
            phi: f.scale(-1.0),
        };
        let a = newton_direction(&inner_problem, &x, &m_x, kappa, &e.r.scale(-1.0), settings.fd_epsilon)?;
        let b = newton_direction(&inner_problem, &x, &m_x, kappa, &r_kappa.scale(-1.0), settings.fd_epsilon)?;
        let denom = wx * inner(tx, &b) + wk * tk;
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let dk = (-c - wx * inner(tx, &a)) / denom;
        let dx = a.axpby(1.0, &b, dk);
        x = x.add(&dx).band_limited();
        kappa += dk;
    }
    Err(Error::NoConvergence {
        iterations: settings.max_newton,
        history,
    })
}
