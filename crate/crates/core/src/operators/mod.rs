//! Operator calculus on the torus: viscous stress, the principal part and its
//! inverse, the bathymetric remainder, the nonlinearity, the forcing map, the
//! full residual and the fixed-point map `K`.
//!
//! States and right-hand sides are kept band-limited (2/3 rule) and the
//! free surface is mean-zero. Nyquist modes are dropped by the principal part
//! and its inverse; they never occur in band-limited data.

mod krylov;

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

pub use krylov::{gmres, GmresOutcome, GmresSettings};

use crate::error::{Error, Result};
use crate::model::{eval_forcing_data, ForcingSpec, Params, DEPTH_FLOOR};
use crate::spectral::{
    self, dealias, divergence, gradient, norm_sobolev, partial, project_mean_zero, Field, Grid,
    SymTensorField, VectorField,
};

/// Solution pair `(u, eta)` with `eta` mean-zero.
#[derive(Clone, Debug)]
pub struct State {
    pub u: VectorField,
    pub eta: Field,
}

impl State {
    /// Builds a state, projecting the free surface to mean zero.
    pub fn new(u: VectorField, eta: Field) -> Result<Self> {
        if !u.c[0].same_grid(&eta) || !u.c[1].same_grid(&eta) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            u,
            eta: project_mean_zero(&eta),
        })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            u: VectorField::zeros(grid),
            eta: Field::zeros(grid),
        }
    }

    /// Random band-limited state with spectral decay 2.5, velocity
    /// coefficients scaled by `amp` and `max |eta| = amp`.
    pub fn random<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R, amp: f64) -> Self {
        let k = [grid.n()[0] / 3, grid.n()[1] / 3];
        let mut f = || spectral::random_field(grid, rng, k, 2.5);
        let u = VectorField {
            c: [f().scale(amp), f().scale(amp)],
        };
        let eta = f();
        let eta = eta.scale(amp / eta.max_abs().max(f64::MIN_POSITIVE));
        Self { u, eta }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.eta.grid()
    }

    /// Dealiased copy with the mean of `eta` removed.
    pub fn band_limited(&self) -> Self {
        Self {
            u: self.u.map_components(dealias),
            eta: project_mean_zero(&dealias(&self.eta)),
        }
    }

    pub fn axpby(&self, a: f64, other: &State, b: f64) -> Self {
        Self {
            u: self.u.axpby(a, &other.u, b),
            eta: self.eta.axpby(a, &other.eta, b),
        }
    }

    pub fn add(&self, other: &State) -> Self {
        self.axpby(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &State) -> Self {
        self.axpby(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            u: self.u.scale(a),
            eta: self.eta.scale(a),
        }
    }

    /// `(||u||_{H^su}^2 + ||eta||_{H^se}^2)^(1/2)`.
    pub fn norm(&self, su: u32, se: u32) -> f64 {
        spectral::vector_norm_sobolev(&self.u, su).hypot(norm_sobolev(&self.eta, se))
    }

    /// Discrete `H1 x H2` norm, used for comparing solutions.
    pub fn norm_h1h2(&self) -> f64 {
        self.norm(1, 2)
    }

    /// Norm of the solution space `H2 x H3`.
    pub fn norm_x(&self) -> f64 {
        self.norm(2, 3)
    }

    pub fn depth(&self, beta: &Field) -> Field {
        beta.zip_map(&self.eta, |b, e| 1.0 + b + e)
    }

    pub fn is_finite(&self) -> bool {
        self.u.c[0].is_finite() && self.u.c[1].is_finite() && self.eta.is_finite()
    }

    /// Samples laid out as `[u1, u2, eta]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.grid().len());
        out.extend_from_slice(self.u.c[0].values());
        out.extend_from_slice(self.u.c[1].values());
        out.extend_from_slice(self.eta.values());
        out
    }

    /// Inverse of [`State::to_flat`], followed by [`State::band_limited`].
    pub fn from_flat(grid: &Arc<Grid>, flat: &[f64]) -> Self {
        let n = grid.len();
        assert_eq!(flat.len(), 3 * n, "flat state length");
        let part = |i: usize| Field::from_values_unchecked(grid, flat[i * n..(i + 1) * n].to_vec());
        Self {
            u: VectorField {
                c: [part(0), part(1)],
            },
            eta: part(2),
        }
        .band_limited()
    }
}

/// Right-hand side `(g, phi)` of the linear problems: `g` mean-zero scalar,
/// `phi` vector.
#[derive(Clone, Debug)]
pub struct RhsPair {
    pub g: Field,
    pub phi: VectorField,
}

impl RhsPair {
    /// Builds a pair, projecting `g` to mean zero.
    pub fn new(g: Field, phi: VectorField) -> Result<Self> {
        if !phi.c[0].same_grid(&g) || !phi.c[1].same_grid(&g) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            g: project_mean_zero(&g),
            phi,
        })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            g: Field::zeros(grid),
            phi: VectorField::zeros(grid),
        }
    }

    /// Random band-limited pair, `g` with decay 2 and `phi` with decay 1.
    pub fn random<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R) -> Self {
        let k = [grid.n()[0] / 3, grid.n()[1] / 3];
        let g = spectral::random_field(grid, rng, k, 2.0);
        let phi = VectorField {
            c: [
                spectral::random_field(grid, rng, k, 1.0),
                spectral::random_field(grid, rng, k, 1.0),
            ],
        };
        Self { g, phi }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.g.grid()
    }

    pub fn axpby(&self, a: f64, other: &RhsPair, b: f64) -> Self {
        Self {
            g: self.g.axpby(a, &other.g, b),
            phi: self.phi.axpby(a, &other.phi, b),
        }
    }

    pub fn add(&self, other: &RhsPair) -> Self {
        self.axpby(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &RhsPair) -> Self {
        self.axpby(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            g: self.g.scale(a),
            phi: self.phi.scale(a),
        }
    }

    /// `(||g||_{H1}^2 + ||phi||_{L2}^2)^(1/2)`, the norm of the codomain.
    pub fn norm(&self) -> f64 {
        norm_sobolev(&self.g, 1).hypot(spectral::vector_norm_sobolev(&self.phi, 0))
    }

    /// Plain L2 norm of the pair.
    pub fn norm_l2(&self) -> f64 {
        norm_sobolev(&self.g, 0).hypot(spectral::vector_norm_sobolev(&self.phi, 0))
    }

    pub fn dealiased(&self) -> Self {
        Self {
            g: dealias(&self.g),
            phi: self.phi.map_components(dealias),
        }
    }
}

/// `S u = grad u + grad u^t + 2 (div u) I`.
pub fn viscous_stress(u: &VectorField) -> SymTensorField {
    let d11 = partial(&u.c[0], 0);
    let d12 = partial(&u.c[0], 1);
    let d21 = partial(&u.c[1], 0);
    let d22 = partial(&u.c[1], 1);
    let div = d11.add(&d22);
    SymTensorField {
        xx: d11.axpby(2.0, &div, 2.0),
        xy: d12.add(&d21),
        yy: d22.axpby(2.0, &div, 2.0),
    }
}

/// `div S u = Lap u + 3 grad div u`, evaluated spectrally.
pub fn div_viscous_stress(u: &VectorField) -> VectorField {
    let grad_div = gradient(&divergence(u));
    VectorField {
        c: [
            spectral::laplacian(&u.c[0]).axpby(1.0, &grad_div.c[0], 3.0),
            spectral::laplacian(&u.c[1]).axpby(1.0, &grad_div.c[1], 3.0),
        ],
    }
}

/// Wavenumber data for one spectral index, or `None` on a Nyquist index.
fn mode(grid: &Grid, idx: usize) -> Option<[f64; 2]> {
    let n2 = grid.n()[1];
    let (m1, m2) = (idx / n2, idx % n2);
    if grid.is_nyquist(0, m1) || grid.is_nyquist(1, m2) {
        return None;
    }
    Some([grid.wavenumber(0, m1), grid.wavenumber(1, m2)])
}

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Principal part `P(u, eta) = (div u, A u - div S u + (G - Lap) grad eta)`.
pub fn apply_principal(s: &State, p: &Params) -> RhsPair {
    let grid = s.grid().clone();
    let (u1, u2, e) = (s.u.c[0].spectrum(), s.u.c[1].spectrum(), s.eta.spectrum());
    let len = grid.len();
    let mut g = vec![Complex64::default(); len];
    let mut f1 = g.clone();
    let mut f2 = g.clone();
    for idx in 0..len {
        let Some([x1, x2]) = mode(&grid, idx) else {
            continue;
        };
        let q = x1 * x1 + x2 * x2;
        let dot = u1[idx] * x1 + u2[idx] * x2;
        let e = if idx == 0 { Complex64::default() } else { e[idx] };
        g[idx] = I * dot;
        f1[idx] = u1[idx] * (p.a + q) + dot * (3.0 * x1) + I * x1 * (p.g + q) * e;
        f2[idx] = u2[idx] * (p.a + q) + dot * (3.0 * x2) + I * x2 * (p.g + q) * e;
    }
    RhsPair {
        g: Field::from_spectrum(&grid, g),
        phi: VectorField {
            c: [Field::from_spectrum(&grid, f1), Field::from_spectrum(&grid, f2)],
        },
    }
}

fn check_mean_zero(g: &Field) -> Result<()> {
    let mean = g.spectrum()[0].norm() * g.grid().area().sqrt();
    let norm = norm_sobolev(g, 0);
    if mean > spectral::SINGULAR_MEAN_TOL * norm {
        return Err(Error::SingularMode { mean, norm });
    }
    Ok(())
}

/// Explicit inverse of [`apply_principal`], mode by mode.
pub fn invert_principal(r: &RhsPair, p: &Params) -> Result<State> {
    check_mean_zero(&r.g)?;
    let grid = r.grid().clone();
    let (g, f1, f2) = (r.g.spectrum(), r.phi.c[0].spectrum(), r.phi.c[1].spectrum());
    let len = grid.len();
    let mut u1 = vec![Complex64::default(); len];
    let mut u2 = u1.clone();
    let mut e = u1.clone();
    u1[0] = f1[0] / p.a;
    u2[0] = f2[0] / p.a;
    for idx in 1..len {
        let Some([x1, x2]) = mode(&grid, idx) else {
            continue;
        };
        let q = x1 * x1 + x2 * x2;
        let div_phi = I * (f1[idx] * x1 + f2[idx] * x2);
        let eta = (g[idx] * (p.a + 4.0 * q) - div_phi) / (q * (p.g + q));
        let grad_coeff = I * (3.0 * g[idx] - (p.g + q) * eta);
        u1[idx] = (f1[idx] + grad_coeff * x1) / (p.a + q);
        u2[idx] = (f2[idx] + grad_coeff * x2) / (p.a + q);
        e[idx] = eta;
    }
    Ok(State {
        u: VectorField {
            c: [Field::from_spectrum(&grid, u1), Field::from_spectrum(&grid, u2)],
        },
        eta: Field::from_spectrum(&grid, e),
    })
}

/// Settings for [`solve_linear`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSettings {
    /// Relative tolerance on the residual in the codomain norm.
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for LinearSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            restart: 30,
            max_iter: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub state: State,
    /// Total Krylov iterations.
    pub iterations: usize,
    /// Achieved `||(P + L) x - r|| / ||r||`.
    pub relative_residual: f64,
}

/// Bathymetry-derived coefficient fields.
#[derive(Clone, Debug)]
struct Relief {
    beta: Field,
    grad_beta: VectorField,
    /// `grad log(1 + beta)`
    grad_log_b: VectorField,
    /// `A beta / (1 + beta)` without the factor `A`
    beta_over_b: Field,
}

impl Relief {
    fn new(beta: &Field) -> Result<Self> {
        let min_b = 1.0 + beta.min();
        if !(min_b > DEPTH_FLOOR) {
            return Err(Error::DepthViolation {
                min_depth: min_b,
                floor: DEPTH_FLOOR,
            });
        }
        let grad_beta = gradient(beta);
        let grad_log_b = VectorField {
            c: [
                grad_beta.c[0].zip_map(beta, |d, b| d / (1.0 + b)),
                grad_beta.c[1].zip_map(beta, |d, b| d / (1.0 + b)),
            ],
        };
        Ok(Self {
            beta: beta.clone(),
            grad_beta,
            grad_log_b,
            beta_over_b: beta.map(|b| b / (1.0 + b)),
        })
    }

    fn is_flat(&self) -> bool {
        self.beta.max_abs() == 0.0
    }
}

/// Everything the operators need besides the state: parameters, the relief,
/// the forcing data and the linear solver settings.
#[derive(Clone, Debug)]
pub struct Problem {
    pub params: Params,
    pub forcing: ForcingSpec,
    pub linear: LinearSettings,
    relief: Relief,
}

impl Problem {
    pub fn new(params: Params, beta: Field, forcing: ForcingSpec) -> Result<Self> {
        params.validate()?;
        forcing.validate(beta.grid())?;
        Ok(Self {
            params,
            forcing,
            linear: LinearSettings::default(),
            relief: Relief::new(&beta)?,
        })
    }

    pub fn with_linear(mut self, linear: LinearSettings) -> Self {
        self.linear = linear;
        self
    }

    pub fn beta(&self) -> &Field {
        &self.relief.beta
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.relief.beta.grid()
    }

    /// Depth `1 + beta + eta`, or `DepthViolation` at or below the floor.
    pub fn depth(&self, eta: &Field) -> Result<Field> {
        let h = self.relief.beta.zip_map(eta, |b, e| 1.0 + b + e);
        let min_depth = h.min();
        if !(min_depth > DEPTH_FLOOR) {
            return Err(Error::DepthViolation {
                min_depth,
                floor: DEPTH_FLOOR,
            });
        }
        Ok(h)
    }

    /// `grad log(1 + beta + eta)` built as `(grad beta + grad eta) / h`.
    fn grad_log_h(&self, eta: &Field, h: &Field) -> VectorField {
        let grad_eta = gradient(eta);
        let gb = &self.relief.grad_beta;
        VectorField {
            c: [0, 1].map(|i| {
                let num = gb.c[i].add(&grad_eta.c[i]);
                num.zip_map(h, |d, h| d / h)
            }),
        }
    }

    pub fn principal(&self, s: &State) -> RhsPair {
        apply_principal(s, &self.params)
    }

    pub fn invert_principal(&self, r: &RhsPair) -> Result<State> {
        invert_principal(r, &self.params)
    }

    /// `L(u) = (P0(u . grad log b), -A beta/b u - S u grad log b)`.
    pub fn remainder(&self, s: &State) -> RhsPair {
        let grid = s.grid();
        if self.relief.is_flat() {
            return RhsPair::zeros(grid);
        }
        let lb = &self.relief.grad_log_b;
        let g = project_mean_zero(&s.u.dot(lb));
        let su = viscous_stress(&s.u);
        let drag = s.u.mul_scalar(&self.relief.beta_over_b).scale(self.params.a);
        let phi = drag.add(&su.apply(lb)).scale(-1.0);
        RhsPair { g, phi }
    }

    /// `(P + L) x`.
    pub fn linear_part(&self, s: &State) -> RhsPair {
        self.principal(s).add(&self.remainder(s))
    }

    /// `N(u, eta) = (P0(u . gr), u . grad u - A eta/(b h) u - S u gr)` with
    /// `gr = grad log h - grad log b`.
    pub fn nonlinearity(&self, s: &State) -> Result<RhsPair> {
        let h = self.depth(&s.eta)?;
        let glh = self.grad_log_h(&s.eta, &h);
        let lb = &self.relief.grad_log_b;
        let gr = glh.sub(lb);
        let g = project_mean_zero(&s.u.dot(&gr));
        let advect = advection(&s.u);
        let coeff = s
            .eta
            .zip_map(&self.relief.beta, |e, b| e / (1.0 + b))
            .zip_map(&h, |q, h| self.params.a * q / h);
        let drag = s.u.mul_scalar(&coeff);
        let stress = viscous_stress(&s.u).apply(&gr);
        let phi = advect.sub(&drag).sub(&stress);
        Ok(RhsPair { g, phi })
    }

    /// `F(eta) = h^-1 (phi + grad(h psi) + tau grad eta)`. The quotient is
    /// taken samplewise and not truncated.
    pub fn forcing(&self, eta: &Field) -> Result<VectorField> {
        let h = self.depth(eta)?;
        let data = eval_forcing_data(&self.forcing, eta, &self.relief.beta)?;
        let flux = gradient(&h.mul(&data.psi));
        let tension = data.tau.apply(&gradient(eta));
        let total = data.phi.add(&flux).add(&tension);
        Ok(VectorField {
            c: [0, 1].map(|i| total.c[i].zip_map(&h, |v, h| v / h)),
        })
    }

    /// `N(x) - kappa (0, F(eta))` with the forcing truncated.
    pub fn nonlinear_rhs(&self, s: &State, kappa: f64) -> Result<RhsPair> {
        let n = self.nonlinearity(s)?;
        if kappa == 0.0 {
            return Ok(n);
        }
        let f = self.forcing(&s.eta)?;
        Ok(RhsPair {
            g: n.g,
            phi: n.phi.axpby(1.0, &f.map_components(dealias), -kappa),
        })
    }

    /// `P + L + N - kappa (0, F)` through the decomposition.
    pub fn residual(&self, s: &State, kappa: f64) -> Result<RhsPair> {
        let m = self.nonlinear_rhs(s, kappa)?;
        Ok(self.linear_part(s).add(&m))
    }

    /// The same residual with `Q` evaluated directly:
    /// `(div u + P0(u . grad log h), u . grad u + A/h u - div S u - S u grad log h
    /// + (G - Lap) grad eta) - kappa (0, F)`.
    pub fn residual_direct(&self, s: &State, kappa: f64) -> Result<RhsPair> {
        let h = self.depth(&s.eta)?;
        let glh = self.grad_log_h(&s.eta, &h);
        let g = divergence(&s.u).add(&project_mean_zero(&s.u.dot(&glh)));
        let a = self.params.a;
        let drag = s.u.mul_scalar(&h.map(|h| a / h));
        let capillary = {
            let ge = gradient(&s.eta);
            let lap = ge.map_components(spectral::laplacian);
            ge.axpby(self.params.g, &lap, -1.0)
        };
        let phi = advection(&s.u)
            .add(&drag)
            .sub(&div_viscous_stress(&s.u))
            .sub(&viscous_stress(&s.u).apply(&glh))
            .add(&capillary);
        let mut q = RhsPair { g, phi };
        if kappa != 0.0 {
            let f = self.forcing(&s.eta)?.map_components(dealias);
            q.phi = q.phi.axpby(1.0, &f, -kappa);
        }
        Ok(q)
    }

    /// Solves `(P + L) x = r` by GMRES on `(I + P^-1 L) x = P^-1 r`.
    pub fn solve_linear(&self, r: &RhsPair) -> Result<LinearSolution> {
        let x0 = self.invert_principal(r)?;
        let rnorm = r.norm();
        if self.relief.is_flat() || rnorm == 0.0 {
            return Ok(LinearSolution {
                state: x0,
                iterations: 0,
                relative_residual: 0.0,
            });
        }
        self.gmres_preconditioned(|s| Ok(self.remainder(s)), r, false)
    }

    /// GMRES on `(I + P^-1 M) x = P^-1 r` for a linear map `M`, checking the
    /// true residual `(P + M) x - r` in the codomain norm.
    ///
    /// With `best_effort` the final iterate is returned even when the
    /// tolerance is missed; callers inspect `relative_residual`.
    pub fn gmres_preconditioned(
        &self,
        m: impl Fn(&State) -> Result<RhsPair>,
        r: &RhsPair,
        best_effort: bool,
    ) -> Result<LinearSolution> {
        let x0 = self.invert_principal(r)?;
        if r.norm() == 0.0 {
            return Ok(LinearSolution {
                state: x0,
                iterations: 0,
                relative_residual: 0.0,
            });
        }
        match self.gmres_solve(m, r, x0) {
            (sol, _) if sol.relative_residual <= self.linear.tol || best_effort => Ok(sol),
            (sol, history) => Err(Error::LinearSolveFailure {
                iterations: sol.iterations,
                history,
            }),
        }
    }

    fn gmres_solve(
        &self,
        m: impl Fn(&State) -> Result<RhsPair>,
        r: &RhsPair,
        x0: State,
    ) -> (LinearSolution, Vec<f64>) {
        let packing = Packing::new(self.grid(), &self.params);
        let rnorm = r.norm();
        let b = packing.pack(&x0);
        let apply = |flat: &[f64]| -> Result<Vec<f64>> {
            let s = packing.unpack(flat);
            let z = self.invert_principal(&m(&s)?)?;
            Ok(packing.pack(&s.add(&z)))
        };
        let mut settings = GmresSettings {
            restart: self.linear.restart,
            max_iter: self.linear.max_iter,
            tol: self.linear.tol,
        };
        let mut guess: Option<Vec<f64>> = None;
        let mut history = Vec::new();
        let mut best = LinearSolution {
            state: State::zeros(self.grid()),
            iterations: 0,
            relative_residual: 1.0,
        };
        for _ in 0..4 {
            let out = match gmres(&apply, &b, guess.take(), &settings) {
                Ok(out) => out,
                Err(_) => break,
            };
            best.iterations += out.iterations;
            history.extend_from_slice(&out.history);
            let state = packing.unpack(&out.x);
            let Ok(mx) = m(&state) else { break };
            let rel = self.principal(&state).add(&mx).sub(r).norm() / rnorm;
            if rel.is_finite() && rel < best.relative_residual {
                best.state = state;
                best.relative_residual = rel;
            }
            if rel <= self.linear.tol || best.iterations >= self.linear.max_iter || !rel.is_finite()
            {
                break;
            }
            settings.max_iter = self.linear.max_iter - best.iterations;
            settings.tol = (settings.tol * 0.1 * self.linear.tol / rel).max(1e-15);
            guess = Some(out.x);
        }
        history.push(best.relative_residual);
        (best, history)
    }

    /// `K(x, kappa) = (P + L)^-1 (N(x) - kappa (0, F(eta)))`.
    pub fn apply_k(&self, s: &State, kappa: f64) -> Result<State> {
        let rhs = self.nonlinear_rhs(s, kappa)?;
        Ok(self.solve_linear(&rhs)?.state)
    }
}

/// Krylov coordinates: the in-band spectral coefficients of `(u1, u2, eta)`,
/// weighted by the size of the principal symbol so that Euclidean length
/// tracks the codomain norm of `P x`. Working on coefficients rather than
/// samples keeps high modes free of transform round-off, which `P` would
/// otherwise amplify.
struct Packing {
    grid: Arc<Grid>,
    modes: Vec<usize>,
    wu: Vec<f64>,
    we: Vec<f64>,
}

impl Packing {
    fn new(grid: &Arc<Grid>, p: &Params) -> Self {
        let modes: Vec<usize> = (0..grid.len()).filter(|&i| grid.in_band(i)).collect();
        let wu = modes.iter().map(|&i| p.a + grid.xi_sq(i)).collect();
        let we = modes
            .iter()
            .map(|&i| {
                let q = grid.xi_sq(i);
                if i == 0 {
                    1.0
                } else {
                    (p.g + q) * q.sqrt()
                }
            })
            .collect();
        Self {
            grid: grid.clone(),
            modes,
            wu,
            we,
        }
    }

    fn pack(&self, s: &State) -> Vec<f64> {
        let mut out = Vec::with_capacity(6 * self.modes.len());
        let parts = [
            (s.u.c[0].spectrum(), &self.wu),
            (s.u.c[1].spectrum(), &self.wu),
            (s.eta.spectrum(), &self.we),
        ];
        for (spec, w) in parts {
            for (&i, &wi) in self.modes.iter().zip(w.iter()) {
                out.push(spec[i].re * wi);
                out.push(spec[i].im * wi);
            }
        }
        out
    }

    fn unpack(&self, flat: &[f64]) -> State {
        let m = self.modes.len();
        let field = |part: usize, w: &[f64], zero_mean: bool| {
            let mut spec = spectral::zero_spectrum(&self.grid);
            for (j, (&i, &wi)) in self.modes.iter().zip(w).enumerate() {
                let o = 2 * (part * m + j);
                spec[i] = Complex64::new(flat[o], flat[o + 1]) / wi;
            }
            if zero_mean {
                spec[0] = Complex64::default();
            }
            Field::from_spectrum(&self.grid, spec)
        };
        State {
            u: VectorField {
                c: [field(0, &self.wu, false), field(1, &self.wu, false)],
            },
            eta: field(2, &self.we, true),
        }
    }
}

/// `(u . grad) u`, dealiased.
fn advection(u: &VectorField) -> VectorField {
    u.map_components(|ui| u.c[0].mul(&partial(ui, 0)).add(&u.c[1].mul(&partial(ui, 1))))
}

pub fn apply_bathymetric_remainder(s: &State, beta: &Field, p: &Params) -> Result<RhsPair> {
    Ok(Problem::new(*p, beta.clone(), ForcingSpec::default())?.remainder(s))
}

pub fn solve_linear(r: &RhsPair, beta: &Field, p: &Params) -> Result<LinearSolution> {
    Problem::new(*p, beta.clone(), ForcingSpec::default())?.solve_linear(r)
}

pub fn apply_nonlinearity(s: &State, beta: &Field, p: &Params) -> Result<RhsPair> {
    Problem::new(*p, beta.clone(), ForcingSpec::default())?.nonlinearity(s)
}

pub fn forcing_map(eta: &Field, beta: &Field, spec: &ForcingSpec) -> Result<VectorField> {
    let p = Params {
        a: 1.0,
        g: 0.0,
        kappa: 0.0,
    };
    Problem::new(p, beta.clone(), spec.clone())?.forcing(eta)
}

pub fn residual_full(
    s: &State,
    kappa: f64,
    beta: &Field,
    spec: &ForcingSpec,
    p: &Params,
) -> Result<RhsPair> {
    Problem::new(*p, beta.clone(), spec.clone())?.residual(s, kappa)
}

pub fn apply_k(
    s: &State,
    kappa: f64,
    beta: &Field,
    spec: &ForcingSpec,
    p: &Params,
) -> Result<State> {
    Problem::new(*p, beta.clone(), spec.clone())?.apply_k(s, kappa)
}

#[cfg(test)]
mod tests;
