//! Physical parameters, bathymetry generators and the forcing data trio.

use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, Field, Grid, SymTensorField, VectorField};

/// Hard floor on the fluid depth `1 + beta + eta`.
pub const DEPTH_FLOOR: f64 = 1e-6;

/// Largest polynomial degree accepted in a forcing map.
pub const MAX_FORCING_DEGREE: usize = 8;

/// Dimensional inputs: laminar drag `alpha`, gravity `g`, viscosity `mu`,
/// surface tension `sigma`, equilibrium depth `h` and forcing strength
/// `kappa_hat` (acceleration units).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionalParams {
    pub alpha: f64,
    pub g: f64,
    pub mu: f64,
    pub sigma: f64,
    pub h: f64,
    #[serde(default)]
    pub kappa_hat: f64,
}

/// Nondimensional model constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Inverse slip coefficient `A > 0`.
    pub a: f64,
    /// Capillary number `G >= 0`.
    pub g: f64,
    /// Forcing strength.
    #[serde(default)]
    pub kappa: f64,
}

impl Params {
    pub fn new(a: f64, g: f64) -> Result<Self> {
        let p = Self { a, g, kappa: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::BadSpec(format!("A = {} must be positive", self.a)));
        }
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(Error::BadSpec(format!("G = {} must be nonnegative", self.g)));
        }
        Ok(())
    }
}

/// Result of [`nondimensionalize`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scaling {
    pub params: Params,
    /// Length unit `mu^2 / sigma`.
    pub length: f64,
    /// Time unit `mu^3 / sigma^2`.
    pub time: f64,
    mu: f64,
    sigma: f64,
}

impl Scaling {
    /// Nondimensional forcing strength `kappa_hat mu^4 / sigma^3`.
    pub fn kappa(&self, kappa_hat: f64) -> f64 {
        kappa_hat * self.mu.powi(4) / self.sigma.powi(3)
    }
}

pub fn nondimensionalize(d: &DimensionalParams) -> Result<Scaling> {
    if !(d.mu > 0.0) {
        return Err(Error::NonPositiveScale("mu"));
    }
    if !(d.sigma > 0.0) {
        return Err(Error::NonPositiveScale("sigma"));
    }
    if !(d.h > 0.0) {
        return Err(Error::NonPositiveScale("H"));
    }
    if !(d.alpha > 0.0) {
        return Err(Error::NonPositiveScale("alpha"));
    }
    if !(d.g >= 0.0) {
        return Err(Error::NonPositiveScale("g"));
    }
    let length = d.mu * d.mu / d.sigma;
    let time = d.mu.powi(3) / (d.sigma * d.sigma);
    let mut scaling = Scaling {
        params: Params {
            a: d.alpha * time / d.h,
            g: d.g * d.h * d.mu * d.mu / (d.sigma * d.sigma),
            kappa: 0.0,
        },
        length,
        time,
        mu: d.mu,
        sigma: d.sigma,
    };
    scaling.params.kappa = scaling.kappa(d.kappa_hat);
    Ok(scaling)
}

/// Bathymetry generators. All produce the nonnegative relief `beta` with
/// `min beta = 0` over the grid samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BathymetrySpec {
    Flat,
    /// `amplitude * sqrt(max(0, 1 - q(x)))` with `q` the elliptic form of the
    /// periodic offset from `center`, Gaussian-smoothed with kernel width
    /// `smoothing` (physical length; defaults to `min(L) / 16`).
    ///
    /// An infinite semi-axis gives a ridge that is constant along that axis.
    /// With `invert = true` the relief is `amplitude` minus the bump, which is
    /// the convention for a mound on the physical bottom.
    HalfEllipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        amplitude: f64,
        #[serde(default)]
        invert: bool,
        #[serde(default)]
        smoothing: Option<f64>,
    },
    /// Gaussian spectral coefficients with standard deviation `(1 + |k|)^-decay`
    /// on the in-band modes with `|k_i| <= max_mode`, seeded by ChaCha8 from
    /// `seed`. Without `max_mode` the whole band is filled, so the relief
    /// changes with the grid; with it the coefficients are the same on every
    /// grid that resolves them.
    Random {
        seed: u64,
        decay: f64,
        amplitude: f64,
        #[serde(default)]
        max_mode: Option<usize>,
    },
    /// Field named `name` (default `"beta"`) read from an SWF1 file.
    Samples {
        path: PathBuf,
        #[serde(default)]
        name: Option<String>,
    },
}

/// Resolution on which closed-form reliefs are sampled before being
/// truncated to the working grid, so that the low modes do not depend on it.
const REFERENCE_RESOLUTION: usize = 512;

impl BathymetrySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            BathymetrySpec::Flat | BathymetrySpec::Samples { .. } => Ok(()),
            BathymetrySpec::HalfEllipse {
                semi_axes,
                amplitude,
                smoothing,
                ..
            } => {
                if !(*amplitude >= 0.0) {
                    return Err(Error::BadSpec("amplitude must be nonnegative".into()));
                }
                if semi_axes.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::BadSpec("semi-axes must be positive".into()));
                }
                if let Some(s) = smoothing {
                    if !(*s >= 0.0 && s.is_finite()) {
                        return Err(Error::BadSpec("smoothing must be nonnegative".into()));
                    }
                }
                Ok(())
            }
            BathymetrySpec::Random { decay, amplitude, .. } => {
                if !(*amplitude >= 0.0) {
                    return Err(Error::BadSpec("amplitude must be nonnegative".into()));
                }
                if !(*decay >= 2.0) {
                    return Err(Error::BadSpec(format!(
                        "spectral decay exponent {decay} must be at least 2"
                    )));
                }
                Ok(())
            }
        }
    }
}

pub fn make_bathymetry(spec: &BathymetrySpec, grid: &Arc<Grid>) -> Result<Field> {
    spec.validate()?;
    match spec {
        BathymetrySpec::Flat => Ok(Field::zeros(grid)),
        BathymetrySpec::HalfEllipse {
            center,
            semi_axes,
            amplitude,
            invert,
            smoothing,
        } => {
            if *amplitude == 0.0 {
                return Ok(Field::zeros(grid));
            }
            let [l1, l2] = grid.periods();
            let width = smoothing.unwrap_or(l1.min(l2) / 16.0);
            let raw = half_ellipse_on_grid(grid, *center, *semi_axes, *invert, width)?;
            Ok(normalize_relief(&raw, *amplitude))
        }
        BathymetrySpec::Random {
            seed,
            decay,
            amplitude,
            max_mode,
        } => {
            if *amplitude == 0.0 {
                return Ok(Field::zeros(grid));
            }
            let raw = random_relief(grid, *seed, *decay, *max_mode);
            Ok(normalize_relief(&raw, *amplitude))
        }
        BathymetrySpec::Samples { path, name } => {
            let name = name.as_deref().unwrap_or("beta");
            let file = crate::io::read_swf1(path)?;
            let field = file.field(name, grid)?;
            let min = field.min();
            Ok(field.map(|v| v - min))
        }
    }
}

fn wrap(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

fn half_ellipse_on_grid(
    grid: &Arc<Grid>,
    center: [f64; 2],
    semi_axes: [f64; 2],
    invert: bool,
    width: f64,
) -> Result<Field> {
    let [n1, n2] = grid.n();
    let m = [
        REFERENCE_RESOLUTION.max(2 * n1),
        REFERENCE_RESOLUTION.max(2 * n2),
    ];
    let periods = grid.periods();
    let reference = Grid::new(periods, m)?;
    let raw = Field::from_fn(&reference, |x| {
        let q: f64 = (0..2)
            .map(|i| {
                if semi_axes[i].is_infinite() {
                    0.0
                } else {
                    (wrap(x[i] - center[i], periods[i]) / semi_axes[i]).powi(2)
                }
            })
            .sum();
        let bump = (1.0 - q).max(0.0).sqrt();
        if invert {
            1.0 - bump
        } else {
            bump
        }
    });
    // Transfer the representable modes, smoothing as we go.
    let src = raw.spectrum();
    let mut spectrum = spectral::zero_spectrum(grid);
    for (idx, slot) in spectrum.iter_mut().enumerate() {
        let (j1, j2) = (idx / n2, idx % n2);
        if grid.is_nyquist(0, j1) || grid.is_nyquist(1, j2) {
            continue;
        }
        let k1 = grid.wavenumber_index(0, j1);
        let k2 = grid.wavenumber_index(1, j2);
        let r1 = k1.rem_euclid(m[0] as i64) as usize;
        let r2 = k2.rem_euclid(m[1] as i64) as usize;
        let gauss = (-0.5 * width * width * grid.xi_sq(idx)).exp();
        *slot = src[r1 * m[1] + r2] * gauss;
    }
    Ok(Field::from_spectrum(grid, spectrum))
}

fn random_relief(grid: &Arc<Grid>, seed: u64, decay: f64, max_mode: Option<usize>) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [n1, n2] = grid.n();
    let cap = max_mode.unwrap_or(usize::MAX);
    spectral::random_field(grid, &mut rng, [(n1 / 3).min(cap), (n2 / 3).min(cap)], decay)
}

/// Affine map of `raw` onto `[0, amplitude]` over the grid samples.
fn normalize_relief(raw: &Field, amplitude: f64) -> Field {
    let (lo, hi) = (raw.min(), raw.max());
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        return Field::zeros(raw.grid());
    }
    let s = amplitude / (hi - lo);
    raw.map(|v| (v - lo) * s)
}

/// Vector-valued data map `phi(x, y)`.
#[derive(Clone, Debug)]
pub enum VectorData {
    Zero,
    Constant([f64; 2]),
    /// `(1 + beta(x) + y) nu`: gravity along the unit direction `nu`.
    GravityAffine([f64; 2]),
    /// `sum_j g_j(x) y^j`.
    Polynomial(Vec<VectorField>),
}

/// Scalar data map `psi(x, y)`.
#[derive(Clone, Debug)]
pub enum ScalarData {
    Zero,
    Constant(f64),
    Polynomial(Vec<Field>),
}

/// Symmetric-tensor data map `tau(x, y)`.
#[derive(Clone, Debug)]
pub enum TensorData {
    Zero,
    Constant([f64; 3]),
    Polynomial(Vec<SymTensorField>),
}

/// The forcing trio `(phi, psi, tau)` evaluated pointwise in the free surface.
#[derive(Clone, Debug)]
pub struct ForcingSpec {
    pub phi: VectorData,
    pub psi: ScalarData,
    pub tau: TensorData,
    /// Upper end of the working range for the free-surface value.
    pub eta_upper: f64,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        Self {
            phi: VectorData::Zero,
            psi: ScalarData::Zero,
            tau: TensorData::Zero,
            eta_upper: f64::INFINITY,
        }
    }
}

impl ForcingSpec {
    /// Gravity component along `direction`, i.e. `Phi = (1 + beta + eta) nu`.
    pub fn gravity(direction: [f64; 2]) -> Self {
        Self {
            phi: VectorData::GravityAffine(direction),
            ..Self::default()
        }
    }

    pub fn constant(g0: [f64; 2]) -> Self {
        Self {
            phi: VectorData::Constant(g0),
            ..Self::default()
        }
    }

    /// `psi(x, y) = p(x)`.
    pub fn pressure_bump(p: Field) -> Self {
        Self {
            psi: ScalarData::Polynomial(vec![p]),
            ..Self::default()
        }
    }

    pub fn validate(&self, grid: &Arc<Grid>) -> Result<()> {
        let check = |len: usize, grids: Vec<&Arc<Grid>>| -> Result<()> {
            if len == 0 || len > MAX_FORCING_DEGREE + 1 {
                return Err(Error::BadSpec(format!(
                    "polynomial forcing needs 1..={} coefficients, got {len}",
                    MAX_FORCING_DEGREE + 1
                )));
            }
            if grids.iter().any(|g| ***g != **grid) {
                return Err(Error::GridMismatch);
            }
            Ok(())
        };
        if let VectorData::Polynomial(c) = &self.phi {
            check(c.len(), c.iter().map(|v| v.grid()).collect())?;
        }
        if let ScalarData::Polynomial(c) = &self.psi {
            check(c.len(), c.iter().map(|f| f.grid()).collect())?;
        }
        if let TensorData::Polynomial(c) = &self.tau {
            check(c.len(), c.iter().map(|t| t.xx.grid()).collect())?;
        }
        if self.eta_upper.is_nan() {
            return Err(Error::BadSpec("eta_upper is NaN".into()));
        }
        Ok(())
    }

    /// Working range `(-(1 + max beta) + DEPTH_FLOOR, eta_upper]`.
    pub fn working_range(&self, beta: &Field) -> (f64, f64) {
        (-(1.0 + beta.max()) + DEPTH_FLOOR, self.eta_upper)
    }

    /// True when no map depends on the free surface.
    pub fn is_surface_independent(&self) -> bool {
        let phi = match &self.phi {
            VectorData::Polynomial(c) => c.len() <= 1,
            VectorData::GravityAffine(_) => false,
            _ => true,
        };
        let psi = !matches!(&self.psi, ScalarData::Polynomial(c) if c.len() > 1);
        let tau = !matches!(&self.tau, TensorData::Polynomial(c) if c.len() > 1);
        phi && psi && tau
    }
}

/// Pointwise values of the forcing trio at the current free surface.
#[derive(Clone, Debug)]
pub struct ForcingData {
    pub phi: VectorField,
    pub psi: Field,
    pub tau: SymTensorField,
}

fn horner(coeffs: &[Field], eta: &Field) -> Field {
    let (last, rest) = coeffs.split_last().expect("nonempty coefficients");
    rest.iter()
        .rev()
        .fold(last.clone(), |acc, g| acc.mul(eta).add(g))
}

pub fn eval_forcing_data(spec: &ForcingSpec, eta: &Field, beta: &Field) -> Result<ForcingData> {
    let grid = eta.grid();
    let (lower, upper) = spec.working_range(beta);
    if let Some(&value) = eta.values().iter().find(|&&y| !(y > lower && y <= upper)) {
        return Err(Error::RangeViolation {
            value,
            lower,
            upper,
        });
    }
    let phi = match &spec.phi {
        VectorData::Zero => VectorField::zeros(grid),
        VectorData::Constant(v) => VectorField::constant(grid, *v),
        VectorData::GravityAffine(nu) => {
            let depth = beta.zip_map(eta, |b, y| 1.0 + b + y);
            VectorField {
                c: [depth.map(|d| d * nu[0]), depth.map(|d| d * nu[1])],
            }
        }
        VectorData::Polynomial(c) => {
            let c1: Vec<Field> = c.iter().map(|v| v.c[0].clone()).collect();
            let c2: Vec<Field> = c.iter().map(|v| v.c[1].clone()).collect();
            VectorField {
                c: [horner(&c1, eta), horner(&c2, eta)],
            }
        }
    };
    let psi = match &spec.psi {
        ScalarData::Zero => Field::zeros(grid),
        ScalarData::Constant(v) => Field::constant(grid, *v),
        ScalarData::Polynomial(c) => horner(c, eta),
    };
    let tau = match &spec.tau {
        TensorData::Zero => SymTensorField::zeros(grid),
        TensorData::Constant(m) => SymTensorField::constant(grid, *m),
        TensorData::Polynomial(c) => {
            let entry = |f: fn(&SymTensorField) -> &Field| -> Field {
                let coeffs: Vec<Field> = c.iter().map(|t| f(t).clone()).collect();
                horner(&coeffs, eta)
            };
            SymTensorField {
                xx: entry(|t| &t.xx),
                xy: entry(|t| &t.xy),
                yy: entry(|t| &t.yy),
            }
        }
    };
    Ok(ForcingData { phi, psi, tau })
}
