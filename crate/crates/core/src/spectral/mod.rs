//! Periodic grid, Fourier multipliers, spectral calculus, dealiasing and
//! Sobolev norms.
//!
//! Norms are normalized against the continuum: `norm_sobolev(f, 0)` equals
//! `(integral over the torus of |f|^2)^(1/2)`, independent of resolution.

mod field;
mod grid;

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub use field::{Field, SymTensorField, VectorField};
pub use grid::Grid;

use crate::error::{Error, Result};

/// Relative size of the zero mode below which a singular multiplier treats a
/// field as mean-zero.
pub const SINGULAR_MEAN_TOL: f64 = 1e-12;

const SYMBOL_CHECK_TOL: f64 = 1e-12;

fn with_spectrum(f: &Field, g: impl Fn(usize, Complex64) -> Complex64) -> Field {
    let spectrum = f
        .spectrum()
        .iter()
        .enumerate()
        .map(|(idx, &c)| g(idx, c))
        .collect();
    Field::from_spectrum(f.grid(), spectrum)
}

/// Symbol value used at `idx`. On Nyquist indices the symbol is averaged over
/// the sign flips of the Nyquist components, which keeps outputs real and
/// annihilates odd symbols there.
fn effective_symbol(grid: &Grid, idx: usize, m: &impl Fn([f64; 2]) -> Complex64) -> Complex64 {
    let [_, n2] = grid.n();
    let (m1, m2) = (idx / n2, idx % n2);
    let xi = [grid.wavenumber(0, m1), grid.wavenumber(1, m2)];
    let flip1 = grid.is_nyquist(0, m1);
    let flip2 = grid.is_nyquist(1, m2);
    match (flip1, flip2) {
        (false, false) => m(xi),
        (true, false) => 0.5 * (m(xi) + m([-xi[0], xi[1]])),
        (false, true) => 0.5 * (m(xi) + m([xi[0], -xi[1]])),
        (true, true) => {
            0.25 * (m(xi) + m([-xi[0], xi[1]]) + m([xi[0], -xi[1]]) + m([-xi[0], -xi[1]]))
        }
    }
}

fn check_symbol(grid: &Grid, m: &impl Fn([f64; 2]) -> Complex64) -> Result<()> {
    let [n1, n2] = grid.n();
    let probes: [(i64, i64); 8] = [
        (1, 0),
        (0, 1),
        (1, 1),
        (2, -1),
        (-3, 2),
        (n1 as i64 / 4, n2 as i64 / 3),
        (n1 as i64 / 2 - 1, 1),
        (-1, n2 as i64 / 2 - 1),
    ];
    let [l1, l2] = grid.periods();
    for (k1, k2) in probes {
        let xi = [
            2.0 * std::f64::consts::PI * k1 as f64 / l1,
            2.0 * std::f64::consts::PI * k2 as f64 / l2,
        ];
        let a = m(xi);
        let b = m([-xi[0], -xi[1]]);
        if !a.is_finite() || !b.is_finite() {
            continue;
        }
        if (b - a.conj()).norm() > SYMBOL_CHECK_TOL * a.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::NonRealSymbol(k1, k2));
        }
    }
    Ok(())
}

/// Applies the Fourier multiplier with symbol `m` to `f`.
///
/// A symbol that is not finite at `xi = 0` is treated as singular there: the
/// zero mode of `f` must vanish relative to its L2 norm, and the output mean is
/// set to zero.
pub fn apply_fourier_multiplier(f: &Field, m: impl Fn([f64; 2]) -> Complex64) -> Result<Field> {
    let grid = f.grid().clone();
    check_symbol(&grid, &m)?;
    let singular = !m([0.0, 0.0]).is_finite();
    if singular {
        let mean = f.spectrum()[0].norm() * grid.area().sqrt();
        let norm = norm_sobolev(f, 0);
        if mean > SINGULAR_MEAN_TOL * norm {
            return Err(Error::SingularMode { mean, norm });
        }
    }
    Ok(with_spectrum(f, |idx, c| {
        if idx == 0 && singular {
            Complex64::default()
        } else {
            effective_symbol(&grid, idx, &m) * c
        }
    }))
}

/// `P0 f = f - mean(f)`, realized by zeroing the zero mode.
pub fn project_mean_zero(f: &Field) -> Field {
    with_spectrum(f, |idx, c| if idx == 0 { Complex64::default() } else { c })
}

/// 2/3-rule truncation: zeroes every mode with `|k_i| > N_i / 3`.
pub fn dealias(f: &Field) -> Field {
    let grid = f.grid().clone();
    with_spectrum(f, |idx, c| if grid.in_band(idx) { c } else { Complex64::default() })
}

/// True when every out-of-band coefficient is below `tol` relative to the L2
/// norm.
pub fn is_band_limited(f: &Field, tol: f64) -> bool {
    let grid = f.grid();
    let scale = norm_sobolev(f, 0) / grid.area().sqrt();
    f.spectrum()
        .iter()
        .enumerate()
        .all(|(idx, c)| grid.in_band(idx) || c.norm() <= tol * scale.max(f64::MIN_POSITIVE))
}

/// `( sum_k (1 + |xi_k|^2)^s |c_k|^2 )^(1/2)`, scaled by the torus area so that
/// `s = 0` reproduces the continuum L2 norm.
pub fn norm_sobolev(f: &Field, s: u32) -> f64 {
    sobolev_norm_real(f, s as f64)
}

/// Sobolev norm with a real (possibly negative) index.
pub fn sobolev_norm_real(f: &Field, s: f64) -> f64 {
    let grid = f.grid();
    let sum: f64 = f
        .spectrum()
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let w = if s == 0.0 { 1.0 } else { (1.0 + grid.xi_sq(idx)).powf(s) };
            w * c.norm_sqr()
        })
        .sum();
    (grid.area() * sum).sqrt()
}

pub fn vector_norm_sobolev(v: &VectorField, s: u32) -> f64 {
    norm_sobolev(&v.c[0], s).hypot(norm_sobolev(&v.c[1], s))
}

pub fn vector_norm_real(v: &VectorField, s: f64) -> f64 {
    sobolev_norm_real(&v.c[0], s).hypot(sobolev_norm_real(&v.c[1], s))
}

/// Discrete L2 inner product by trapezoid quadrature.
pub fn inner_l2(a: &Field, b: &Field) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * a.grid().cell_area()
}

/// `d f / d x_axis`.
pub fn partial(f: &Field, axis: usize) -> Field {
    let grid = f.grid().clone();
    let n2 = grid.n()[1];
    with_spectrum(f, |idx, c| {
        let m = if axis == 0 { idx / n2 } else { idx % n2 };
        c * Complex64::new(0.0, grid.derivative_wavenumber(axis, m))
    })
}

pub fn gradient(f: &Field) -> VectorField {
    VectorField {
        c: [partial(f, 0), partial(f, 1)],
    }
}

pub fn divergence(v: &VectorField) -> Field {
    partial(&v.c[0], 0).add(&partial(&v.c[1], 1))
}

pub fn curl(v: &VectorField) -> Field {
    partial(&v.c[1], 0).sub(&partial(&v.c[0], 1))
}

pub fn laplacian(f: &Field) -> Field {
    let grid = f.grid().clone();
    with_spectrum(f, |idx, c| c * (-grid.xi_sq(idx)))
}

/// Random real field with independent Gaussian coefficients of standard
/// deviation `(1 + |k|)^-decay` on the modes with `|k_i| <= max_index[i]`,
/// excluding the mean mode.
pub fn random_field<R: Rng + ?Sized>(
    grid: &Arc<Grid>,
    rng: &mut R,
    max_index: [usize; 2],
    decay: f64,
) -> Field {
    let [n1, n2] = grid.n();
    let kmax = [
        max_index[0].min(n1 / 2 - 1) as i64,
        max_index[1].min(n2 / 2 - 1) as i64,
    ];
    let mut spectrum = zero_spectrum(grid);
    for k1 in 0..=kmax[0] {
        for k2 in -kmax[1]..=kmax[1] {
            if k1 == 0 && k2 <= 0 {
                continue;
            }
            let std = (1.0 + ((k1 * k1 + k2 * k2) as f64).sqrt()).powf(-decay);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let c = Complex64::new(re, im) * std;
            let idx = k1.rem_euclid(n1 as i64) as usize * n2 + k2.rem_euclid(n2 as i64) as usize;
            spectrum[idx] = c;
            spectrum[grid.mirror(idx)] = c.conj();
        }
    }
    Field::from_spectrum(grid, spectrum)
}

/// Fresh spectral buffer for building fields mode by mode.
pub(crate) fn zero_spectrum(grid: &Arc<Grid>) -> Vec<Complex64> {
    vec![Complex64::default(); grid.len()]
}
