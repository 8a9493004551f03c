use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use super::Grid;
use crate::error::{Error, Result};

/// Real scalar field sampled on a [`Grid`].
///
/// Fields are immutable. The spectral coefficients are computed on first use
/// and cached; fields built from coefficients keep those coefficients verbatim
/// (after conjugate symmetrization), so exact spectral facts such as a zero
/// mean mode survive.
#[derive(Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Arc<[f64]>,
    spectrum: OnceLock<Arc<[Complex64]>>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("min", &self.min())
            .field("max", &self.max())
            .finish()
    }
}

impl Field {
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::BadSpec(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::BadSpec(format!("non-finite sample {bad}")));
        }
        Ok(Self::from_values_unchecked(grid, values))
    }

    pub(crate) fn from_values_unchecked(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        Self {
            grid: grid.clone(),
            values: values.into(),
            spectrum: OnceLock::new(),
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self::from_values_unchecked(grid, grid.points().map(f).collect())
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        let mut spectrum = vec![Complex64::default(); grid.len()];
        spectrum[0] = Complex64::new(c, 0.0);
        let field = Self::from_values_unchecked(grid, vec![c; grid.len()]);
        let _ = field.spectrum.set(spectrum.into());
        field
    }

    /// Builds a real field from spectral coefficients. The coefficients are
    /// projected onto the conjugate-symmetric subspace first.
    pub fn from_spectrum(grid: &Arc<Grid>, mut spectrum: Vec<Complex64>) -> Self {
        assert_eq!(spectrum.len(), grid.len(), "spectrum length mismatch");
        for idx in 0..spectrum.len() {
            let mirror = grid.mirror(idx);
            if mirror < idx {
                continue;
            }
            if mirror == idx {
                spectrum[idx].im = 0.0;
            } else {
                let avg = 0.5 * (spectrum[idx] + spectrum[mirror].conj());
                spectrum[idx] = avg;
                spectrum[mirror] = avg.conj();
            }
        }
        let values = grid.inverse(&spectrum);
        let field = Self::from_values_unchecked(grid, values);
        let _ = field.spectrum.set(spectrum.into());
        field
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Spectral coefficients `c_k` with `f(x) = sum_k c_k exp(i xi_k . x)`.
    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum
            .get_or_init(|| self.grid.forward(&self.values).into())
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid rule on the torus.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn mean(&self) -> f64 {
        self.spectrum()[0].re
    }

    /// Discrete L2 norm of the samples by trapezoid quadrature.
    pub fn l2_quadrature(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_values_unchecked(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Samplewise combination without dealiasing.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert!(self.same_grid(other), "grid mismatch");
        Field::from_values_unchecked(
            &self.grid,
            self.values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Linear combination `a * self + b * other`, carried out on the cached
    /// spectra when both exist so exact spectral zeros are preserved.
    pub fn axpby(&self, a: f64, other: &Field, b: f64) -> Field {
        assert!(self.same_grid(other), "grid mismatch");
        match (self.spectrum.get(), other.spectrum.get()) {
            (Some(s), Some(o)) => {
                let spectrum: Vec<Complex64> =
                    s.iter().zip(o.iter()).map(|(x, y)| x * a + y * b).collect();
                let values = self
                    .values
                    .iter()
                    .zip(other.values.iter())
                    .map(|(x, y)| a * x + b * y)
                    .collect();
                let field = Field::from_values_unchecked(&self.grid, values);
                let _ = field.spectrum.set(spectrum.into());
                field
            }
            _ => self.zip_map(other, |x, y| a * x + b * y),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.axpby(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.axpby(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> Field {
        let field = self.map(|v| a * v);
        if let Some(s) = self.spectrum.get() {
            let scaled: Vec<Complex64> = s.iter().map(|c| c * a).collect();
            let _ = field.spectrum.set(scaled.into());
        }
        field
    }

    pub fn add_scalar(&self, c: f64) -> Field {
        let field = self.map(|v| v + c);
        if let Some(s) = self.spectrum.get() {
            let mut shifted = s.to_vec();
            shifted[0] += c;
            let _ = field.spectrum.set(shifted.into());
        }
        field
    }

    /// Samplewise product followed by the 2/3 rule.
    pub fn mul(&self, other: &Field) -> Field {
        super::dealias(&self.mul_raw(other))
    }

    /// Samplewise product, no dealiasing.
    pub fn mul_raw(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Pair of scalar fields on one grid.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub c: [Field; 2],
}

impl VectorField {
    pub fn new(c1: Field, c2: Field) -> Result<Self> {
        if !c1.same_grid(&c2) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { c: [c1, c2] })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            c: [Field::zeros(grid), Field::zeros(grid)],
        }
    }

    pub fn constant(grid: &Arc<Grid>, v: [f64; 2]) -> Self {
        Self {
            c: [Field::constant(grid, v[0]), Field::constant(grid, v[1])],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.c[0].grid()
    }

    pub fn map_components(&self, f: impl Fn(&Field) -> Field) -> Self {
        Self {
            c: [f(&self.c[0]), f(&self.c[1])],
        }
    }

    pub fn zip_components(&self, other: &VectorField, f: impl Fn(&Field, &Field) -> Field) -> Self {
        Self {
            c: [f(&self.c[0], &other.c[0]), f(&self.c[1], &other.c[1])],
        }
    }

    pub fn add(&self, other: &VectorField) -> Self {
        self.zip_components(other, Field::add)
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        self.zip_components(other, Field::sub)
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map_components(|f| f.scale(a))
    }

    pub fn axpby(&self, a: f64, other: &VectorField, b: f64) -> Self {
        self.zip_components(other, |x, y| x.axpby(a, y, b))
    }

    /// Componentwise product with a scalar field, dealiased.
    pub fn mul_scalar(&self, s: &Field) -> Self {
        self.map_components(|f| f.mul(s))
    }

    /// Dealiased pointwise dot product.
    pub fn dot(&self, other: &VectorField) -> Field {
        self.c[0].mul(&other.c[0]).add(&self.c[1].mul(&other.c[1]))
    }

    pub fn max_abs(&self) -> f64 {
        self.c[0].max_abs().max(self.c[1].max_abs())
    }
}

/// Symmetric 2x2 tensor field, stored as its three independent entries.
#[derive(Clone, Debug)]
pub struct SymTensorField {
    pub xx: Field,
    pub xy: Field,
    pub yy: Field,
}

impl SymTensorField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            xx: Field::zeros(grid),
            xy: Field::zeros(grid),
            yy: Field::zeros(grid),
        }
    }

    pub fn constant(grid: &Arc<Grid>, m: [f64; 3]) -> Self {
        Self {
            xx: Field::constant(grid, m[0]),
            xy: Field::constant(grid, m[1]),
            yy: Field::constant(grid, m[2]),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> &Field {
        match (i, j) {
            (0, 0) => &self.xx,
            (1, 1) => &self.yy,
            _ => &self.xy,
        }
    }

    /// Dealiased matrix-vector product `T v`.
    pub fn apply(&self, v: &VectorField) -> VectorField {
        VectorField {
            c: [
                self.xx.mul(&v.c[0]).add(&self.xy.mul(&v.c[1])),
                self.xy.mul(&v.c[0]).add(&self.yy.mul(&v.c[1])),
            ],
        }
    }

    pub fn map_entries(&self, f: impl Fn(&Field) -> Field) -> Self {
        Self {
            xx: f(&self.xx),
            xy: f(&self.xy),
            yy: f(&self.yy),
        }
    }

    pub fn zip_entries(&self, other: &SymTensorField, f: impl Fn(&Field, &Field) -> Field) -> Self {
        Self {
            xx: f(&self.xx, &other.xx),
            xy: f(&self.xy, &other.xy),
            yy: f(&self.yy, &other.yy),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.max_abs().max(self.xy.max_abs()).max(self.yy.max_abs())
    }
}
