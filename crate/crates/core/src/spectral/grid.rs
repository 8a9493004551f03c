use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform tensor-product grid on the torus `(L1 T) x (L2 T)`.
///
/// Samples are stored row-major: index `j1 * n2 + j2` holds the value at
/// `x = (j1 L1 / n1, j2 L2 / n2)`. Spectral storage uses the same layout with
/// the usual FFT index order, so storage index `m` along an axis carries the
/// integer wavenumber `m` for `m < n/2` and `m - n` otherwise. The Nyquist
/// index `n/2` therefore carries `k = -n/2`.
pub struct Grid {
    periods: [f64; 2],
    n: [usize; 2],
    k: [Vec<i64>; 2],
    xi: [Vec<f64>; 2],
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("periods", &self.periods)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.periods == other.periods && self.n == other.n
    }
}

impl Grid {
    pub const MIN_POINTS: usize = 8;

    pub fn new(periods: [f64; 2], n: [usize; 2]) -> Result<Arc<Self>> {
        for (&l, &m) in periods.iter().zip(&n) {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::BadSpec(format!("period {l} must be positive")));
            }
            if m < Self::MIN_POINTS || m % 2 != 0 {
                return Err(Error::BadSpec(format!(
                    "resolution {m} must be even and at least {}",
                    Self::MIN_POINTS
                )));
            }
        }
        let mut planner = FftPlanner::<f64>::new();
        let axis_k = |m: usize| -> Vec<i64> {
            (0..m)
                .map(|i| if i < m / 2 { i as i64 } else { i as i64 - m as i64 })
                .collect()
        };
        let k = [axis_k(n[0]), axis_k(n[1])];
        let xi = [
            k[0].iter().map(|&k| 2.0 * PI * k as f64 / periods[0]).collect(),
            k[1].iter().map(|&k| 2.0 * PI * k as f64 / periods[1]).collect(),
        ];
        Ok(Arc::new(Self {
            periods,
            n,
            k,
            xi,
            fwd: [planner.plan_fft_forward(n[0]), planner.plan_fft_forward(n[1])],
            inv: [planner.plan_fft_inverse(n[0]), planner.plan_fft_inverse(n[1])],
        }))
    }

    pub fn periods(&self) -> [f64; 2] {
        self.periods
    }

    pub fn n(&self) -> [usize; 2] {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn area(&self) -> f64 {
        self.periods[0] * self.periods[1]
    }

    /// Area weight of one sample in the trapezoid rule.
    pub fn cell_area(&self) -> f64 {
        self.area() / self.len() as f64
    }

    pub fn point(&self, j1: usize, j2: usize) -> [f64; 2] {
        [
            j1 as f64 * self.periods[0] / self.n[0] as f64,
            j2 as f64 * self.periods[1] / self.n[1] as f64,
        ]
    }

    /// Sample points in storage order.
    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.n[0]).flat_map(move |j1| (0..self.n[1]).map(move |j2| self.point(j1, j2)))
    }

    /// Integer wavenumber at storage index `m` along `axis`.
    pub fn wavenumber_index(&self, axis: usize, m: usize) -> i64 {
        self.k[axis][m]
    }

    /// Physical wavenumber `2 pi k / L` at storage index `m` along `axis`.
    pub fn wavenumber(&self, axis: usize, m: usize) -> f64 {
        self.xi[axis][m]
    }

    pub fn is_nyquist(&self, axis: usize, m: usize) -> bool {
        m == self.n[axis] / 2
    }

    /// Wavenumber used by first-derivative symbols: zero on the Nyquist index.
    pub fn derivative_wavenumber(&self, axis: usize, m: usize) -> f64 {
        if self.is_nyquist(axis, m) {
            0.0
        } else {
            self.xi[axis][m]
        }
    }

    /// `|xi|^2` at the flat spectral index.
    pub fn xi_sq(&self, idx: usize) -> f64 {
        let (m1, m2) = (idx / self.n[1], idx % self.n[1]);
        self.xi[0][m1].powi(2) + self.xi[1][m2].powi(2)
    }

    /// Whether the mode at flat spectral index survives the 2/3 rule.
    pub fn in_band(&self, idx: usize) -> bool {
        let (m1, m2) = (idx / self.n[1], idx % self.n[1]);
        3 * self.k[0][m1].unsigned_abs() as usize <= self.n[0]
            && 3 * self.k[1][m2].unsigned_abs() as usize <= self.n[1]
    }

    /// Flat storage index of the mode `-k` for the mode at `idx`.
    pub fn mirror(&self, idx: usize) -> usize {
        let (m1, m2) = (idx / self.n[1], idx % self.n[1]);
        let r1 = (self.n[0] - m1) % self.n[0];
        let r2 = (self.n[1] - m2) % self.n[1];
        r1 * self.n[1] + r2
    }

    /// Forward transform normalized so that `f = sum_k c_k exp(i xi_k . x)`.
    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.fwd);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    /// Inverse of [`Grid::forward`]; returns the real part.
    pub(crate) fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut data = spectrum.to_vec();
        self.transform(&mut data, &self.inv);
        data.into_iter().map(|c| c.re).collect()
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 2]) {
        let [n1, n2] = self.n;
        // rows are contiguous
        plans[1].process(data);
        let mut column = vec![Complex64::default(); n1];
        for j2 in 0..n2 {
            for j1 in 0..n1 {
                column[j1] = data[j1 * n2 + j2];
            }
            plans[0].process(&mut column);
            for j1 in 0..n1 {
                data[j1 * n2 + j2] = column[j1];
            }
        }
    }
}
