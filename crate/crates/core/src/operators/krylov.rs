//! Restarted GMRES on flat real vectors.

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresSettings {
    pub restart: usize,
    pub max_iter: usize,
    /// Relative residual target `||b - A x|| / ||b||`.
    pub tol: f64,
}

impl Default for GmresSettings {
    fn default() -> Self {
        Self {
            restart: 30,
            max_iter: 500,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual estimates, one per inner iteration plus restarts.
    pub history: Vec<f64>,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` with `A` given as a closure. `x0` is the initial guess.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    x0: Option<Vec<f64>>,
    settings: &GmresSettings,
) -> Result<GmresOutcome> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.unwrap_or_else(|| vec![0.0; n]);
    let mut history = Vec::new();
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            history: vec![0.0],
            converged: true,
        });
    }
    let m = settings.restart.max(1);
    let mut iterations = 0;
    loop {
        let r: Vec<f64> = if x.iter().all(|&v| v == 0.0) {
            b.to_vec()
        } else {
            let ax = apply(&x)?;
            b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
        };
        let beta = norm(&r);
        history.push(beta / bnorm);
        if beta / bnorm <= settings.tol || iterations >= settings.max_iter || beta == 0.0 {
            let converged = beta / bnorm <= settings.tol;
            return Ok(GmresOutcome {
                x,
                iterations,
                history,
                converged,
            });
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        for j in 0..m {
            let mut w = apply(&basis[j])?;
            iterations += 1;
            // modified Gram-Schmidt, applied twice for stability
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[i][j] += c;
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let wn = norm(&w);
            h[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let rho = h[j][j].hypot(h[j + 1][j]);
            if rho == 0.0 {
                k = j;
                break;
            }
            cs[j] = h[j][j] / rho;
            sn[j] = h[j + 1][j] / rho;
            h[j][j] = rho;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            k = j + 1;
            let rel = g[j + 1].abs() / bnorm;
            history.push(rel);
            if rel <= settings.tol || iterations >= settings.max_iter || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution on the k x k triangle
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|l| h[i][l] * y[l]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += yi * vi);
        }
    }
}
