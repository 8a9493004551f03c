//! Checks built from the balance laws satisfied by solutions: power
//! balance, continuity, the vanishing mean log-flux, norm reports and
//! translation symmetry.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ForcingSpec, ScalarData, TensorData, VectorData};
use crate::operators::{Problem, State};
use crate::spectral::{
    self, dealias, divergence, gradient, norm_sobolev, partial, sobolev_norm_real, Field,
    VectorField,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerBalance {
    /// Drag plus viscous dissipation.
    pub lhs: f64,
    /// Work of the applied force.
    pub rhs: f64,
    pub relerr: f64,
}

/// `int A|u|^2 + h (|grad u + grad u^t|^2 / 2 + 2 (div u)^2)` against
/// `int Phi . u`, both by the trapezoid rule.
pub fn power_balance(s: &State, beta: &Field, phi: &VectorField, a: f64) -> PowerBalance {
    let h = s.depth(beta);
    let d11 = partial(&s.u.c[0], 0);
    let d12 = partial(&s.u.c[0], 1);
    let d21 = partial(&s.u.c[1], 0);
    let d22 = partial(&s.u.c[1], 1);
    let n = s.grid().len();
    let (u1, u2) = (s.u.c[0].values(), s.u.c[1].values());
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for j in 0..n {
        let (a11, a12, a21, a22) = (d11.values()[j], d12.values()[j], d21.values()[j], d22.values()[j]);
        let sym = 4.0 * a11 * a11 + 4.0 * a22 * a22 + 2.0 * (a12 + a21).powi(2);
        let div = a11 + a22;
        lhs += a * (u1[j] * u1[j] + u2[j] * u2[j]) + h.values()[j] * (0.5 * sym + 2.0 * div * div);
        rhs += phi.c[0].values()[j] * u1[j] + phi.c[1].values()[j] * u2[j];
    }
    let w = s.grid().cell_area();
    let (lhs, rhs) = (lhs * w, rhs * w);
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    PowerBalance {
        lhs,
        rhs,
        relerr: if lhs == rhs { 0.0 } else { (lhs - rhs).abs() / scale },
    }
}

/// Applied force `Phi = kappa h F` seen by the discrete equations, with the
/// truncated forcing.
pub fn applied_force(problem: &Problem, s: &State, kappa: f64) -> Result<VectorField> {
    let h = problem.depth(&s.eta)?;
    let f = problem.forcing(&s.eta)?.map_components(dealias);
    Ok(VectorField {
        c: [0, 1].map(|i| f.c[i].zip_map(&h, |f, h| kappa * f * h)),
    })
}

/// `|| div((1 + beta + eta) u) ||_{L2}` with the product truncated first.
pub fn continuity_residual(s: &State, beta: &Field) -> f64 {
    let h = s.depth(beta);
    let flux = s.u.mul_scalar(&h);
    norm_sobolev(&divergence(&flux), 0)
}

/// Mean of `u . grad log(1 + beta + eta)`.
pub fn mean_log_flux(s: &State, beta: &Field) -> f64 {
    let h = s.depth(beta);
    let grad_h = gradient(&h);
    let glh = VectorField {
        c: [0, 1].map(|i| grad_h.c[i].zip_map(&h, |d, h| d / h)),
    };
    s.u.dot(&glh).mean()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormTable {
    pub u_h1: f64,
    pub u_h2: f64,
    pub eta_h2: f64,
    pub eta_h3: f64,
    pub phi_l2: f64,
    pub phi_h_minus1: f64,
    pub eta_inf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub power: PowerBalance,
    pub continuity_residual: f64,
    pub mean_log_flux: f64,
    pub norms: NormTable,
    pub depth_min: f64,
    /// `||u, eta||_{H1 x H2} / (||Phi||_{H-1} <||Phi||_{H-1}>)`; absent when
    /// `Phi = 0`.
    pub apriori_ratio: Option<f64>,
}

pub fn apriori_report(s: &State, beta: &Field, phi: &VectorField, a: f64) -> DiagnosticsReport {
    let phi_m1 = spectral::vector_norm_real(phi, -1.0);
    let norms = NormTable {
        u_h1: spectral::vector_norm_sobolev(&s.u, 1),
        u_h2: spectral::vector_norm_sobolev(&s.u, 2),
        eta_h2: norm_sobolev(&s.eta, 2),
        eta_h3: norm_sobolev(&s.eta, 3),
        phi_l2: spectral::vector_norm_sobolev(phi, 0),
        phi_h_minus1: phi_m1,
        eta_inf: s.eta.max_abs(),
    };
    let apriori_ratio = (phi_m1 > 0.0).then(|| {
        s.norm_h1h2() / (phi_m1 * (1.0 + phi_m1 * phi_m1).sqrt())
    });
    DiagnosticsReport {
        power: power_balance(s, beta, phi, a),
        continuity_residual: continuity_residual(s, beta),
        mean_log_flux: mean_log_flux(s, beta),
        norms,
        depth_min: s.depth(beta).min(),
        apriori_ratio,
    }
}

/// Full report for a state of `problem` at forcing strength `kappa`.
pub fn report(problem: &Problem, s: &State, kappa: f64) -> Result<DiagnosticsReport> {
    let phi = applied_force(problem, s, kappa)?;
    Ok(apriori_report(s, problem.beta(), &phi, problem.params.a))
}

/// Relative size of the modes of `f` that vary along `axis`.
fn dependence(f: &Field, axis: usize) -> f64 {
    let grid = f.grid();
    let n2 = grid.n()[1];
    let varying: f64 = f
        .spectrum()
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let m = if axis == 0 { idx / n2 } else { idx % n2 };
            m != 0
        })
        .map(|(_, c)| c.norm_sqr())
        .sum();
    let total = norm_sobolev(f, 0) / grid.area().sqrt();
    varying.sqrt() / total.max(f64::MIN_POSITIVE)
}

fn spec_fields(spec: &ForcingSpec) -> Vec<Field> {
    let mut out = Vec::new();
    if let VectorData::Polynomial(c) = &spec.phi {
        out.extend(c.iter().flat_map(|v| v.c.clone()));
    }
    if let ScalarData::Polynomial(c) = &spec.psi {
        out.extend(c.iter().cloned());
    }
    if let TensorData::Polynomial(c) = &spec.tau {
        out.extend(c.iter().flat_map(|t| [t.xx.clone(), t.xy.clone(), t.yy.clone()]));
    }
    out
}

/// `||d_axis u||_{L2} + ||d_axis eta||_{L2}` for a problem whose data does
/// not depend on `x_axis`.
pub fn symmetry_check(s: &State, axis: usize, problem: &Problem) -> Result<f64> {
    if axis > 1 {
        return Err(Error::BadSpec(format!("axis {axis} out of range")));
    }
    let mut inputs = vec![("beta".to_string(), problem.beta().clone())];
    inputs.extend(
        spec_fields(&problem.forcing)
            .into_iter()
            .enumerate()
            .map(|(i, f)| (format!("forcing coefficient {i}"), f)),
    );
    for (name, f) in &inputs {
        let d = dependence(f, axis);
        if d > 1e-12 {
            return Err(Error::PreconditionViolation(format!(
                "{name} depends on x{} (relative size {d:.3e})",
                axis + 1
            )));
        }
    }
    let du = s.u.map_components(|c| partial(c, axis));
    Ok(spectral::vector_norm_sobolev(&du, 0) + norm_sobolev(&partial(&s.eta, axis), 0))
}

/// `||f||_{H^-1}`, exposed for reports on scalar fields.
pub fn norm_h_minus1(f: &Field) -> f64 {
    sobolev_norm_real(f, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_bathymetry, BathymetrySpec, Params};
    use crate::spectral::{random_field, Grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn trivial_state_is_balanced() {
        let g = Grid::new([1.0, 1.0], [16, 16]).unwrap();
        let s = State::zeros(&g);
        let z = Field::zeros(&g);
        let pb = power_balance(&s, &z, &VectorField::zeros(&g), 1.0);
        assert_eq!((pb.lhs, pb.rhs, pb.relerr), (0.0, 0.0, 0.0));
        assert_eq!(continuity_residual(&s, &z), 0.0);
        let r = apriori_report(&s, &z, &VectorField::zeros(&g), 1.0);
        assert!(r.apriori_ratio.is_none());
        assert_eq!(r.norms.u_h2, 0.0);
    }

    #[test]
    fn random_fields_fail_power_balance() {
        let g = Grid::new([1.0, 1.0], [32, 32]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = VectorField {
            c: [
                random_field(&g, &mut rng, [6, 6], 2.0),
                random_field(&g, &mut rng, [6, 6], 2.0),
            ],
        };
        let eta = random_field(&g, &mut rng, [6, 6], 2.0).scale(0.1);
        let s = State::new(u, eta).unwrap();
        let pb = power_balance(&s, &Field::zeros(&g), &VectorField::zeros(&g), 1.0);
        assert!(pb.relerr > 0.5);
    }

    #[test]
    fn divergence_free_flow_has_no_continuity_residual() {
        let g = Grid::new([1.0, 1.0], [32, 32]).unwrap();
        let u = VectorField {
            c: [
                Field::from_fn(&g, |x| (2.0 * PI * x[1]).sin()),
                Field::from_fn(&g, |x| (2.0 * PI * x[0]).cos()),
            ],
        };
        let s = State::new(u, Field::zeros(&g)).unwrap();
        assert!(continuity_residual(&s, &Field::zeros(&g)) <= 1e-12);
    }

    #[test]
    fn symmetry_guard() {
        let g = Grid::new([1.0, 1.0], [16, 16]).unwrap();
        let ridge = make_bathymetry(
            &BathymetrySpec::HalfEllipse {
                center: [0.5, 0.5],
                semi_axes: [0.25, f64::INFINITY],
                amplitude: 1.0,
                invert: false,
                smoothing: None,
            },
            &g,
        )
        .unwrap();
        let p = Params::new(1.0, 1.0).unwrap();
        let prob = Problem::new(p, ridge, ForcingSpec::gravity([1.0, 0.0])).unwrap();
        assert_eq!(symmetry_check(&State::zeros(&g), 1, &prob).unwrap(), 0.0);
        let bump = Field::from_fn(&g, |x| 1.0 + (2.0 * PI * x[1]).cos());
        let prob = Problem::new(p, bump, ForcingSpec::gravity([1.0, 0.0])).unwrap();
        assert!(matches!(
            symmetry_check(&State::zeros(&g), 1, &prob),
            Err(Error::PreconditionViolation(_))
        ));
    }
}
