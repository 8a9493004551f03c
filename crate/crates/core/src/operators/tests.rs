use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{BathymetrySpec, make_bathymetry};
use crate::spectral::random_field;

fn unit(n: usize) -> Arc<Grid> {
    Grid::new([1.0, 1.0], [n, n]).unwrap()
}

fn params(a: f64, g: f64) -> Params {
    Params { a, g, kappa: 0.0 }
}

fn close(a: &Field, b: &Field, tol: f64) {
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

fn random_state(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, amp: f64) -> State {
    let k = [grid.n()[0] / 3, grid.n()[1] / 3];
    let f = |rng: &mut ChaCha8Rng| random_field(grid, rng, k, 2.5);
    let u = VectorField {
        c: [f(rng).scale(amp), f(rng).scale(amp)],
    };
    let eta = f(rng);
    let eta = eta.scale(amp / eta.max_abs());
    State::new(u, eta).unwrap()
}

fn random_rhs(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> RhsPair {
    let k = [grid.n()[0] / 3, grid.n()[1] / 3];
    let g = random_field(grid, rng, k, 2.0);
    let phi = VectorField {
        c: [random_field(grid, rng, k, 1.0), random_field(grid, rng, k, 1.0)],
    };
    RhsPair::new(g, phi).unwrap()
}

fn ellipse(grid: &Arc<Grid>) -> Field {
    let spec = BathymetrySpec::HalfEllipse {
        center: [0.5, 0.5],
        semi_axes: [0.25, 0.15],
        amplitude: 1.0,
        invert: false,
        smoothing: None,
    };
    make_bathymetry(&spec, grid).unwrap()
}

#[test]
fn stress_of_shear_flow() {
    let g = unit(32);
    assert_eq!(viscous_stress(&VectorField::zeros(&g)).max_abs(), 0.0);
    assert!(viscous_stress(&VectorField::constant(&g, [1.0, -2.0])).max_abs() < 1e-14);
    let u = VectorField {
        c: [Field::from_fn(&g, |x| (2.0 * PI * x[1]).sin()), Field::zeros(&g)],
    };
    let s = viscous_stress(&u);
    assert!(s.xx.max_abs() < 1e-12 && s.yy.max_abs() < 1e-12);
    close(&s.xy, &Field::from_fn(&g, |x| 2.0 * PI * (2.0 * PI * x[1]).cos()), 1e-11);
}

#[test]
fn principal_inverse_examples() {
    let g = unit(32);
    let p = params(1.0, 1.0);
    let zero = invert_principal(&RhsPair::zeros(&g), &p).unwrap();
    assert_eq!(zero.norm_h1h2(), 0.0);

    let grad_forcing = RhsPair::new(
        Field::zeros(&g),
        VectorField {
            c: [Field::from_fn(&g, |x| (2.0 * PI * x[0]).cos()), Field::zeros(&g)],
        },
    )
    .unwrap();
    let s = invert_principal(&grad_forcing, &p).unwrap();
    assert!(s.u.max_abs() < 1e-15);
    let c = 1.0 / (2.0 * PI * (1.0 + 4.0 * PI * PI));
    close(&s.eta, &Field::from_fn(&g, |x| c * (2.0 * PI * x[0]).sin()), 1e-15);

    let shear = RhsPair::new(
        Field::zeros(&g),
        VectorField {
            c: [Field::from_fn(&g, |x| (2.0 * PI * x[1]).sin()), Field::zeros(&g)],
        },
    )
    .unwrap();
    let s = invert_principal(&shear, &p).unwrap();
    assert!(s.eta.max_abs() < 1e-15);
    let c = 1.0 / (1.0 + 4.0 * PI * PI);
    close(&s.u.c[0], &Field::from_fn(&g, |x| c * (2.0 * PI * x[1]).sin()), 1e-15);
    assert!(s.u.c[1].max_abs() < 1e-15);
}

#[test]
fn principal_inverse_satisfies_both_equations() {
    let grid = Grid::new([1.0, 2.0], [24, 32]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = params(0.7, 0.3);
    let r = random_rhs(&grid, &mut rng);
    let s = invert_principal(&r, &p).unwrap();
    let div = divergence(&s.u);
    close(&div, &r.g, 1e-12 * norm_sobolev(&r.g, 0).max(1.0));
    let ge = gradient(&s.eta);
    let cap = ge.axpby(p.g, &ge.map_components(spectral::laplacian), -1.0);
    let lhs = s
        .u
        .scale(p.a)
        .sub(&div_viscous_stress(&s.u))
        .add(&cap);
    close(&lhs.c[0], &r.phi.c[0], 1e-11);
    close(&lhs.c[1], &r.phi.c[1], 1e-11);
    assert_eq!(s.eta.spectrum()[0], Complex64::default());
}

#[test]
fn principal_round_trips() {
    let grid = unit(32);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [params(1.0, 0.0), params(1.0, 1.0), params(0.0145, 0.0372)] {
        let r = random_rhs(&grid, &mut rng);
        let back = apply_principal(&invert_principal(&r, &p).unwrap(), &p);
        assert!(back.sub(&r).norm() <= 1e-11 * r.norm());
        let s = random_state(&grid, &mut rng, 0.3);
        let again = invert_principal(&apply_principal(&s, &p), &p).unwrap();
        assert!(again.sub(&s).norm_h1h2() <= 1e-11 * s.norm_h1h2());
    }
}

#[test]
fn principal_inverse_rejects_mean() {
    let g = unit(16);
    let r = RhsPair {
        g: Field::constant(&g, 1.0),
        phi: VectorField::zeros(&g),
    };
    assert!(matches!(
        invert_principal(&r, &params(1.0, 1.0)),
        Err(Error::SingularMode { .. })
    ));
}

#[test]
fn remainder_examples() {
    let g = unit(64);
    let p = params(1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_state(&g, &mut rng, 0.2);
    let flat = apply_bathymetric_remainder(&s, &Field::zeros(&g), &p).unwrap();
    assert_eq!(flat.norm(), 0.0);
    let none = apply_bathymetric_remainder(&State::zeros(&g), &ellipse(&g), &p).unwrap();
    assert_eq!(none.norm(), 0.0);

    let beta = Field::from_fn(&g, |x| 1.0 + (2.0 * PI * x[0]).cos());
    let s = State::new(VectorField::constant(&g, [1.0, 0.0]), Field::zeros(&g)).unwrap();
    let r = apply_bathymetric_remainder(&s, &beta, &p).unwrap();
    let d_log = Field::from_fn(&g, |x| {
        let c = (2.0 * PI * x[0]).cos();
        -2.0 * PI * (2.0 * PI * x[0]).sin() / (2.0 + c)
    });
    close(&r.g, &project_mean_zero(&d_log), 1e-10);
    let drag = Field::from_fn(&g, |x| {
        let c = (2.0 * PI * x[0]).cos();
        -(1.0 + c) / (2.0 + c)
    });
    close(&r.phi.c[0], &drag, 1e-10);
    assert!(r.phi.c[1].max_abs() < 1e-12);
    assert!(r.g.mean().abs() == 0.0);
}

#[test]
fn nonlinearity_examples() {
    let g = unit(64);
    let p = params(1.0, 1.0);
    let beta = Field::zeros(&g);
    let zero = apply_nonlinearity(&State::zeros(&g), &beta, &p).unwrap();
    assert_eq!(zero.norm(), 0.0);
    let c = State::new(VectorField::constant(&g, [0.4, -1.0]), Field::zeros(&g)).unwrap();
    assert!(apply_nonlinearity(&c, &beta, &p).unwrap().norm() < 1e-13);

    let eps = 0.2;
    let u = VectorField {
        c: [Field::from_fn(&g, |x| (2.0 * PI * x[1]).sin()), Field::zeros(&g)],
    };
    let eta = Field::from_fn(&g, |x| 0.5 * eps * (2.0 * PI * x[0]).cos());
    let s = State::new(u, eta).unwrap();
    let n = apply_nonlinearity(&s, &beta, &p).unwrap();
    // pointwise: gr = d1 eta / (1 + eta) e1, S u has only the xy entry
    let pts: Vec<[f64; 2]> = g.points().collect();
    let gr1: Vec<f64> = pts
        .iter()
        .map(|x| {
            let e = 0.5 * eps * (2.0 * PI * x[0]).cos();
            let de = -0.5 * eps * 2.0 * PI * (2.0 * PI * x[0]).sin();
            de / (1.0 + e)
        })
        .collect();
    let mut scalar = Vec::new();
    let mut v1 = Vec::new();
    let mut v2 = Vec::new();
    for (x, gr) in pts.iter().zip(&gr1) {
        let u1 = (2.0 * PI * x[1]).sin();
        let e = 0.5 * eps * (2.0 * PI * x[0]).cos();
        let sxy = 2.0 * PI * (2.0 * PI * x[1]).cos();
        scalar.push(u1 * gr);
        v1.push(-p.a * e / (1.0 + e) * u1);
        v2.push(-sxy * gr);
    }
    let scalar = project_mean_zero(&Field::from_values(&g, scalar).unwrap());
    close(&n.g, &scalar, 1e-10);
    close(&n.phi.c[0], &Field::from_values(&g, v1).unwrap(), 1e-10);
    close(&n.phi.c[1], &Field::from_values(&g, v2).unwrap(), 1e-10);
}

#[test]
fn nonlinearity_rejects_dry_points() {
    let g = unit(16);
    let eta = Field::from_fn(&g, |x| -1.2 * (2.0 * PI * x[0]).cos());
    let s = State::new(VectorField::zeros(&g), eta).unwrap();
    let res = apply_nonlinearity(&s, &Field::zeros(&g), &params(1.0, 1.0));
    assert!(matches!(res, Err(Error::DepthViolation { .. })));
}

#[test]
fn nonlinearity_is_quadratic_at_zero() {
    let g = unit(32);
    let beta = ellipse(&g);
    let p = params(1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let s = random_state(&g, &mut rng, 1.0);
    let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&e| apply_nonlinearity(&s.scale(e), &beta, &p).unwrap().norm() / e)
        .collect();
    // each decade shrinks the ratio tenfold: order eps^2
    for w in ratios.windows(2) {
        let order = (w[0] / w[1]).log10();
        assert!((order - 1.0).abs() < 0.05, "{ratios:?}");
    }
}

#[test]
fn forcing_examples() {
    let g = unit(48);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let beta = ellipse(&g);
    let eta = random_field(&g, &mut rng, [8, 8], 2.0);
    let eta = eta.scale(0.3 / eta.max_abs());
    let f = forcing_map(&eta, &beta, &ForcingSpec::gravity([1.0, 0.0])).unwrap();
    assert!(f.c[0].values().iter().all(|v| (v - 1.0).abs() < 1e-15));
    assert_eq!(f.c[1].max_abs(), 0.0);

    let zero = Field::zeros(&g);
    let f = forcing_map(&zero, &zero, &ForcingSpec::constant([0.5, 2.0])).unwrap();
    assert!(f.c[0].values().iter().all(|&v| v == 0.5));
    assert!(f.c[1].values().iter().all(|&v| v == 2.0));

    // pressure bump, low modes so the product h p is resolved
    let pbump = Field::from_fn(&g, |x| (2.0 * PI * (2.0 * x[0] - x[1])).cos());
    let low_beta = Field::from_fn(&g, |x| 0.5 * (1.0 + (2.0 * PI * x[1]).sin()));
    let f = forcing_map(&eta, &low_beta, &ForcingSpec::pressure_bump(pbump.clone())).unwrap();
    let h = low_beta.zip_map(&eta, |b, e| 1.0 + b + e);
    let hp = h.mul_raw(&pbump);
    let grad = gradient(&hp);
    for i in 0..2 {
        close(&f.c[i], &grad.c[i].zip_map(&h, |d, h| d / h), 1e-10);
    }
}

#[test]
fn residual_examples() {
    let g = unit(32);
    let beta = ellipse(&g);
    let p = params(1.0, 1.0);
    let grav = ForcingSpec::gravity([1.0, 0.0]);
    let r = residual_full(&State::zeros(&g), 0.0, &beta, &grav, &p).unwrap();
    assert_eq!(r.norm(), 0.0);
    let r = residual_full(&State::zeros(&g), 1.0, &beta, &grav, &p).unwrap();
    assert_eq!(r.g.max_abs(), 0.0);
    assert!(r.phi.c[0].values().iter().all(|v| (v + 1.0).abs() < 1e-14));
    assert!(r.phi.c[1].max_abs() < 1e-15);
}

#[test]
fn decomposition_matches_direct_form() {
    let g = Grid::new([1.0, 1.5], [32, 48]).unwrap();
    let beta = ellipse(&g);
    let prob = Problem::new(params(0.3, 0.8), beta, ForcingSpec::gravity([0.6, 0.8])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5 {
        let s = random_state(&g, &mut rng, 0.5);
        let a = prob.residual(&s, 2.0).unwrap();
        let b = prob.residual_direct(&s, 2.0).unwrap();
        assert!(a.sub(&b).norm() <= 1e-9 * b.norm(), "{}", a.sub(&b).norm() / b.norm());
    }
}

#[test]
fn remainder_and_nonlinearity_have_mean_zero_scalar_parts() {
    let g = unit(32);
    let prob = Problem::new(params(1.0, 1.0), ellipse(&g), ForcingSpec::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = random_state(&g, &mut rng, 0.4);
    assert_eq!(prob.remainder(&s).g.spectrum()[0], Complex64::default());
    assert_eq!(prob.nonlinearity(&s).unwrap().g.spectrum()[0], Complex64::default());
}

#[test]
fn linear_solve_examples() {
    let g = unit(32);
    let p = params(1.0, 1.0);
    let beta = ellipse(&g);
    let zero = solve_linear(&RhsPair::zeros(&g), &beta, &p).unwrap();
    assert_eq!(zero.state.norm_h1h2(), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let r = random_rhs(&g, &mut rng);
    let flat = solve_linear(&r, &Field::zeros(&g), &p).unwrap().state;
    let direct = invert_principal(&r, &p).unwrap();
    assert!(flat.sub(&direct).norm_h1h2() <= 1e-12 * direct.norm_h1h2());

    let prob = Problem::new(p, beta, ForcingSpec::default()).unwrap();
    let sol = prob.solve_linear(&r).unwrap();
    let back = prob.linear_part(&sol.state);
    assert!(back.sub(&r).norm() <= 1e-10 * r.norm());
    assert!(sol.relative_residual <= 1e-10);
}

#[test]
fn k_examples() {
    let g = unit(32);
    let p = params(1.0, 1.0);
    let beta = ellipse(&g);
    let grav = ForcingSpec::gravity([1.0, 0.0]);
    let zero = apply_k(&State::zeros(&g), 0.0, &beta, &grav, &p).unwrap();
    assert_eq!(zero.norm_h1h2(), 0.0);
    let one = apply_k(&State::zeros(&g), 0.5, &beta, &grav, &p).unwrap();
    let two = apply_k(&State::zeros(&g), 1.0, &beta, &grav, &p).unwrap();
    assert!(two.sub(&one.scale(2.0)).norm_h1h2() <= 1e-12 * two.norm_h1h2());
}

#[test]
fn flat_round_trip_preserves_band_limited_states() {
    let g = unit(24);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = random_state(&g, &mut rng, 1.0);
    let back = State::from_flat(&g, &s.to_flat());
    assert!(back.sub(&s).norm_h1h2() < 1e-12);
}
