use std::sync::Arc;

use stillwater::model::{make_bathymetry, BathymetrySpec, ForcingSpec, Params};
use stillwater::operators::{Problem, State};
use stillwater::solver::{
    continue_branch, newton_solve, ContinuationSettings, Schedule, SolveSettings, Termination,
    Thresholds,
};
use stillwater::spectral::{Field, Grid};

fn ellipse_problem(n: usize) -> Problem {
    let grid = Grid::new([1.0, 1.0], [n, n]).unwrap();
    let beta = make_bathymetry(
        &BathymetrySpec::HalfEllipse {
            center: [0.5, 0.5],
            semi_axes: [0.3, 0.2],
            amplitude: 0.5,
            invert: false,
            smoothing: None,
        },
        &grid,
    )
    .unwrap();
    Problem::new(Params::new(1.0, 1.0).unwrap(), beta, ForcingSpec::gravity([1.0, 0.0])).unwrap()
}

fn mean(f: &Field) -> f64 {
    f.values().iter().sum::<f64>() / f.values().len() as f64
}

#[test]
fn reversed_schedule_retraces_the_branch() {
    let p = ellipse_problem(32);
    let kappas = [0.0, 1.0, 2.0, 3.0, 4.0];
    let forward = continue_branch(&p, &Schedule::Natural(kappas.to_vec()), &ContinuationSettings::default())
        .unwrap();
    assert_eq!(forward.termination, Termination::TargetReached);
    let settings = SolveSettings::default();
    let mut state = forward.points.last().unwrap().state.clone();
    for point in forward.points.iter().rev().skip(1) {
        state = newton_solve(&p, point.kappa, &state, &settings).unwrap().state;
        let gap = state.sub(&point.state).norm_h1h2();
        assert!(gap <= 1e-7, "kappa {}: {gap:e}", point.kappa);
    }
    assert!(state.norm_x() <= 1e-10);
}

#[test]
fn newton_is_eventually_superlinear() {
    let p = ellipse_problem(32);
    let settings = SolveSettings {
        tol_nonlinear: 1e-12,
        ..SolveSettings::default()
    };
    let sol = newton_solve(&p, 6.0, &State::zeros(p.grid()), &settings).unwrap();
    let h = &sol.history;
    assert!(h.len() >= 3, "{h:?}");
    let tail = &h[h.len() - 3..];
    // r_{n+1} / r_n^2 stays bounded while the residual is above round-off
    for w in tail.windows(2) {
        if w[1] > 1e-13 {
            assert!(w[1] / (w[0] * w[0]) <= 1e3, "{h:?}");
        }
    }
    assert!(tail[2] < tail[0] * 1e-3, "{h:?}");
}

#[test]
fn accepted_points_meet_the_residual_contract() {
    let p = ellipse_problem(32);
    let settings = ContinuationSettings::default();
    let branch = continue_branch(
        &p,
        &Schedule::Natural(vec![0.0, 0.5, 1.5, 3.0, 5.0]),
        &settings,
    )
    .unwrap();
    let tol = settings.solve.tol_nonlinear;
    for point in &branch.points[1..] {
        let r = p.residual(&point.state, point.kappa).unwrap().norm_l2();
        let f = p.forcing(&point.state.eta).unwrap();
        let fnorm = point.kappa * stillwater::spectral::vector_norm_sobolev(&f, 0);
        assert!(r <= tol * (1.0 + fnorm), "kappa {}: {r:e}", point.kappa);
        assert!(mean(&point.state.eta).abs() <= 1e-15);
        assert!(point.blowup.depth_min() > settings.thresholds.depth_min);
        let expected = 1.0 / (1.0 + p.beta().values()[0] + point.state.eta.values()[0]);
        assert!(point.blowup.inv_depth_min >= expected);
    }
}

#[test]
fn threshold_crossing_stops_the_branch() {
    let p = ellipse_problem(32);
    let settings = ContinuationSettings {
        thresholds: Thresholds {
            eta_max: 0.02,
            ..Thresholds::default()
        },
        ..ContinuationSettings::default()
    };
    let kappas: Vec<f64> = (0..=20).map(|i| i as f64).collect();
    let branch = continue_branch(&p, &Schedule::Natural(kappas), &settings).unwrap();
    assert_eq!(branch.termination, Termination::BlowupThreshold);
    assert_eq!(branch.detail, "eta_max");
    let last = branch.points.last().unwrap();
    assert!(last.blowup.eta_max > 0.02);
    let before = &branch.points[branch.points.len() - 2];
    assert!(before.blowup.eta_max <= 0.02);
    assert!(last.kappa < 20.0);
}

#[test]
fn kappa_limit_is_a_threshold() {
    let p = ellipse_problem(32);
    let settings = ContinuationSettings {
        thresholds: Thresholds {
            kappa_max: 1.5,
            ..Thresholds::default()
        },
        ..ContinuationSettings::default()
    };
    let branch =
        continue_branch(&p, &Schedule::Natural(vec![0.0, 1.0, 2.0, 3.0]), &settings).unwrap();
    assert_eq!(branch.termination, Termination::BlowupThreshold);
    assert_eq!(branch.detail, "kappa_max");
    assert_eq!(branch.points.last().unwrap().kappa, 2.0);
}

#[test]
fn unsorted_schedule_is_rejected() {
    let p = ellipse_problem(16);
    let err = continue_branch(
        &p,
        &Schedule::Natural(vec![0.0, 2.0, 1.0]),
        &ContinuationSettings::default(),
    );
    assert!(err.is_err());
}

#[test]
fn solutions_on_shared_grids_are_independent_of_thread() {
    let p = Arc::new(ellipse_problem(32));
    let handles: Vec<_> = (0..2)
        .map(|_| {
            let p = Arc::clone(&p);
            std::thread::spawn(move || {
                newton_solve(&p, 2.0, &State::zeros(p.grid()), &SolveSettings::default())
                    .unwrap()
                    .state
            })
        })
        .collect();
    let states: Vec<State> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(states[0].eta.values(), states[1].eta.values());
}
