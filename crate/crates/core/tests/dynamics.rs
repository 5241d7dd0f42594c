use std::sync::Arc;

use gkdv_core::diagnostics::{absorbing_entry, energy, forcing_field, momentum, smoothing_metric};
use gkdv_core::dynamics::{simulate, steady_state_linear, PolynomialNonlinearity, Problem, SolverConfig, Trajectory};
use gkdv_core::resonance::{t_nf_sum, v_from_definition, RegionParams};
use gkdv_core::spectral::{Grid, SpectralField};
use gkdv_core::Complex64;

fn sines(grid: &Arc<Grid>, modes: &[(usize, f64)]) -> SpectralField {
    let mut pos = vec![Complex64::new(0.0, 0.0); grid.max_wavenumber()];
    for &(k, a) in modes {
        // a sin(kx) has û_k = −ia/2
        pos[k - 1] = Complex64::new(0.0, -a / 2.0);
    }
    SpectralField::from_positive(grid, &pos)
}

fn run(problem: &Problem, u0: &SpectralField, dt: f64, t_end: f64, stride: usize) -> Trajectory {
    let traj = simulate(problem, u0, &SolverConfig::new(dt, t_end, stride).unwrap(), &mut []).unwrap();
    assert!(traj.abort.is_none());
    traj
}

fn rel_drift(values: &[f64]) -> f64 {
    values.iter().map(|v| (v - values[0]).abs()).fold(0.0, f64::max) / values[0].abs()
}

#[test]
fn kdv_conserves_momentum_and_energy() {
    let g = PolynomialNonlinearity::monomial(2, 1.0).unwrap();
    let grid = Problem::grid_for(32, &g).unwrap();
    let problem = Problem::unforced(g.clone(), 0.0, &grid).unwrap();
    let u0 = sines(&grid, &[(1, 0.6), (2, 0.3)]);
    let traj = run(&problem, &u0, 1e-3, 2.0, 100);
    let p: Vec<f64> = traj.snapshots.iter().map(momentum).collect();
    let e: Vec<f64> = traj.snapshots.iter().map(|u| energy(u, &g).unwrap()).collect();
    assert!(rel_drift(&p) < 1e-9, "momentum drift {}", rel_drift(&p));
    assert!(rel_drift(&e) < 1e-9, "energy drift {}", rel_drift(&e));
}

#[test]
fn unforced_damping_decays_momentum_at_twice_gamma() {
    let g = PolynomialNonlinearity::monomial(3, -1.0).unwrap();
    let grid = Problem::grid_for(32, &g).unwrap();
    let gamma = 0.5;
    let problem = Problem::unforced(g, gamma, &grid).unwrap();
    let u0 = sines(&grid, &[(1, 0.8), (3, 0.2)]);
    let traj = run(&problem, &u0, 1e-3, 2.0, 500);
    let p0 = momentum(&u0);
    for (t, u) in traj.times.iter().zip(&traj.snapshots) {
        let exact = p0 * (-2.0 * gamma * t).exp();
        assert!((momentum(u) - exact).abs() <= 1e-9 * p0, "t = {t}: {:e}", (momentum(u) - exact).abs() / p0);
    }
}

#[test]
fn integrator_is_fourth_order_on_kdv() {
    let g = PolynomialNonlinearity::monomial(2, 1.0).unwrap();
    let grid = Problem::grid_for(32, &g).unwrap();
    let problem = Problem::unforced(g, 0.0, &grid).unwrap();
    let u0 = sines(&grid, &[(1, 0.5), (2, 0.25)]);
    let reference = run(&problem, &u0, 3.125e-4, 1.0, 3200).last().clone();
    let err = |dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        run(&problem, &u0, dt, 1.0, steps).last().max_abs_diff(&reference).unwrap()
    };
    let (e1, e2, e3) = (err(0.01), err(0.005), err(0.0025));
    let order = ((e1 / e2).log2() + (e2 / e3).log2()) / 2.0;
    assert!(order >= 3.9, "observed order {order} from errors {e1:e} {e2:e} {e3:e}");
}

#[test]
fn linear_flow_has_zero_smoothing_metric() {
    let g = PolynomialNonlinearity::zero();
    let grid = Grid::with_headroom(32, 2).unwrap();
    let problem = Problem::unforced(g, 0.3, &grid).unwrap();
    let u0 = sines(&grid, &[(1, 1.0), (5, 0.5), (9, 0.1)]);
    let traj = run(&problem, &u0, 1e-1, 2.0, 1);
    let metric = smoothing_metric(&traj, &u0, 0.3, 0.5).unwrap();
    assert!(metric.iter().all(|m| *m <= 1e-12), "{metric:?}");
    assert!(traj.thetas.iter().all(|t| *t == 0.0));
}

#[test]
fn linear_decay_enters_half_ball_at_ln2_over_gamma() {
    let gamma = 0.5;
    let grid = Grid::with_headroom(16, 2).unwrap();
    let problem = Problem::unforced(PolynomialNonlinearity::zero(), gamma, &grid).unwrap();
    let u0 = sines(&grid, &[(2, 1.0)]);
    let traj = run(&problem, &u0, 1e-3, 3.0, 10);
    let entry = absorbing_entry(&traj, u0.sobolev_norm(1.0) / 2.0, 1.0).unwrap();
    assert!((entry - 2f64.ln() / gamma).abs() <= 0.01, "entry {entry}");

    let zero = SpectralField::zeros(&grid);
    let traj = run(&problem, &zero, 1e-3, 0.1, 10);
    assert_eq!(absorbing_entry(&traj, 1.0, 1.0), Some(0.0));
}

fn forced_problem() -> (Problem, SpectralField) {
    let g = PolynomialNonlinearity::from_terms(&[(2, 0.5), (3, -1.0)]).unwrap();
    let grid = Problem::grid_for(16, &g).unwrap();
    let f = forcing_field(&grid, &[(1, Complex64::new(0.5, 0.0))]);
    let problem = Problem::new(g, 0.3, f).unwrap();
    let u0 = sines(&grid, &[(1, 0.7), (4, 0.1)]);
    (problem, u0)
}

#[test]
fn v_at_start_is_minus_normal_form_minus_profile() {
    let (problem, u0) = forced_problem();
    let region = RegionParams::default();
    let traj = run(&problem, &u0, 1e-3, 0.01, 10);
    let v0 = &v_from_definition(&traj, &problem, region).unwrap()[0].v;
    let nf = t_nf_sum(&u0, &u0, &problem.g, region).unwrap();
    let profile = steady_state_linear(&problem.forcing, problem.gamma).unwrap();
    let expected = nf.try_add(&profile).unwrap().scale(-1.0);
    assert!(v0.max_abs_diff(&expected).unwrap() <= 1e-15);
}

#[test]
fn v_decomposition_reassembles() {
    let (problem, u0) = forced_problem();
    let traj = run(&problem, &u0, 1e-3, 1.0, 100);
    for r in v_from_definition(&traj, &problem, RegionParams::default()).unwrap() {
        let sum = r.v.try_add(&r.normal_form).unwrap().try_add(&r.gauged_profile).unwrap();
        assert!(sum.max_abs_diff(&r.duhamel).unwrap() <= 1e-14, "t = {}", r.t);
        for s in [0.0, 1.0, 2.0] {
            let lhs = r.duhamel.sobolev_norm(s);
            let rhs = r.v.sobolev_norm(s) + r.normal_form.sobolev_norm(s) + r.gauged_profile.sobolev_norm(s);
            assert!(lhs <= rhs * (1.0 + 1e-14));
        }
    }
}
