use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C;
use serde_json::json;

use super::*;
use crate::grid::Boundary;
use crate::operators::expectation;
use crate::potential::{Harmonic, Zero};

fn ctx(grid: &Grid) -> StateContext<'_> {
    StateContext { grid, units: Units::default() }
}

fn run(psi: &WaveFunction, method: &str, v: Arc<dyn Potential>, dt: f64, steps: usize, stride: usize) -> EvolutionRecord {
    let spec = PropagatorSpec { method: method.into(), dt: Some(dt), steps, stride };
    let prop = spec.build(psi.grid(), psi.units, v.clone()).unwrap();
    evolve(psi, prop.as_ref(), v, steps, stride).unwrap()
}

#[test]
fn plane_wave_advances_phase() {
    let g = Grid::line(0.0, 20.0, 128, Boundary::Periodic).unwrap();
    let k = 2.0 * PI * 3.0 / 20.0;
    let psi = analytic_state(&json!({"type": "plane_wave", "k": k}), &ctx(&g)).unwrap();
    let rec = run(&psi, "split_step", Arc::new(Zero), 0.01, 200, 50);
    assert_eq!(rec.len(), 5);
    let last = rec.snapshots().last().unwrap();
    let w = 0.5 * k * k;
    for (a, b) in last.amplitudes().iter().zip(psi.amplitudes()) {
        assert!((a - b * C::new(0.0, -w * last.time).exp()).norm() < 1e-12);
    }
    assert!(continuity_residual(&rec).unwrap().worst() < 1e-12);
}

#[test]
fn ho_ground_state_is_stationary() {
    let g = Grid::line(-12.0, 12.0, 256, Boundary::Periodic).unwrap();
    let psi = analytic_state(&json!({"type": "ho_ground", "omega": 1.0}), &ctx(&g)).unwrap();
    let v: Arc<dyn Potential> = Arc::new(Harmonic { omega: 1.0, mass: 1.0, center: [0.0; 2] });
    let e = expectation(&Observable::hamiltonian(v.clone()), &psi).unwrap();
    assert!((e.value - 0.5).abs() < 1e-6);
    // Strang splitting error is O(dt²); dt = 4e-4 keeps it below 1e-8
    let rec = run(&psi, "split_step", v, 4e-4, 2500, 500);
    let rho0 = psi.density();
    for s in rec.snapshots() {
        for (a, b) in s.density().iter().zip(&rho0) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn free_packet_width_follows_dispersion() {
    let g = Grid::line(-40.0, 40.0, 1024, Boundary::Periodic).unwrap();
    let sigma = 1.0;
    let psi = analytic_state(
        &json!({"type": "gaussian_packet", "x0": -5.0, "sigma": sigma, "k0": 1.0}),
        &ctx(&g),
    )
    .unwrap();
    let t = 2.0 * sigma * sigma;
    let rec = run(&psi, "split_step", Arc::new(Zero), t / 200.0, 200, 200);
    let last = rec.snapshots().last().unwrap();
    let rho = last.density();
    let dx = g.spacing(0);
    let m1: f64 = rho.iter().enumerate().map(|(i, r)| r * g.coord(0, i)).sum::<f64>() * dx;
    let m2: f64 = rho.iter().enumerate().map(|(i, r)| r * (g.coord(0, i) - m1).powi(2)).sum::<f64>() * dx;
    let expected = sigma * sigma * (1.0 + (t / (2.0 * sigma * sigma)).powi(2));
    assert!((m2 - expected).abs() / expected < 1e-4, "{m2} vs {expected}");
    assert!((m1 - (-5.0 + t)).abs() < 1e-8);
}

#[test]
fn crank_nicolson_conserves_norm_and_energy() {
    let g = Grid::line(-20.0, 20.0, 801, Boundary::Box).unwrap();
    let psi = analytic_state(
        &json!({"type": "gaussian_packet", "x0": -3.0, "sigma": 1.0, "k0": 1.0}),
        &ctx(&g),
    )
    .unwrap();
    let v: Arc<dyn Potential> = Arc::new(crate::potential::Step { axis: 0, position: 2.0, height: 0.8, width: 0.3 });
    let rec = run(&psi, "crank_nicolson", v.clone(), 0.002, 1000, 500);
    let h = rec.hamiltonian();
    assert_eq!(rec.scheme(), DerivativeScheme::CentralFd2);
    let e0 = expectation(&h, &rec.snapshots()[0]).unwrap().value;
    let e1 = expectation(&h, rec.snapshots().last().unwrap()).unwrap().value;
    assert!((e1 - e0).abs() / e0.abs() < 1e-6, "{e0} {e1}");
    assert!((rec.snapshots().last().unwrap().norm() - 1.0).abs() < 1e-10);
}

#[test]
fn propagators_reject_wrong_boundaries() {
    let boxed = Grid::line(-5.0, 5.0, 64, Boundary::Box).unwrap();
    let periodic = Grid::line(-5.0, 5.0, 64, Boundary::Periodic).unwrap();
    let spec = |m: &str| PropagatorSpec { method: m.into(), dt: Some(0.01), steps: 1, stride: 1 };
    assert!(spec("split_step").build(&boxed, Units::default(), Arc::new(Zero)).is_err());
    assert!(spec("crank_nicolson").build(&periodic, Units::default(), Arc::new(Zero)).is_err());
    assert!(spec("leapfrog").build(&periodic, Units::default(), Arc::new(Zero)).is_err());
}

#[test]
fn hermite_state_matches_direct_evolution() {
    let g = Grid::line(-30.0, 30.0, 512, Boundary::Periodic).unwrap();
    let psi = analytic_state(
        &json!({"type": "gaussian_packet", "x0": 0.0, "sigma": 1.0, "k0": 0.5}),
        &ctx(&g),
    )
    .unwrap();
    let coarse = run(&psi, "split_step", Arc::new(Zero), 0.01, 100, 20);
    let fine = run(&psi, "split_step", Arc::new(Zero), 0.01, 100, 1);
    let t = fine.snapshots()[37].time;
    let mid = coarse.state_at(t).unwrap();
    let err = mid
        .amplitudes()
        .iter()
        .zip(fine.snapshots()[37].amplitudes())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-5, "{err}");
    assert!(coarse.state_at(5.0).is_err());
}

#[test]
fn state_families_validate() {
    let g = Grid::line(-10.0, 10.0, 256, Boundary::Periodic).unwrap();
    let c = ctx(&g);
    assert!(analytic_state(&json!({"type": "plane_wave", "k": 0.5}), &c).is_err());
    let e = analytic_state(&json!({"type": "gaussian_packet", "x0": 9.0, "sigma": 1.0}), &c).unwrap_err();
    assert!(matches!(e, BohmError::Truncation(_)));
    let pw = analytic_state(&json!({"type": "plane_wave", "k": PI / 10.0}), &c).unwrap();
    for r in pw.density() {
        assert!((r - 1.0 / 20.0).abs() < 1e-14);
    }
    assert!(analytic_state(&json!({"type": "gaussian_packet", "sigma": 1.0, "spread": 2}), &c).is_err());
    assert!(analytic_state(&json!({"type": "ho_ground"}), &c).is_err());
}

#[test]
fn two_branch_weights() {
    let g = Grid::line(-60.0, 60.0, 2048, Boundary::Periodic).unwrap();
    let spec = json!({
        "type": "two_branch", "weight_a": 0.3,
        "a": {"x0": 20.0, "sigma": 2.0, "k0": 2.0},
        "b": {"x0": -20.0, "sigma": 2.0, "k0": -2.0}
    });
    let psi = analytic_state(&spec, &ctx(&g)).unwrap();
    let rho = psi.density();
    let right: f64 = rho.iter().enumerate().filter(|(i, _)| g.coord(0, *i) > 0.0).map(|(_, r)| r).sum::<f64>()
        * g.spacing(0);
    assert!((right - 0.3).abs() < 1e-8);
    let close = json!({
        "type": "two_branch", "weight_a": 0.3,
        "a": {"x0": 2.0, "sigma": 2.0}, "b": {"x0": -2.0, "sigma": 2.0}
    });
    assert!(analytic_state(&close, &ctx(&g)).is_err());
}

#[test]
fn spinor_states() {
    let g = Grid::line(-10.0, 10.0, 128, Boundary::Periodic).unwrap();
    let s = analytic_state(
        &json!({"type": "separable_spinor", "state": {"type": "gaussian_packet", "sigma": 1.0}, "chi": [[0.8, 0.0], [0.0, 0.6]]}),
        &ctx(&g),
    )
    .unwrap();
    assert_eq!(s.components(), 2);
    assert!((s.norm() - 1.0).abs() < 1e-12);
    let e = expectation(&Observable::spin_z(), &s).unwrap();
    assert!((e.value - 0.5 * (0.64 - 0.36)).abs() < 1e-12);
}
