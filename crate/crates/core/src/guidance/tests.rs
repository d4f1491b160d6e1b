use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C;
use serde_json::json;

use super::*;
use crate::evolution::{analytic_state, evolve, PropagatorSpec, StateContext};
use crate::grid::Boundary;
use crate::potential::{Harmonic, Potential, Zero};
use crate::wavefunction::Units;

fn record(psi: &WaveFunction, v: Arc<dyn Potential>, dt: f64, steps: usize, stride: usize) -> EvolutionRecord {
    let spec = PropagatorSpec { method: "split_step".into(), dt: Some(dt), steps, stride };
    let prop = spec.build(psi.grid(), psi.units, v.clone()).unwrap();
    evolve(psi, prop.as_ref(), v, steps, stride).unwrap()
}

fn state(grid: &Grid, spec: serde_json::Value) -> WaveFunction {
    analytic_state(&spec, &StateContext { grid, units: Units::default() }).unwrap()
}

#[test]
fn plane_wave_moves_uniformly() {
    let g = Grid::line(0.0, 20.0, 1024, Boundary::Periodic).unwrap();
    let k = 2.0 * PI * 3.0 / 20.0;
    let psi = state(&g, json!({"type": "plane_wave", "k": k}));
    let v = velocity_at(&psi, &[3.21, 0.0]).unwrap();
    assert!((v[0] - k).abs() < 1e-12);
    assert!(velocity_divergence(&psi, &[3.21, 0.0]).unwrap().abs() < 1e-10);
    let period = 20.0 / k;
    let rec = record(&psi, Arc::new(Zero), 0.05, (10.0 * period / 0.05).ceil() as usize, 20);
    let traj = integrate_trajectory(&rec, &[0.0, 0.0], None).unwrap();
    assert!(traj.completed());
    for s in &traj.samples {
        let d = g.displacement(&[k * s.t, 0.0], &s.q);
        assert!(d[0].abs() < 1e-8, "t={} d={}", s.t, d[0]);
    }
}

#[test]
fn real_states_are_at_rest() {
    let g = Grid::line(-12.0, 12.0, 256, Boundary::Periodic).unwrap();
    let psi = state(&g, json!({"type": "ho_ground", "omega": 1.0}));
    assert!(velocity_at(&psi, &[0.7, 0.0]).unwrap()[0].abs() < 1e-15);
    let v: Arc<dyn Potential> = Arc::new(Harmonic { omega: 1.0, mass: 1.0, center: [0.0; 2] });
    let rec = record(&psi, v, 0.01, 500, 50);
    let traj = integrate_trajectory(&rec, &[0.0, 0.0], None).unwrap();
    assert!(traj.samples.iter().all(|s| s.q[0].abs() < 1e-12));
}

#[test]
fn packet_center_and_equivariance_along_trajectory() {
    let g = Grid::line(-30.0, 50.0, 1024, Boundary::Periodic).unwrap();
    let psi = state(&g, json!({"type": "gaussian_packet", "x0": -2.0, "sigma": 1.0, "k0": 1.5}));
    let rec = record(&psi, Arc::new(Zero), 0.02, 200, 5);
    let field = GuidanceField::new(&rec, 2).unwrap();
    let opts = TrajectoryOptions { divergence: true, ..Default::default() };
    let center = field.integrate(&[-2.0, 0.0], &opts).unwrap();
    for s in &center.samples {
        assert!((s.q[0] - (-2.0 + 1.5 * s.t)).abs() < 1e-4);
    }
    let side = field.integrate(&[-0.5, 0.0], &opts).unwrap();
    let carried = side.transported_density();
    for c in &carried {
        assert!((c / carried[0] - 1.0).abs() < 0.01);
    }
    // analytic v for a free packet: k0 + (x − x_c) t/(4σ⁴ + t²)
    let s = &side.samples[side.len() / 2];
    let xc = -2.0 + 1.5 * s.t;
    let expected = 1.5 + (s.q[0] - xc) * s.t / (4.0 + s.t * s.t);
    assert!((s.v[0] - expected).abs() < 1e-5, "{} vs {expected}", s.v[0]);
    let lower = field.integrate(&[-1.0, 0.0], &opts).unwrap();
    assert!(lower.samples.iter().zip(&side.samples).all(|(a, b)| a.q[0] < b.q[0]));
}

#[test]
fn step_must_divide_spacing() {
    let g = Grid::line(-10.0, 10.0, 128, Boundary::Periodic).unwrap();
    let psi = state(&g, json!({"type": "gaussian_packet", "sigma": 1.0}));
    let rec = record(&psi, Arc::new(Zero), 0.1, 10, 5);
    assert!(integrate_trajectory(&rec, &[0.0, 0.0], Some(0.3)).is_err());
    assert!(integrate_trajectory(&rec, &[0.0, 0.0], Some(0.125)).is_ok());
}

#[test]
fn nodes_abort() {
    let g = Grid::line(-10.0, 10.0, 256, Boundary::Periodic).unwrap();
    // first excited oscillator state has a node at the origin
    let psi = WaveFunction::scalar(g.clone(), Units::default(), |p| {
        C::new(p[0] * (-0.5 * p[0] * p[0]).exp(), 0.0)
    });
    assert!(velocity_at(&psi, &[0.0, 0.0]).unwrap_err().is_node());
    let rec = EvolutionRecord::from_snapshots(
        vec![psi],
        1.0,
        1,
        Arc::new(Zero),
        DerivativeScheme::Spectral,
    )
    .unwrap();
    let field = GuidanceField::new(&rec, 1).unwrap();
    assert!(field
        .integrate(&[0.0, 0.0], &TrajectoryOptions { dt: Some(0.1), t_end: Some(0.0), divergence: false })
        .unwrap_err()
        .is_node());
}

#[test]
fn box_trajectories_stay_inside() {
    let g = Grid::line(-10.0, 10.0, 401, Boundary::Box).unwrap();
    let psi = state(&g, json!({"type": "gaussian_packet", "x0": 0.0, "sigma": 1.0, "k0": 4.0}));
    let spec = PropagatorSpec { method: "crank_nicolson".into(), dt: Some(0.005), steps: 600, stride: 10 };
    let v: Arc<dyn Potential> = Arc::new(Zero);
    let prop = spec.build(&g, Units::default(), v.clone()).unwrap();
    let rec = evolve(&psi, prop.as_ref(), v, 600, 10).unwrap();
    let traj = integrate_trajectory(&rec, &[1.0, 0.0], None).unwrap();
    assert!(traj.samples.iter().all(|s| g.contains(&s.q)));
    assert!(traj.samples.iter().any(|s| s.q[0] > 6.0));
}
