use approx::assert_relative_eq;
use num_complex::Complex64;

use super::*;
use crate::error::BohmError;
use crate::grid::{Boundary, Grid};
use crate::wavefunction::{Units, WaveFunction};

const UNIT: Units = Units { hbar: 1.0, mass: 1.0 };

fn box_grid(min: f64, max: f64, points: usize) -> Grid {
    Grid::line(min, max, points, Boundary::Box).unwrap()
}

fn forbidden(delta: f64) -> StepScenario {
    StepScenario::at_delta(delta, 1.0, 0.05, UNIT, DEFAULT_CRITICAL_REL_TOL).unwrap()
}

#[test]
fn kappa_unit_examples() {
    assert_relative_eq!(kappa(&forbidden(-0.5)).unwrap(), 1.0, epsilon = 1e-15);
    assert_relative_eq!(kappa(&forbidden(-2.0)).unwrap(), 2.0, epsilon = 1e-15);
    let allowed = forbidden(0.7);
    assert_eq!(allowed.regime, Regime::Allowed);
    assert!(matches!(kappa(&allowed), Err(BohmError::Regime(_))));
}

#[test]
fn chain_and_delta_are_exact() {
    let units = Units { hbar: 0.7, mass: 2.3 };
    for (e, v0, j0) in [(1.0, 3.0, 0.4), (0.2, 5.5, 1.1), (2.0, 2.9, 0.01)] {
        let s = StepScenario::new(e, v0, j0, units, DEFAULT_CRITICAL_REL_TOL).unwrap();
        assert_eq!(s.delta, s.recomputed_delta());
        assert_eq!(s.regime, Regime::Forbidden);
        let v = units.hbar * kappa(&s).unwrap() / units.mass;
        assert_relative_eq!(v, v_scale(&s), max_relative = 1e-14);
    }
}

#[test]
fn regimes_split_at_coupling_scale() {
    let s = StepScenario::new(1.0, 1.05, 0.05, UNIT, 0.1).unwrap();
    assert_eq!(s.regime, Regime::Critical);
    let s = StepScenario::new(1.0, 1.2, 0.05, UNIT, 0.1).unwrap();
    assert_eq!(s.regime, Regime::Forbidden);
    let s = StepScenario::new(1.0, 0.9, 0.05, UNIT, 0.1).unwrap();
    assert_eq!(s.regime, Regime::Allowed);
    assert!(StepScenario::new(1.0, 0.9, -0.05, UNIT, 0.1).is_err());
}

#[test]
fn analytic_profiles() {
    let grid = box_grid(-5.0, 20.0, 2501);
    let (kappa, k) = (1.3, 0.8);
    let decay = WaveFunction::scalar(grid.clone(), UNIT, |q| Complex64::new((-kappa * q[0]).exp(), 0.0));
    let wave = WaveFunction::scalar(grid.clone(), UNIT, |q| Complex64::from_polar(1.0, k * q[0]));
    let mixed = WaveFunction::scalar(grid, UNIT, |q| Complex64::from_polar((-kappa * q[0]).exp(), k * q[0]));

    for p in momentum_weak_value_profile(&decay, 0.0, 5.0).unwrap() {
        assert!(p.re.abs() < 1e-12);
        assert!((p.im - kappa).abs() < 1e-8, "Im p_w {} at {}", p.im, p.x);
    }
    for p in momentum_weak_value_profile(&wave, 0.0, 5.0).unwrap() {
        assert!((p.re - k).abs() < 1e-8);
        assert!(p.im.abs() < 1e-8);
    }
    for p in momentum_weak_value_profile(&mixed, 0.0, 5.0).unwrap() {
        assert!((p.re - k).abs() < 1e-8);
        assert!((p.im - kappa).abs() < 1e-8);
    }
}

#[test]
fn profile_rejects_nodes() {
    let grid = box_grid(-5.0, 5.0, 1001);
    let psi = WaveFunction::scalar(grid, UNIT, |q| Complex64::new(q[0].sin(), 0.0));
    let err = momentum_weak_value_profile(&psi, -1.0, 1.0).unwrap_err();
    assert!(err.is_node());
}

#[test]
fn identity_on_analytic_decay() {
    let s = forbidden(-0.5);
    let k = kappa(&s).unwrap();
    let grid = box_grid(-5.0, 20.0, 2501);
    let psi = WaveFunction::scalar(grid, UNIT, |q| Complex64::new((-k * q[0]).exp(), 0.0));
    let r = identity_check(&s, &psi, 0.0, DEFAULT_FIT_TOL).unwrap();
    assert!(r.pass);
    assert!(r.max_deviation < 1e-8, "{r:?}");
    assert!(r.chain_error.unwrap() <= 1e-15);
    assert!(r.v_re < 1e-12);
    assert!(r.points >= MIN_WINDOW_POINTS);
}

#[test]
fn identity_on_solved_step_states() {
    let grid = box_grid(-20.0, 40.0, 6001);
    for delta in [-0.1, -0.3, -0.8, -2.0] {
        let s = forbidden(delta);
        let psi = stationary_state(&s, &grid, 0.0, 0.0).unwrap();
        let r = identity_check(&s, &psi, 0.0, DEFAULT_FIT_TOL).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_deviation < 1e-3, "{r:?}");
        for d in [0.5, 1.0, 3.0] {
            assert!(bohmian_velocity_in_forbidden(&psi, d).unwrap().abs() <= 1e-8);
        }
    }
}

#[test]
fn allowed_analogue_follows_phase_gradient() {
    let grid = box_grid(-20.0, 40.0, 6001);
    let s = forbidden(0.6);
    let psi = stationary_state(&s, &grid, 0.0, 0.0).unwrap();
    let r = identity_check(&s, &psi, 0.0, DEFAULT_FIT_TOL).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.v_fit.is_none());
    assert!(r.v_im < 1e-6);
    assert_relative_eq!(r.v_re, v_scale(&s), max_relative = 1e-3);
}

#[test]
fn velocity_examples() {
    let grid = box_grid(-10.0, 10.0, 2001);
    let k = 1.1;
    // incident plus fully reflected wave, real up to a constant phase
    let standing = WaveFunction::scalar(grid.clone(), UNIT, |q| Complex64::new((k * q[0]).cos() + 0.3, 0.0));
    assert!(bohmian_velocity_in_forbidden(&standing, 0.4).unwrap().abs() < 1e-12);

    let (kappa, c) = (0.9, 0.2);
    let admixed = WaveFunction::scalar(grid, UNIT, |q| {
        Complex64::new((-kappa * q[0]).exp(), 0.0) + c * Complex64::from_polar(1.0, k * q[0])
    });
    for x in [0.5, 1.5, 2.5] {
        // S' from the polar form of ψ = a + b
        let a = Complex64::new((-kappa * x).exp(), 0.0);
        let b = c * Complex64::from_polar(1.0, k * x);
        let da = -kappa * a;
        let db = Complex64::new(0.0, k) * b;
        let expected = ((da + db) / (a + b)).im;
        let v = bohmian_velocity_in_forbidden(&admixed, x).unwrap();
        assert!(v.abs() > 1e-3);
        assert!((v - expected).abs() < 1e-7, "{v} vs {expected}");
    }
}

#[test]
fn short_windows_fail_to_fit() {
    let s = forbidden(-0.02);
    let grid = box_grid(-5.0, 10.0, 1501);
    let psi = stationary_state(&s, &grid, 0.0, 0.0).unwrap();
    assert!(matches!(identity_check(&s, &psi, 0.0, DEFAULT_FIT_TOL), Err(BohmError::Fit(_))));

    let coarse = box_grid(-5.0, 20.0, 40);
    let s = forbidden(-8.0);
    let psi = stationary_state(&s, &coarse, 0.0, 0.0).unwrap();
    assert!(matches!(fit_decay(&psi, 0.0), Err(BohmError::Fit(_))));
}

#[test]
fn continuity_flags_jumps() {
    let smooth: Vec<f64> = (0..21).map(|i| (-1.0f64 + 0.1 * i as f64).abs().sqrt()).collect();
    assert!(continuity_check(&smooth, 3.0).pass);
    let mut broken = smooth.clone();
    for v in broken.iter_mut().skip(16) {
        *v += 0.5;
    }
    let c = continuity_check(&broken, 3.0);
    assert!(!c.pass);
    assert_eq!(c.worst_pair, 15);
}

#[test]
fn sweep_is_continuous_through_zero() {
    let opts = SweepOptions {
        energy: 1.0,
        j0: 0.05,
        units: UNIT,
        deltas: SweepOptions::symmetric(0.5, 21),
        grid: box_grid(-20.0, 40.0, 6001),
        position: 0.0,
        width: 0.0,
        window: 5.0,
        fit_tol: DEFAULT_FIT_TOL,
        critical_rel_tol: DEFAULT_CRITICAL_REL_TOL,
    };
    let report = delta_sweep(&opts).unwrap();
    assert!(report.pass, "{:?}", report.continuity);
    assert!(report.identity_checked >= 5);
    for p in &report.points {
        assert_relative_eq!(p.v_measured, p.v_scale, max_relative = 1e-3, epsilon = 1e-6);
    }
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 22);
    assert!(csv.lines().nth(1).unwrap().contains("forbidden"));
}
