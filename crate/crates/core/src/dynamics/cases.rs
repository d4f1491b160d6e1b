//! Scripted verification scenarios for the evolution equation.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{evolution_terms_series, EvolutionTerms};
use crate::error::Result;
use crate::evolution::{analytic_state, evolve, PropagatorSpec, StateContext};
use crate::grid::{Boundary, Grid, Point};
use crate::guidance::integrate_trajectory;
use crate::operators::Observable;
use crate::potential::{Harmonic, Potential, Zero};
use crate::registry::Registry;
use crate::wavefunction::{Units, WaveFunction};

/// Default per-term tolerance in natural units.
pub const VERIFY_TOLERANCE: f64 = 1e-6;

/// Analytic values of the terms; `None` where only the total is known.
/// The expected a_w is `a_w_initial + rate·(t − t₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedTerms {
    pub a_w_initial: f64,
    pub rate: f64,
    pub quantum_dynamical: Option<f64>,
    pub convective: Option<f64>,
    pub divergence_correction: Option<f64>,
}

/// Largest |measured − expected| over all interior samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermDeviation {
    pub a_w: f64,
    pub quantum_dynamical: Option<f64>,
    pub convective: Option<f64>,
    pub divergence_correction: Option<f64>,
    pub rhs_total: f64,
    pub lhs_fd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub name: String,
    pub description: String,
    pub samples: usize,
    pub expected: ExpectedTerms,
    /// Terms at the middle interior sample.
    pub measured: Option<EvolutionTerms>,
    pub max_deviation: TermDeviation,
    pub max_residual: f64,
    pub tolerance: f64,
    pub checks: Vec<CaseCheck>,
    pub pass: bool,
    pub error: Option<String>,
}

/// Everything a case needs: initial state, dynamics, observable, start point.
pub struct CaseSetup {
    pub psi0: WaveFunction,
    pub potential: Arc<dyn Potential>,
    pub propagator: PropagatorSpec,
    pub observable: Observable,
    pub q0: Point,
    pub expected: ExpectedTerms,
    pub tolerance: f64,
}

pub trait VerifyCase: Send + Sync {
    fn setup(&self) -> Result<CaseSetup>;
}

struct Scripted(fn() -> Result<CaseSetup>);

impl VerifyCase for Scripted {
    fn setup(&self) -> Result<CaseSetup> {
        (self.0)()
    }
}

pub fn registry() -> &'static Registry<Arc<dyn VerifyCase>> {
    static REG: OnceLock<Registry<Arc<dyn VerifyCase>>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<Arc<dyn VerifyCase>> = Registry::new("verification case");
        let cases: [(&str, &str, fn() -> Result<CaseSetup>); 6] = [
            ("plane_wave_position", "position along a plane-wave trajectory: da_w/dt = v", plane_wave_position),
            ("plane_wave_momentum", "momentum on a plane wave: a_w = ħk, all terms vanish", plane_wave_momentum),
            ("plane_wave_energy", "energy on a plane wave: a_w = E, all terms vanish", plane_wave_energy),
            ("ho_ground_position", "position in the oscillator ground state: particle at rest", ho_ground_position),
            ("ho_ground_momentum", "momentum in the oscillator ground state: a_w = 0", ho_ground_momentum),
            ("spin_separable", "spin-z on a free separable spinor packet: a_w constant", spin_separable),
        ];
        for (name, description, f) in cases {
            r.register(name, description, Arc::new(Scripted(f)) as Arc<dyn VerifyCase>);
        }
        r
    })
}

const PW_LENGTH: f64 = 80.0;
const PW_MODE: f64 = 12.0;
const POINTS: usize = 1024;

fn units() -> Units {
    Units::default()
}

fn plane_wave() -> Result<(WaveFunction, f64)> {
    let g = Grid::line(0.0, PW_LENGTH, POINTS, Boundary::Periodic)?;
    let k = 2.0 * PI * PW_MODE / PW_LENGTH;
    let psi = analytic_state(&json!({"type": "plane_wave", "k": k}), &StateContext { grid: &g, units: units() })?;
    Ok((psi, k))
}

fn free(dt: f64, steps: usize, stride: usize) -> PropagatorSpec {
    PropagatorSpec {
        method: "split_step".into(),
        dt: Some(dt),
        steps,
        stride,
    }
}

fn all_zero(a_w: f64, rate: f64) -> ExpectedTerms {
    ExpectedTerms {
        a_w_initial: a_w,
        rate,
        quantum_dynamical: Some(0.0),
        convective: Some(rate),
        divergence_correction: Some(0.0),
    }
}

fn plane_wave_position() -> Result<CaseSetup> {
    let (psi0, k) = plane_wave()?;
    let u = units();
    let v = u.hbar * k / u.mass;
    Ok(CaseSetup {
        psi0,
        potential: Arc::new(Zero),
        propagator: free(0.01, 100, 10),
        observable: Observable::position(0),
        q0: [2.0, 0.0],
        expected: all_zero(2.0, v),
        tolerance: VERIFY_TOLERANCE,
    })
}

fn plane_wave_momentum() -> Result<CaseSetup> {
    let (psi0, k) = plane_wave()?;
    Ok(CaseSetup {
        psi0,
        potential: Arc::new(Zero),
        propagator: free(0.01, 100, 10),
        observable: Observable::momentum(0),
        q0: [2.0, 0.0],
        expected: all_zero(units().hbar * k, 0.0),
        tolerance: VERIFY_TOLERANCE,
    })
}

fn plane_wave_energy() -> Result<CaseSetup> {
    let (psi0, k) = plane_wave()?;
    let u = units();
    Ok(CaseSetup {
        psi0,
        potential: Arc::new(Zero),
        propagator: free(0.01, 100, 10),
        observable: Observable::free_hamiltonian(),
        q0: [2.0, 0.0],
        expected: all_zero(u.hbar * u.hbar * k * k / (2.0 * u.mass), 0.0),
        tolerance: VERIFY_TOLERANCE,
    })
}

fn ho_ground(observable: fn(Arc<dyn Potential>) -> Observable) -> Result<CaseSetup> {
    let g = Grid::line(-15.0, 15.0, POINTS, Boundary::Periodic)?;
    let psi0 = analytic_state(
        &json!({"type": "ho_ground", "omega": 1.0}),
        &StateContext { grid: &g, units: units() },
    )?;
    let v: Arc<dyn Potential> = Arc::new(Harmonic {
        omega: 1.0,
        mass: units().mass,
        center: [0.0; 2],
    });
    Ok(CaseSetup {
        psi0,
        observable: observable(v.clone()),
        potential: v,
        propagator: free(1e-3, 1000, 100),
        q0: [0.0, 0.0],
        expected: all_zero(0.0, 0.0),
        tolerance: VERIFY_TOLERANCE,
    })
}

fn ho_ground_position() -> Result<CaseSetup> {
    ho_ground(|_| Observable::position(0))
}

fn ho_ground_momentum() -> Result<CaseSetup> {
    ho_ground(|_| Observable::momentum(0))
}

fn spin_separable() -> Result<CaseSetup> {
    let g = Grid::line(-20.0, 20.0, POINTS, Boundary::Periodic)?;
    let (a, b) = ([0.8, 0.0], [0.0, 0.6]);
    let psi0 = analytic_state(
        &json!({
            "type": "separable_spinor",
            "state": {"type": "gaussian_packet", "x0": -1.0, "sigma": 1.0, "k0": 1.0},
            "chi": [a, b]
        }),
        &StateContext { grid: &g, units: units() },
    )?;
    let na = a[0] * a[0] + a[1] * a[1];
    let nb = b[0] * b[0] + b[1] * b[1];
    let s_z = 0.5 * units().hbar * (na - nb) / (na + nb);
    Ok(CaseSetup {
        psi0,
        potential: Arc::new(Zero),
        propagator: free(0.01, 100, 10),
        observable: Observable::spin_z(),
        q0: [-0.4, 0.0],
        expected: ExpectedTerms {
            a_w_initial: s_z,
            rate: 0.0,
            quantum_dynamical: None,
            convective: None,
            divergence_correction: None,
        },
        tolerance: VERIFY_TOLERANCE,
    })
}

fn check(name: &str, value: f64, tolerance: f64) -> CaseCheck {
    CaseCheck {
        name: name.into(),
        value,
        tolerance,
        pass: value <= tolerance,
    }
}

fn run_setup(setup: &CaseSetup) -> Result<(usize, EvolutionTerms, TermDeviation, f64)> {
    let prop = setup
        .propagator
        .build(setup.psi0.grid(), setup.psi0.units, setup.potential.clone())?;
    let record = evolve(
        &setup.psi0,
        prop.as_ref(),
        setup.potential.clone(),
        setup.propagator.steps,
        setup.propagator.stride,
    )?;
    let traj = integrate_trajectory(&record, &setup.q0, None)?;
    let series = evolution_terms_series(&traj, &record, &setup.observable)?;
    let e = &setup.expected;
    let t0 = record.start();
    let mut dev = TermDeviation {
        quantum_dynamical: e.quantum_dynamical.map(|_| 0.0),
        convective: e.convective.map(|_| 0.0),
        divergence_correction: e.divergence_correction.map(|_| 0.0),
        ..TermDeviation::default()
    };
    let mut max_residual: f64 = 0.0;
    let worse = |slot: &mut Option<f64>, expected: Option<f64>, measured: f64| {
        if let (Some(d), Some(x)) = (slot.as_mut(), expected) {
            *d = d.max((measured - x).abs());
        }
    };
    for s in &series {
        dev.a_w = dev.a_w.max((s.a_w - (e.a_w_initial + e.rate * (s.t - t0))).abs());
        worse(&mut dev.quantum_dynamical, e.quantum_dynamical, s.quantum_dynamical);
        worse(&mut dev.convective, e.convective, s.convective);
        worse(&mut dev.divergence_correction, e.divergence_correction, s.divergence_correction);
        dev.rhs_total = dev.rhs_total.max((s.rhs_total - e.rate).abs());
        dev.lhs_fd = dev.lhs_fd.max((s.lhs_fd - e.rate).abs());
        max_residual = max_residual.max(s.residual);
    }
    Ok((series.len(), series[series.len() / 2], dev, max_residual))
}

/// Runs one named case. Numerical failures become report entries.
pub fn verify_case(name: &str) -> Result<VerifyReport> {
    let reg = registry();
    let case = reg.get(name)?;
    let description = reg.describe(name).unwrap_or_default().to_string();
    let setup = case.setup()?;
    let tol = setup.tolerance;
    let mut report = VerifyReport {
        name: name.into(),
        description,
        samples: 0,
        expected: setup.expected,
        measured: None,
        max_deviation: TermDeviation::default(),
        max_residual: f64::NAN,
        tolerance: tol,
        checks: Vec::new(),
        pass: false,
        error: None,
    };
    match run_setup(&setup) {
        Ok((samples, mid, dev, residual)) => {
            let mut checks = vec![check("a_w", dev.a_w, tol)];
            let optional = [
                ("quantum_dynamical", dev.quantum_dynamical),
                ("convective", dev.convective),
                ("divergence_correction", dev.divergence_correction),
            ];
            for (label, d) in optional {
                if let Some(d) = d {
                    checks.push(check(label, d, tol));
                }
            }
            checks.push(check("rhs_total", dev.rhs_total, tol));
            checks.push(check("lhs_fd", dev.lhs_fd, tol));
            checks.push(check("residual", residual, tol));
            report.pass = checks.iter().all(|c| c.pass);
            report.samples = samples;
            report.measured = Some(mid);
            report.max_deviation = dev;
            report.max_residual = residual;
            report.checks = checks;
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    Ok(report)
}
