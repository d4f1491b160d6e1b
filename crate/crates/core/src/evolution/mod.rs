//! Time-dependent Schrödinger propagation, snapshot records with
//! continuous-time access, analytic reference states and the continuity
//! residual.

mod propagators;
pub mod states;

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calculus::{derivative_components, unit_order, DerivativeScheme};
use crate::error::{BohmError, Result};
use crate::grid::Grid;
use crate::operators::Observable;
use crate::potential::Potential;
use crate::registry::Registry;
use crate::wavefunction::{Units, WaveFunction};

pub use propagators::{CrankNicolson, SplitStep};
pub use states::{analytic_state, StateContext};

/// Relative norm drift that aborts a run.
pub const UNITARITY_ABORT: f64 = 1e-6;

/// One time step of iħ∂ψ/∂t = Ĥψ for a fixed grid, potential and dt.
pub trait Propagator: Send + Sync {
    fn name(&self) -> &'static str;

    fn dt(&self) -> f64;

    /// Derivative scheme of the discrete Hamiltonian being integrated.
    fn hamiltonian_scheme(&self) -> DerivativeScheme;

    /// Advances every component of `amplitudes` by one step in place.
    fn step(&self, amplitudes: &mut [Complex64]);
}

pub struct PropagatorContext<'a> {
    pub grid: &'a Grid,
    pub units: Units,
    pub potential: Arc<dyn Potential>,
    pub dt: f64,
}

pub type PropagatorBuilder = fn(&PropagatorContext) -> Result<Arc<dyn Propagator>>;

pub fn registry() -> &'static Registry<PropagatorBuilder> {
    static REG: OnceLock<Registry<PropagatorBuilder>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r = Registry::new("propagator");
        r.register(
            "split_step",
            "Strang split-step Fourier, periodic grids",
            SplitStep::build as PropagatorBuilder,
        )
        .register(
            "crank_nicolson",
            "Crank-Nicolson with a second-order Laplacian, 1D box grids",
            CrankNicolson::build,
        );
        r
    })
}

/// Scenario-level propagator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorSpec {
    pub method: String,
    /// Defaults to the value keeping the largest phase per step at 0.05 rad.
    #[serde(default)]
    pub dt: Option<f64>,
    pub steps: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    1
}

/// Largest energy resolved on the grid: max|V| + ħ²k_max²/2m.
pub fn max_energy(grid: &Grid, units: Units, potential: &dyn Potential) -> f64 {
    let k2: f64 = (0..grid.dims())
        .map(|a| (PI / grid.spacing(a)).powi(2))
        .sum();
    let vmax = potential
        .sample(grid)
        .into_iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    vmax.max(units.hbar * units.hbar * k2 / (2.0 * units.mass))
}

impl PropagatorSpec {
    pub fn resolve_dt(&self, grid: &Grid, units: Units, potential: &dyn Potential) -> f64 {
        self.dt
            .unwrap_or_else(|| 0.05 * units.hbar / max_energy(grid, units, potential))
    }

    pub fn build(
        &self,
        grid: &Grid,
        units: Units,
        potential: Arc<dyn Potential>,
    ) -> Result<Arc<dyn Propagator>> {
        let dt = self.resolve_dt(grid, units, potential.as_ref());
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(BohmError::validation("propagator.dt", "must be positive"));
        }
        if self.stride == 0 {
            return Err(BohmError::validation("propagator.stride", "must be positive"));
        }
        let builder = registry().get(&self.method)?;
        builder(&PropagatorContext {
            grid,
            units,
            potential,
            dt,
        })
    }
}

/// Snapshots of one run, uniformly spaced in time.
#[derive(Debug, Clone)]
pub struct EvolutionRecord {
    snapshots: Vec<WaveFunction>,
    dt: f64,
    stride: usize,
    method: String,
    potential: Arc<dyn Potential>,
    scheme: DerivativeScheme,
}

/// Propagates `psi0` for `steps` steps, keeping every `stride`-th state.
pub fn evolve(
    psi0: &WaveFunction,
    prop: &dyn Propagator,
    potential: Arc<dyn Potential>,
    steps: usize,
    stride: usize,
) -> Result<EvolutionRecord> {
    if stride == 0 {
        return Err(BohmError::Config("snapshot stride must be positive".into()));
    }
    let grid = psi0.grid();
    let dt = prop.dt();
    let phase = dt * max_energy(grid, psi0.units, potential.as_ref()) / psi0.hbar();
    if phase > PI {
        log::debug!("time step {dt} resolves energies only up to phase {phase:.2} > π per step");
    }
    let n0 = psi0.norm();
    let t0 = psi0.time;
    let mut data = psi0.amplitudes().to_vec();
    let mut snapshots = vec![psi0.clone()];
    for step in 1..=steps {
        prop.step(&mut data);
        if step % stride == 0 || step == steps {
            let t = t0 + step as f64 * dt;
            let wf = WaveFunction::new(grid.clone(), psi0.components(), data.clone(), psi0.units)?
                .with_time(t);
            let drift = (wf.norm() - n0).abs() / n0;
            if drift > UNITARITY_ABORT {
                return Err(BohmError::Unitarity { drift, steps: step });
            }
            if step % stride == 0 {
                snapshots.push(wf);
            }
        }
    }
    Ok(EvolutionRecord {
        snapshots,
        dt,
        stride,
        method: prop.name().to_string(),
        potential,
        scheme: prop.hamiltonian_scheme(),
    })
}

impl EvolutionRecord {
    /// Builds a record from externally produced snapshots spaced `dt·stride`.
    pub fn from_snapshots(
        snapshots: Vec<WaveFunction>,
        dt: f64,
        stride: usize,
        potential: Arc<dyn Potential>,
        scheme: DerivativeScheme,
    ) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(BohmError::Config("record needs at least one snapshot".into()));
        }
        for s in &snapshots[1..] {
            snapshots[0].check_compatible(s)?;
        }
        Ok(Self {
            snapshots,
            dt,
            stride,
            method: "external".into(),
            potential,
            scheme,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.snapshots[0].grid()
    }

    pub fn units(&self) -> Units {
        self.snapshots[0].units
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn potential(&self) -> &Arc<dyn Potential> {
        &self.potential
    }

    pub fn scheme(&self) -> DerivativeScheme {
        self.scheme
    }

    pub fn snapshots(&self) -> &[WaveFunction] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn start(&self) -> f64 {
        self.snapshots[0].time
    }

    pub fn end(&self) -> f64 {
        self.snapshots[self.len() - 1].time
    }

    pub fn hamiltonian(&self) -> Observable {
        Observable::hamiltonian(self.potential.clone()).with_scheme(self.scheme)
    }

    /// ∂ψ/∂t = Ĥψ/iħ of one snapshot, using the propagator's own generator.
    pub fn time_derivative(&self, index: usize) -> Result<Vec<Complex64>> {
        time_derivative(&self.hamiltonian(), &self.snapshots[index])
    }

    /// Snapshot index and fractional position s ∈ [0, 1] of time `t`.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (t0, t1) = (self.start(), self.end());
        let slack = 1e-9 * self.spacing().max(1e-300);
        if t < t0 - slack || t > t1 + slack {
            return Err(BohmError::Config(format!(
                "time {t} outside the record span [{t0}, {t1}]"
            )));
        }
        if self.len() == 1 {
            return Ok((0, 0.0));
        }
        let x = ((t - t0) / self.spacing()).clamp(0.0, (self.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.len() - 2);
        Ok((i, x - i as f64))
    }

    /// ψ(t) on the grid by cubic Hermite interpolation between snapshots.
    pub fn state_at(&self, t: f64) -> Result<WaveFunction> {
        let (i, s) = self.locate(t)?;
        let first = &self.snapshots[i];
        if self.len() == 1 || s == 0.0 {
            return Ok(first.clone().with_time(t));
        }
        if s == 1.0 {
            return Ok(self.snapshots[i + 1].clone().with_time(t));
        }
        let h = self.spacing();
        let w = hermite_weights(s, h);
        let d0 = self.time_derivative(i)?;
        let d1 = self.time_derivative(i + 1)?;
        let p0 = first.amplitudes();
        let p1 = self.snapshots[i + 1].amplitudes();
        let data = (0..p0.len())
            .map(|k| p0[k] * w[0] + d0[k] * w[1] + p1[k] * w[2] + d1[k] * w[3])
            .collect();
        Ok(WaveFunction::new(first.grid().clone(), first.components(), data, first.units)?.with_time(t))
    }
}

/// Weights of (ψ₀, ψ̇₀, ψ₁, ψ̇₁) for cubic Hermite interpolation at fraction
/// `s` of an interval of length `h`.
pub fn hermite_weights(s: f64, h: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        2.0 * s3 - 3.0 * s2 + 1.0,
        (s3 - 2.0 * s2 + s) * h,
        -2.0 * s3 + 3.0 * s2,
        (s3 - s2) * h,
    ]
}

/// Derivatives of the Hermite weights with respect to time.
pub fn hermite_rate_weights(s: f64, h: f64) -> [f64; 4] {
    let s2 = s * s;
    [
        (6.0 * s2 - 6.0 * s) / h,
        3.0 * s2 - 4.0 * s + 1.0,
        (-6.0 * s2 + 6.0 * s) / h,
        3.0 * s2 - 2.0 * s,
    ]
}

pub fn time_derivative(h: &Observable, psi: &WaveFunction) -> Result<Vec<Complex64>> {
    let factor = Complex64::new(0.0, -1.0 / psi.hbar());
    Ok(h.apply(psi)?.into_iter().map(|v| v * factor).collect())
}

/// Max-norm of ∂ρ/∂t + ∇·J at each interior snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub times: Vec<f64>,
    pub max_residual: Vec<f64>,
}

impl ContinuityReport {
    pub fn worst(&self) -> f64 {
        self.max_residual.iter().copied().fold(0.0, f64::max)
    }
}

/// ∂ρ/∂t by centered differences in time plus ∇·J with J = (ħ/m)Im(ψ†∇ψ)
/// from grid derivatives in the record's scheme.
pub fn continuity_residual(record: &EvolutionRecord) -> Result<ContinuityReport> {
    if record.len() < 3 {
        return Err(BohmError::Config(
            "continuity residual needs at least 3 snapshots".into(),
        ));
    }
    let grid = record.grid();
    let u = record.units();
    let n = grid.len();
    let h = record.spacing();
    let mut report = ContinuityReport {
        times: Vec::new(),
        max_residual: Vec::new(),
    };
    for i in 1..record.len() - 1 {
        let before = record.snapshots[i - 1].density();
        let after = record.snapshots[i + 1].density();
        let psi = &record.snapshots[i];
        let comps = psi.components();
        let mut residual: Vec<f64> = before
            .iter()
            .zip(&after)
            .map(|(b, a)| (a - b) / (2.0 * h))
            .collect();
        for axis in 0..grid.dims() {
            let d = derivative_components(grid, psi.amplitudes(), comps, unit_order(axis), record.scheme)?;
            let mut j = vec![Complex64::new(0.0, 0.0); n];
            for c in 0..comps {
                for k in 0..n {
                    let im = (psi.amplitudes()[c * n + k].conj() * d[c * n + k]).im;
                    j[k].re += u.hbar / u.mass * im;
                }
            }
            let dj = derivative_components(grid, &j, 1, unit_order(axis), record.scheme)?;
            residual.iter_mut().zip(&dj).for_each(|(r, v)| *r += v.re);
        }
        report.times.push(psi.time);
        report
            .max_residual
            .push(residual.iter().fold(0.0_f64, |m, r| m.max(r.abs())));
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
