//! Scenario configs and the pipelines that run them.
//!
//! A scenario is one JSON document naming a pipeline and the blocks it
//! needs. Running it yields a report (deterministic for a fixed config and
//! seed), a list of checks and a set of artifact files.

mod bundled;
mod pipelines;

use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{BohmError, Result};
use crate::evolution::{evolve, EvolutionRecord, PropagatorSpec, StateContext};
use crate::grid::{Axis, Boundary, Grid};
use crate::operators::{EigenTolerance, Observable, ObservableSpec, ProbeConfig};
use crate::potential::{self, BuildContext, Potential, Zero};
use crate::registry::Registry;
use crate::wavefunction::{Units, WaveFunction};

pub use bundled::{bundled, find_bundled, BundledScenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
    pub boundary: Boundary,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.axes.clone(), self.boundary).map_err(|e| BohmError::validation("grid", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Explicit start points, one coordinate list each.
    #[serde(default)]
    pub starts: Vec<Vec<f64>>,
    /// Additional starts drawn from |ψ₀|².
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Also evaluate the evolution-equation terms along each trajectory.
    #[serde(default)]
    pub terms: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivarianceSpec {
    /// Defaults to the end of the evolution.
    #[serde(default)]
    pub t_check: Option<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub dt_traj: Option<f64>,
}

fn default_bins() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BornRuleSpec {
    #[serde(default = "default_branch_tol")]
    pub eigen_tol: f64,
}

fn default_branch_tol() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Monte-Carlo averages are repeated over seeds seed, seed+1, …
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub equivariance: Option<EquivarianceSpec>,
    #[serde(default)]
    pub born_rule: Option<BornRuleSpec>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Case names; empty runs every registered case.
    #[serde(default)]
    pub cases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideSpec {
    pub energy: f64,
    pub j0: f64,
    /// Explicit detunings; otherwise `count` points over [−delta_max, delta_max].
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub delta_max: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub position: f64,
    #[serde(default)]
    pub width: f64,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_fit_tol")]
    pub fit_tol: f64,
    #[serde(default = "default_critical")]
    pub critical_rel_tol: f64,
    /// Forbidden detunings checked individually on top of the sweep.
    #[serde(default)]
    pub identity: Vec<f64>,
}

fn default_window() -> f64 {
    5.0
}

fn default_fit_tol() -> f64 {
    crate::waveguide::DEFAULT_FIT_TOL
}

fn default_critical() -> f64 {
    crate::waveguide::DEFAULT_CRITICAL_REL_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub gammas: Vec<f64>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub config: ProbeConfig,
}

fn default_n_max() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActualValuesSpec {
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub eigen_tol: EigenTolerance,
    /// Robustness probes for the first momentum observable.
    #[serde(default)]
    pub probes: Option<ProbeSpec>,
    /// Spin post-selection state as [[re, im], [re, im]].
    #[serde(default)]
    pub postselect: Option<[[f64; 2]; 2]>,
    /// Require the post-selected spin weak value to leave [−ħ/2, ħ/2].
    #[serde(default)]
    pub expect_anomalous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_norm")]
    pub norm_drift: f64,
    #[serde(default)]
    pub continuity: Option<f64>,
    #[serde(default)]
    pub energy_drift: Option<f64>,
    #[serde(default)]
    pub terms_residual: Option<f64>,
    #[serde(default = "default_probe")]
    pub probe: f64,
}

fn default_norm() -> f64 {
    1e-10
}

fn default_probe() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            norm_drift: default_norm(),
            continuity: None,
            energy_drift: None,
            terms_residual: None,
            probe: default_probe(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub pipeline: String,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub state: Option<Value>,
    #[serde(default)]
    pub potential: Option<Value>,
    #[serde(default)]
    pub propagator: Option<PropagatorSpec>,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub trajectories: Option<TrajectorySpec>,
    #[serde(default)]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default)]
    pub verify: Option<VerifySpec>,
    #[serde(default)]
    pub waveguide: Option<WaveguideSpec>,
    #[serde(default)]
    pub actual_values: Option<ActualValuesSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Output directory relative to the output root.
    #[serde(default)]
    pub output: Option<String>,
    /// Also dump every snapshot of the evolution.
    #[serde(default)]
    pub dump_fields: bool,
}

/// Blocks a pipeline may require.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Grid,
    State,
    Propagator,
    Trajectories,
    Ensemble,
    Waveguide,
    ActualValues,
}

impl Block {
    fn key(&self) -> &'static str {
        match self {
            Block::Grid => "grid",
            Block::State => "state",
            Block::Propagator => "propagator",
            Block::Trajectories => "trajectories",
            Block::Ensemble => "ensemble",
            Block::Waveguide => "waveguide",
            Block::ActualValues => "actual_values",
        }
    }

    fn present(&self, s: &Scenario) -> bool {
        match self {
            Block::Grid => s.grid.is_some(),
            Block::State => s.state.is_some(),
            Block::Propagator => s.propagator.is_some(),
            Block::Trajectories => s.trajectories.is_some(),
            Block::Ensemble => s.ensemble.is_some(),
            Block::Waveguide => s.waveguide.is_some(),
            Block::ActualValues => s.actual_values.is_some(),
        }
    }
}

/// The grid, units, potential and initial state of a scenario.
pub struct Setup {
    pub grid: Grid,
    pub units: Units,
    pub potential: Arc<dyn Potential>,
    pub psi0: WaveFunction,
    pub observables: Vec<Observable>,
}

impl Scenario {
    /// Parses and validates a config. Errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "config".to_string() } else { path };
            BohmError::validation(key, e.into_inner().to_string())
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<(Self, String)> {
        let text = fs::read_to_string(path)?;
        Ok((Self::from_json(&text)?, text))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(BohmError::validation("name", "must not be empty"));
        }
        let pipeline = pipeline_registry()
            .get(&self.pipeline)
            .map_err(|e| BohmError::validation("pipeline", e.to_string()))?;
        for block in pipeline.requires() {
            if !block.present(self) {
                return Err(BohmError::validation(
                    block.key(),
                    format!("required by the `{}` pipeline", self.pipeline),
                ));
            }
        }
        if let Some(g) = &self.grid {
            let grid = g.build()?;
            if !(self.units.hbar > 0.0 && self.units.mass > 0.0) {
                return Err(BohmError::validation("units", "hbar and mass must be positive"));
            }
            let ctx = BuildContext {
                grid: &grid,
                units: self.units,
            };
            let v = self.build_potential(&ctx)?;
            if self.state.is_some() {
                self.setup().map_err(|e| match e {
                    BohmError::Validation { .. } => e,
                    other => BohmError::validation("state", other.to_string()),
                })?;
            } else {
                for (i, o) in self.observables.iter().enumerate() {
                    o.build(&ctx, &v)
                        .and_then(|obs| obs.validate(&grid, 1))
                        .map_err(|e| BohmError::validation(format!("observables[{i}]"), e.to_string()))?;
                }
            }
            if let Some(p) = &self.propagator {
                if !crate::evolution::registry().contains(&p.method) {
                    return Err(BohmError::validation(
                        "propagator.method",
                        format!("unknown propagator `{}`", p.method),
                    ));
                }
            }
        }
        if let Some(e) = &self.ensemble {
            if e.samples == 0 || e.repeats == 0 {
                return Err(BohmError::validation("ensemble", "samples and repeats must be positive"));
            }
        }
        if let Some(v) = &self.verify {
            for c in &v.cases {
                if !crate::dynamics::verify_registry().contains(c) {
                    return Err(BohmError::validation("verify.cases", format!("unknown case `{c}`")));
                }
            }
        }
        Ok(())
    }

    fn build_potential(&self, ctx: &BuildContext) -> Result<Arc<dyn Potential>> {
        match &self.potential {
            Some(v) => potential::build(v, ctx).map_err(|e| match e {
                BohmError::Validation { .. } => e,
                other => BohmError::validation("potential", other.to_string()),
            }),
            None => Ok(Arc::new(Zero)),
        }
    }

    /// Builds grid, potential, initial state and observables.
    pub fn setup(&self) -> Result<Setup> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| BohmError::validation("grid", "missing"))?
            .build()?;
        let ctx = BuildContext {
            grid: &grid,
            units: self.units,
        };
        let potential = self.build_potential(&ctx)?;
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| BohmError::validation("state", "missing"))?;
        let psi0 = crate::evolution::analytic_state(
            state,
            &StateContext {
                grid: &grid,
                units: self.units,
            },
        )?;
        let observables = self
            .observables
            .iter()
            .map(|o| o.build(&ctx, &potential))
            .collect::<Result<Vec<_>>>()?;
        for (i, o) in observables.iter().enumerate() {
            o.validate(&grid, psi0.components())
                .map_err(|e| BohmError::validation(format!("observables[{i}]"), e.to_string()))?;
        }
        Ok(Setup {
            grid,
            units: self.units,
            potential,
            psi0,
            observables,
        })
    }

    /// Evolves the initial state with the scenario propagator.
    pub fn evolve(&self, setup: &Setup) -> Result<EvolutionRecord> {
        let spec = self
            .propagator
            .as_ref()
            .ok_or_else(|| BohmError::validation("propagator", "missing"))?;
        let prop = spec.build(&setup.grid, setup.units, setup.potential.clone())?;
        evolve(&setup.psi0, prop.as_ref(), setup.potential.clone(), spec.steps, spec.stride)
    }
}

/// SHA-256 of the config text, hex encoded.
pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    /// Passes when `value ≥ tolerance`.
    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value >= tolerance,
        }
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value: if pass { 1.0 } else { 0.0 },
            tolerance: 1.0,
            pass,
        }
    }
}

/// A file produced by a run, relative to its output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub contents: String,
}

pub struct PipelineOutput {
    pub checks: Vec<Check>,
    pub details: Value,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: Option<u64>,
}

/// A named way of running a scenario.
pub trait Pipeline: Send + Sync {
    fn describe(&self) -> &'static str;
    fn requires(&self) -> &'static [Block];
    fn run(&self, scenario: &Scenario, opts: &RunOptions) -> Result<PipelineOutput>;
}

pub fn pipeline_registry() -> &'static Registry<Arc<dyn Pipeline>> {
    static REG: OnceLock<Registry<Arc<dyn Pipeline>>> = OnceLock::new();
    REG.get_or_init(pipelines::registry)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub pipeline: String,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_override: Option<u64>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub details: Value,
}

pub struct RunResult {
    pub report: RunReport,
    pub artifacts: Vec<Artifact>,
}

impl RunResult {
    pub fn report_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.report)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `report.json` and every artifact under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.report_json()?)?;
        for a in &self.artifacts {
            let path = dir.join(&a.path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, &a.contents)?;
        }
        Ok(())
    }
}

/// Runs a validated scenario. `text` is the config as read, for the hash.
pub fn run(scenario: &Scenario, text: &str, opts: &RunOptions) -> Result<RunResult> {
    let pipeline = pipeline_registry().get(&scenario.pipeline)?;
    let out = pipeline.run(scenario, opts)?;
    let pass = !out.checks.is_empty() && out.checks.iter().all(|c| c.pass);
    Ok(RunResult {
        report: RunReport {
            scenario: scenario.name.clone(),
            pipeline: scenario.pipeline.clone(),
            config_hash: config_hash(text),
            seed_override: opts.seed,
            checks: out.checks,
            pass,
            details: out.details,
        },
        artifacts: out.artifacts,
    })
}
