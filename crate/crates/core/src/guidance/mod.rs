//! Bohmian velocity field and trajectory integration.

use serde::{Deserialize, Serialize};

use crate::calculus::DerivativeScheme;
use crate::error::{BohmError, Result};
use crate::evolution::{hermite_weights, EvolutionRecord};
use crate::grid::{Grid, Point, MAX_DIMS};
use crate::operators::local::{self, GridJets, PointJet};
use crate::wavefunction::{WaveFunction, NODE_THRESHOLD};

/// Trajectories abort where ρ falls below this fraction of max ρ.
pub const TRAJECTORY_NODE_DENSITY: f64 = 1e-10;

/// Subdivisions of the snapshot spacing used when no step is given.
pub const DEFAULT_SUBSTEPS: usize = 8;

fn node_error(q: &Point, dims: usize, rho: f64, threshold: f64) -> BohmError {
    BohmError::Node {
        rho,
        threshold,
        location: format!("{:?}", &q[..dims]),
    }
}

fn checked_jets(psi: &WaveFunction, max_total: u8, q: &Point) -> Result<PointJet> {
    let jets = GridJets::of(psi, DerivativeScheme::default_for(psi.grid()), max_total)?;
    let at = PointJet::capture(&jets, q, max_total);
    let rho = local::density(&at);
    let threshold = NODE_THRESHOLD * NODE_THRESHOLD * psi.max_density();
    if !(rho > threshold) {
        return Err(node_error(q, psi.grid().dims(), rho, threshold));
    }
    Ok(at)
}

/// v = (ħ/m) Im(ψ†∇ψ)/ψ†ψ at `q`.
pub fn velocity_at(psi: &WaveFunction, q: &Point) -> Result<Point> {
    let at = checked_jets(psi, 1, q)?;
    Ok(local::velocity(&at, psi.grid().dims()))
}

/// ∇·v at `q`, from first and second grid derivatives of ψ.
pub fn velocity_divergence(psi: &WaveFunction, q: &Point) -> Result<f64> {
    let at = checked_jets(psi, 2, q)?;
    Ok(local::velocity_divergence(&at, psi.grid().dims()))
}

/// Snapshot jets of ψ and ∂ψ/∂t, giving ψ and its spatial derivatives at
/// any (q, t) in the record span by Hermite interpolation in time.
#[derive(Debug, Clone)]
pub struct GuidanceField {
    grid: Grid,
    start: f64,
    spacing: f64,
    states: Vec<GridJets>,
    rates: Vec<GridJets>,
    max_rho: Vec<f64>,
}

impl GuidanceField {
    /// `max_total` is the highest spatial derivative order kept (1 for
    /// velocities, 2 to include ∇·v).
    pub fn new(record: &EvolutionRecord, max_total: u8) -> Result<Self> {
        let scheme = record.scheme();
        let mut states = Vec::with_capacity(record.len());
        let mut rates = Vec::with_capacity(record.len());
        let mut max_rho = Vec::with_capacity(record.len());
        for (i, psi) in record.snapshots().iter().enumerate() {
            states.push(GridJets::of(psi, scheme, max_total)?);
            let rate = record.time_derivative(i)?;
            rates.push(GridJets::new(
                psi.grid(),
                &rate,
                psi.components(),
                psi.units,
                scheme,
                max_total,
            )?);
            max_rho.push(psi.max_density());
        }
        Ok(Self {
            grid: record.grid().clone(),
            start: record.start(),
            spacing: record.spacing(),
            states,
            rates,
            max_rho,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.start + self.spacing * (self.states.len() - 1) as f64
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        if self.states.len() == 1 {
            return (0, 0.0);
        }
        let x = ((t - self.start) / self.spacing).clamp(0.0, (self.states.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.states.len() - 2);
        (i, x - i as f64)
    }

    /// ψ and its derivatives up to `max_total` at (q, t).
    pub fn local(&self, q: &Point, t: f64, max_total: u8) -> PointJet {
        let (i, s) = self.locate(t);
        if self.states.len() == 1 {
            return PointJet::capture(&self.states[0], q, max_total);
        }
        let w = hermite_weights(s, self.spacing);
        let p0 = PointJet::capture(&self.states[i], q, max_total);
        let d0 = PointJet::capture(&self.rates[i], q, max_total);
        let p1 = PointJet::capture(&self.states[i + 1], q, max_total);
        let d1 = PointJet::capture(&self.rates[i + 1], q, max_total);
        PointJet::combine(&[(w[0], &p0), (w[1], &d0), (w[2], &p1), (w[3], &d1)])
    }

    /// Largest grid density of the two snapshots bracketing `t`.
    pub fn max_density(&self, t: f64) -> f64 {
        let (i, _) = self.locate(t);
        let j = (i + 1).min(self.max_rho.len() - 1);
        self.max_rho[i].max(self.max_rho[j])
    }

    /// Velocity and ρ at (q, t), and whether ρ clears the node threshold.
    pub fn velocity(&self, q: &Point, t: f64) -> (Point, f64, bool) {
        let at = self.local(q, t, 1);
        let rho = local::density(&at);
        let ok = rho > TRAJECTORY_NODE_DENSITY * self.max_density(t);
        let v = if ok {
            local::velocity(&at, self.grid.dims())
        } else {
            [0.0; MAX_DIMS]
        };
        (v, rho, ok)
    }

    pub fn divergence(&self, q: &Point, t: f64) -> f64 {
        local::velocity_divergence(&self.local(q, t, 2), self.grid.dims())
    }

    /// Step size and step count for a run from `q0`.
    fn plan(&self, q0: &Point, opts: &TrajectoryOptions) -> Result<(f64, usize)> {
        let dims = self.grid.dims();
        let t_end = opts.t_end.unwrap_or_else(|| self.end());
        if t_end < self.start || t_end > self.end() + 1e-9 * self.spacing.max(1.0) {
            return Err(BohmError::Config(format!(
                "trajectory end {t_end} outside the record span"
            )));
        }
        let dt = match opts.dt {
            Some(dt) => dt,
            None if self.states.len() > 1 => self.spacing / DEFAULT_SUBSTEPS as f64,
            None => {
                return Err(BohmError::Config(
                    "a single-snapshot record needs an explicit trajectory step".into(),
                ))
            }
        };
        if !(dt > 0.0) {
            return Err(BohmError::Config("trajectory step must be positive".into()));
        }
        if self.states.len() > 1 {
            let ratio = self.spacing / dt;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                return Err(BohmError::Config(format!(
                    "trajectory step {dt} does not divide the snapshot spacing {}",
                    self.spacing
                )));
            }
        }
        if !self.grid.contains(q0) {
            return Err(BohmError::Config(format!("start point {:?} is outside the grid", &q0[..dims])));
        }
        Ok((dt, ((t_end - self.start) / dt).round() as usize))
    }

    /// RK4 integration of dQ/dt = v(Q, t) from the record start.
    pub fn integrate(&self, q0: &Point, opts: &TrajectoryOptions) -> Result<Trajectory> {
        let (dt, steps) = self.plan(q0, opts)?;
        let mut traj = Trajectory {
            samples: Vec::with_capacity(steps + 1),
            dt_traj: dt,
            scheme: "rk4".into(),
            status: TrajectoryStatus::Completed,
        };
        let status = self.walk(*q0, dt, steps, |t, q, v, rho| {
            let div_v = if opts.divergence { self.divergence(&q, t) } else { f64::NAN };
            traj.samples.push(TrajectorySample { t, q, v, rho, div_v });
        })?;
        traj.status = status;
        Ok(traj)
    }

    /// Final position and status only, without keeping samples.
    pub fn transport(&self, q0: &Point, opts: &TrajectoryOptions) -> Result<(Point, TrajectoryStatus)> {
        let (dt, steps) = self.plan(q0, opts)?;
        let mut last = *q0;
        let status = self.walk(*q0, dt, steps, |_, q, _, _| last = q)?;
        Ok((last, status))
    }

    fn walk(
        &self,
        q0: Point,
        dt: f64,
        steps: usize,
        mut visit: impl FnMut(f64, Point, Point, f64),
    ) -> Result<TrajectoryStatus> {
        let dims = self.grid.dims();
        let mut q = self.grid.wrap(q0);
        let (v, rho, ok) = self.velocity(&q, self.start);
        if !ok {
            let threshold = TRAJECTORY_NODE_DENSITY * self.max_density(self.start);
            return Err(node_error(&q, dims, rho, threshold));
        }
        visit(self.start, q, v, rho);
        for n in 0..steps {
            let t = self.start + n as f64 * dt;
            let Some(next) = self.rk4(&q, t, dt) else {
                return Ok(TrajectoryStatus::NodeAborted { t });
            };
            if !self.grid.is_periodic() && !self.grid.contains(&next) {
                return Ok(TrajectoryStatus::LeftDomain { t: t + dt });
            }
            q = self.grid.wrap(next);
            let t1 = self.start + (n + 1) as f64 * dt;
            let (v, rho, ok) = self.velocity(&q, t1);
            if !ok {
                return Ok(TrajectoryStatus::NodeAborted { t: t1 });
            }
            visit(t1, q, v, rho);
        }
        Ok(TrajectoryStatus::Completed)
    }

    fn rk4(&self, q: &Point, t: f64, dt: f64) -> Option<Point> {
        let add = |a: &Point, b: &Point, h: f64| -> Point {
            let mut o = *a;
            for i in 0..MAX_DIMS {
                o[i] += h * b[i];
            }
            o
        };
        let stage = |p: &Point, s: f64| -> Option<Point> {
            let (v, _, ok) = self.velocity(p, s);
            ok.then_some(v)
        };
        let k1 = stage(q, t)?;
        let k2 = stage(&add(q, &k1, 0.5 * dt), t + 0.5 * dt)?;
        let k3 = stage(&add(q, &k2, 0.5 * dt), t + 0.5 * dt)?;
        let k4 = stage(&add(q, &k3, dt), t + dt)?;
        let mut out = *q;
        for i in 0..MAX_DIMS {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Some(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    /// Defaults to the snapshot spacing divided by 8.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Defaults to the record end.
    #[serde(default)]
    pub t_end: Option<f64>,
    /// Also record ∇·v at every sample.
    #[serde(default)]
    pub divergence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    NodeAborted { t: f64 },
    LeftDomain { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub q: Point,
    pub v: Point,
    pub rho: f64,
    /// ∇·v, NaN unless requested.
    pub div_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub dt_traj: f64,
    pub scheme: String,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn completed(&self) -> bool {
        self.status == TrajectoryStatus::Completed
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectories hold at least one sample")
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// ρ(Q(t))·exp(∫∇·v ds) per sample (trapezoidal integral), which stays
    /// constant along an exact trajectory. Needs samples with ∇·v.
    pub fn transported_density(&self) -> Vec<f64> {
        let mut integral = 0.0;
        let mut out = Vec::with_capacity(self.samples.len());
        for (i, s) in self.samples.iter().enumerate() {
            if i > 0 {
                let p = &self.samples[i - 1];
                integral += 0.5 * (s.t - p.t) * (s.div_v + p.div_v);
            }
            out.push(s.rho * integral.exp());
        }
        out
    }
}

/// Builds the guidance field of `record` and integrates one trajectory.
pub fn integrate_trajectory(record: &EvolutionRecord, q0: &Point, dt_traj: Option<f64>) -> Result<Trajectory> {
    let field = GuidanceField::new(record, 1)?;
    field.integrate(
        q0,
        &TrajectoryOptions {
            dt: dt_traj,
            ..TrajectoryOptions::default()
        },
    )
}

#[cfg(test)]
mod tests;
