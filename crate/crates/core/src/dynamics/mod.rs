//! Weak actual values along trajectories and the terms of their evolution
//! equation.

mod cases;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calculus::unit_order;
use crate::error::{BohmError, Result};
use crate::evolution::EvolutionRecord;
use crate::grid::Point;
use crate::guidance::{GuidanceField, Trajectory};
use crate::operators::{local, weak_actual_value, weak_from_local, LocalEvaluator, LocalField, Observable, WeakValueRecord};
use crate::wavefunction::{WaveFunction, NODE_THRESHOLD};

pub use cases::{registry as verify_registry, verify_case, CaseCheck, ExpectedTerms, TermDeviation, VerifyCase, VerifyReport};

/// a_w at one trajectory sample; `weak` is `None` where ρ is below the
/// operator node threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwSample {
    pub t: f64,
    pub q: Point,
    pub weak: Option<WeakValueRecord>,
}

/// Weak actual value of `obs` at every sample of `traj`, from the
/// time-interpolated ψ of `record`.
pub fn aw_along(traj: &Trajectory, record: &EvolutionRecord, obs: &Observable) -> Result<Vec<AwSample>> {
    obs.validate(record.grid(), record.snapshots()[0].components())?;
    let order = obs.order();
    let field = GuidanceField::new(record, order)?;
    Ok(traj
        .samples
        .iter()
        .map(|s| {
            let at = field.local(&s.q, s.t, order);
            let rho = local::density(&at);
            let threshold = NODE_THRESHOLD * NODE_THRESHOLD * field.max_density(s.t);
            let weak = (rho > threshold).then(|| weak_from_local(obs, &at, rho));
            AwSample { t: s.t, q: s.q, weak }
        })
        .collect())
}

/// The three right-hand terms of da_w/dt along a trajectory and the
/// finite-difference left-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTerms {
    pub t: f64,
    pub a_w: f64,
    pub quantum_dynamical: f64,
    pub convective: f64,
    pub divergence_correction: f64,
    pub rhs_total: f64,
    pub lhs_fd: f64,
    pub residual: f64,
}

/// Right-hand terms at one point of a grid state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTerms {
    pub a_w: f64,
    pub quantum_dynamical: f64,
    pub convective: f64,
    pub divergence_correction: f64,
}

impl PointTerms {
    pub fn total(&self) -> f64 {
        self.quantum_dynamical + self.convective + self.divergence_correction
    }
}

/// Evaluates the right-hand terms for `obs` at `q` on the grid state `psi`,
/// with Ĥ the record's generator.
pub fn point_terms(obs: &Observable, h: &Observable, psi: &WaveFunction, q: &Point) -> Result<PointTerms> {
    let dims = psi.grid().dims();
    let comps = psi.components();
    let u = psi.units;
    let extra = 2u8.saturating_sub(obs.order()).max(1);
    let ev = LocalEvaluator::new(obs, psi, extra)?;
    let rho = ev.density_checked(q)?;
    let at = ev.jets().at(q);
    let p = local::values(&at);
    let a_psi = obs.eval_at(&at, None);

    let h_psi = WaveFunction::new(psi.grid().clone(), comps, h.apply(psi)?, u)?;
    let (hp, a_hp) = LocalEvaluator::new(obs, &h_psi, 0)?.values(q);

    let mut bracket = Complex64::new(0.0, 0.0);
    let mut n = Complex64::new(0.0, 0.0);
    for c in 0..comps {
        bracket += p[c].conj() * a_hp[c] - hp[c].conj() * a_psi[c];
        n += p[c].conj() * a_psi[c];
    }
    let quantum_dynamical = (bracket / Complex64::new(0.0, u.hbar)).re / rho;
    let a_w = n.re / rho;

    let v = local::velocity(&at, dims);
    let mut convective = 0.0;
    for (axis, va) in v.iter().enumerate().take(dims) {
        let d_a_psi = obs.eval_at(&at, Some(axis));
        let grad: f64 = (0..comps)
            .map(|c| (at.derivative(c, unit_order(axis)).conj() * a_psi[c] + p[c].conj() * d_a_psi[c]).re)
            .sum();
        convective += va * grad;
    }
    convective /= rho;
    let divergence_correction = a_w * local::velocity_divergence(&at, dims);
    Ok(PointTerms {
        a_w,
        quantum_dynamical,
        convective,
        divergence_correction,
    })
}

fn sample_terms(traj: &Trajectory, record: &EvolutionRecord, obs: &Observable, i: usize) -> Result<PointTerms> {
    let s = &traj.samples[i];
    let psi = record.state_at(s.t)?;
    point_terms(obs, &record.hamiltonian(), &psi, &s.q)
}

fn assemble(t: f64, mid: PointTerms, before: f64, after: f64, h: f64) -> EvolutionTerms {
    let rhs_total = mid.quantum_dynamical + mid.convective + mid.divergence_correction;
    let lhs_fd = (after - before) / (2.0 * h);
    EvolutionTerms {
        t,
        a_w: mid.a_w,
        quantum_dynamical: mid.quantum_dynamical,
        convective: mid.convective,
        divergence_correction: mid.divergence_correction,
        rhs_total,
        lhs_fd,
        residual: (lhs_fd - rhs_total).abs(),
    }
}

/// Terms of the evolution equation at interior sample `index` of `traj`.
pub fn evolution_terms(
    traj: &Trajectory,
    record: &EvolutionRecord,
    obs: &Observable,
    index: usize,
) -> Result<EvolutionTerms> {
    if index == 0 || index + 1 >= traj.len() {
        return Err(BohmError::Config(format!(
            "sample {index} has no neighbours on both sides (trajectory of {} samples)",
            traj.len()
        )));
    }
    obs.validate(record.grid(), record.snapshots()[0].components())?;
    let mid = sample_terms(traj, record, obs, index)?;
    let before = sample_aw(traj, record, obs, index - 1)?;
    let after = sample_aw(traj, record, obs, index + 1)?;
    Ok(assemble(traj.samples[index].t, mid, before, after, traj.dt_traj))
}

fn sample_aw(traj: &Trajectory, record: &EvolutionRecord, obs: &Observable, i: usize) -> Result<f64> {
    let s = &traj.samples[i];
    Ok(weak_actual_value(obs, &record.state_at(s.t)?, &s.q)?.a_w)
}

/// Terms at every interior sample, reusing each sample's a_w.
pub fn evolution_terms_series(
    traj: &Trajectory,
    record: &EvolutionRecord,
    obs: &Observable,
) -> Result<Vec<EvolutionTerms>> {
    obs.validate(record.grid(), record.snapshots()[0].components())?;
    if traj.len() < 3 {
        return Err(BohmError::Config("trajectory needs at least 3 samples".into()));
    }
    let terms: Vec<PointTerms> = (0..traj.len())
        .map(|i| sample_terms(traj, record, obs, i))
        .collect::<Result<_>>()?;
    Ok((1..traj.len() - 1)
        .map(|i| {
            assemble(
                traj.samples[i].t,
                terms[i],
                terms[i - 1].a_w,
                terms[i + 1].a_w,
                traj.dt_traj,
            )
        })
        .collect())
}

/// An observable with explicit time dependence.
pub trait TimeDependentObservable: Send + Sync {
    fn at(&self, t: f64) -> Observable;
    /// ∂Â/∂t at time `t`.
    fn rate(&self, t: f64) -> Observable;
}

/// f(t)·Â for a fixed Â.
#[derive(Debug, Clone)]
pub struct Modulated {
    pub base: Observable,
    pub profile: Profile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Profile {
    Constant,
    Linear,
    Cosine { omega: f64 },
}

impl Profile {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Profile::Constant => 1.0,
            Profile::Linear => t,
            Profile::Cosine { omega } => (omega * t).cos(),
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match self {
            Profile::Constant => 0.0,
            Profile::Linear => 1.0,
            Profile::Cosine { omega } => -omega * (omega * t).sin(),
        }
    }
}

impl TimeDependentObservable for Modulated {
    fn at(&self, t: f64) -> Observable {
        scaled(&self.base, self.profile.value(t))
    }

    fn rate(&self, t: f64) -> Observable {
        scaled(&self.base, self.profile.rate(t))
    }
}

fn scaled(base: &Observable, c: f64) -> Observable {
    Observable {
        kind: crate::operators::ObservableKind::Scaled(c, Box::new(base.kind.clone())),
        scheme: base.scheme,
    }
}

/// Re[ψ†(∂Â/∂t)ψ]/ρ at `q`, evaluated at the state's own time.
pub fn time_dependent_correction(obs: &dyn TimeDependentObservable, psi: &WaveFunction, q: &Point) -> Result<f64> {
    Ok(weak_actual_value(&obs.rate(psi.time), psi, q)?.a_w)
}
