//! Self-adjoint observables acting on grid wave functions, the local
//! eigencondition test for actual values, weak actual values and weak
//! values, and the robustness-probe sequences.

mod eigen;
pub mod local;
mod probe;
mod weak;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::calculus::{add_orders, unit_order, DerivativeScheme, Order, ZERO_ORDER};
use crate::error::{BohmError, Result};
use crate::grid::Grid;
use crate::potential::{self, BuildContext, Potential};
use crate::wavefunction::{inner, WaveFunction};

pub use eigen::{local_eigen_check, ActualValueVerdict, EigenTolerance};
pub use local::{GridJets, LocalField, PointJet};
pub use probe::{extrapolate_limit, robustness_probe, ProbeConfig, ProbeSequence};
pub use weak::{
    spin_postselected_weak_value, weak_actual_value, weak_from_local, LocalEvaluator, WeakValueRecord,
};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone)]
pub enum ObservableKind {
    PositionAxis(usize),
    MomentumAxis(usize),
    Kinetic,
    PotentialField(Arc<dyn Potential>),
    Hamiltonian(Arc<dyn Potential>),
    /// (ħ/2) σ·n for a unit vector n.
    SpinComponent([f64; 3]),
    Scaled(f64, Box<ObservableKind>),
    Sum(Vec<ObservableKind>),
}

/// An observable plus the derivative scheme used for its differential parts
/// (`None` picks the grid default).
#[derive(Debug, Clone)]
pub struct Observable {
    pub kind: ObservableKind,
    pub scheme: Option<DerivativeScheme>,
}

impl ObservableKind {
    fn max_order(&self) -> u8 {
        match self {
            ObservableKind::PositionAxis(_)
            | ObservableKind::PotentialField(_)
            | ObservableKind::SpinComponent(_) => 0,
            ObservableKind::MomentumAxis(_) => 1,
            ObservableKind::Kinetic | ObservableKind::Hamiltonian(_) => 2,
            ObservableKind::Scaled(_, inner) => inner.max_order(),
            ObservableKind::Sum(terms) => terms.iter().map(|t| t.max_order()).max().unwrap_or(0),
        }
    }

    fn validate(&self, grid: &Grid, components: usize) -> Result<()> {
        match self {
            ObservableKind::PositionAxis(a) | ObservableKind::MomentumAxis(a) => {
                if *a >= grid.dims() {
                    return Err(BohmError::Config(format!(
                        "axis {a} outside a {}-dimensional grid",
                        grid.dims()
                    )));
                }
            }
            ObservableKind::SpinComponent(n) => {
                if components != 2 {
                    return Err(BohmError::Shape(
                        "spin observables need a two-component spinor".into(),
                    ));
                }
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                if (len - 1.0).abs() > 1e-12 {
                    return Err(BohmError::Config(format!(
                        "spin direction must be a unit vector, |n| = {len}"
                    )));
                }
            }
            ObservableKind::Scaled(c, inner) => {
                if !c.is_finite() {
                    return Err(BohmError::Config("scale factor must be finite".into()));
                }
                inner.validate(grid, components)?;
            }
            ObservableKind::Sum(terms) => {
                if terms.is_empty() {
                    return Err(BohmError::Config("empty observable sum".into()));
                }
                for t in terms {
                    t.validate(grid, components)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn label(&self) -> String {
        match self {
            ObservableKind::PositionAxis(a) => format!("x{a}"),
            ObservableKind::MomentumAxis(a) => format!("p{a}"),
            ObservableKind::Kinetic => "kinetic".into(),
            ObservableKind::PotentialField(_) => "potential".into(),
            ObservableKind::Hamiltonian(_) => "energy".into(),
            ObservableKind::SpinComponent(n) => {
                if n == &[0.0, 0.0, 1.0] {
                    "spin_z".into()
                } else if n == &[1.0, 0.0, 0.0] {
                    "spin_x".into()
                } else if n == &[0.0, 1.0, 0.0] {
                    "spin_y".into()
                } else {
                    format!("spin_n({},{},{})", n[0], n[1], n[2])
                }
            }
            ObservableKind::Scaled(c, inner) => format!("{c}*{}", inner.label()),
            ObservableKind::Sum(terms) => terms
                .iter()
                .map(|t| t.label())
                .collect::<Vec<_>>()
                .join("+"),
        }
    }

    /// Accumulates `scale·(Âφ)`, or its derivative along `shift`, at the
    /// point into `out`.
    fn accumulate(
        &self,
        local: &dyn LocalField,
        shift: Option<usize>,
        scale: f64,
        out: &mut [Complex64; 2],
    ) {
        let s: Order = shift.map(unit_order).unwrap_or(ZERO_ORDER);
        let u = local.units();
        let q = local.point();
        let comps = local.components();
        match self {
            ObservableKind::PositionAxis(a) => {
                for (c, o) in out.iter_mut().enumerate().take(comps) {
                    let mut v = local.derivative(c, s) * q[*a];
                    if shift == Some(*a) {
                        v += local.value(c);
                    }
                    *o += v * scale;
                }
            }
            ObservableKind::MomentumAxis(a) => {
                let ord = add_orders(unit_order(*a), s);
                for (c, o) in out.iter_mut().enumerate().take(comps) {
                    *o += -I * u.hbar * local.derivative(c, ord) * scale;
                }
            }
            ObservableKind::Kinetic => {
                let k = -u.hbar * u.hbar / (2.0 * u.mass);
                let dims = local.dims();
                for (c, o) in out.iter_mut().enumerate().take(comps) {
                    let mut lap = Complex64::new(0.0, 0.0);
                    for a in 0..dims {
                        let mut two = ZERO_ORDER;
                        two[a] = 2;
                        lap += local.derivative(c, add_orders(two, s));
                    }
                    *o += lap * (k * scale);
                }
            }
            ObservableKind::PotentialField(v) => potential_term(v.as_ref(), local, shift, scale, out),
            ObservableKind::Hamiltonian(v) => {
                ObservableKind::Kinetic.accumulate(local, shift, scale, out);
                potential_term(v.as_ref(), local, shift, scale, out);
            }
            ObservableKind::SpinComponent(n) => {
                let a = local.derivative(0, s);
                let b = local.derivative(1, s);
                let h = 0.5 * u.hbar * scale;
                let nx = n[0];
                let ny = n[1];
                let nz = n[2];
                // σ·n = [[nz, nx − i ny], [nx + i ny, −nz]]
                out[0] += (a * nz + b * Complex64::new(nx, -ny)) * h;
                out[1] += (a * Complex64::new(nx, ny) - b * nz) * h;
            }
            ObservableKind::Scaled(c, inner) => inner.accumulate(local, shift, scale * c, out),
            ObservableKind::Sum(terms) => {
                for t in terms {
                    t.accumulate(local, shift, scale, out);
                }
            }
        }
    }
}

fn potential_term(
    v: &dyn Potential,
    local: &dyn LocalField,
    shift: Option<usize>,
    scale: f64,
    out: &mut [Complex64; 2],
) {
    let q = local.point();
    let val = v.value(&q);
    let s: Order = shift.map(unit_order).unwrap_or(ZERO_ORDER);
    let grad = shift.map(|b| v.gradient(&q)[b]).unwrap_or(0.0);
    for (c, o) in out.iter_mut().enumerate().take(local.components()) {
        let mut term = local.derivative(c, s) * val;
        if shift.is_some() {
            term += local.value(c) * grad;
        }
        *o += term * scale;
    }
}

impl Observable {
    pub fn new(kind: ObservableKind) -> Self {
        Self { kind, scheme: None }
    }

    pub fn with_scheme(mut self, scheme: DerivativeScheme) -> Self {
        self.scheme = Some(scheme);
        self
    }

    pub fn position(axis: usize) -> Self {
        Self::new(ObservableKind::PositionAxis(axis))
    }

    pub fn momentum(axis: usize) -> Self {
        Self::new(ObservableKind::MomentumAxis(axis))
    }

    pub fn kinetic() -> Self {
        Self::new(ObservableKind::Kinetic)
    }

    pub fn hamiltonian(v: Arc<dyn Potential>) -> Self {
        Self::new(ObservableKind::Hamiltonian(v))
    }

    pub fn free_hamiltonian() -> Self {
        Self::hamiltonian(Arc::new(potential::Zero))
    }

    pub fn spin(n: [f64; 3]) -> Self {
        Self::new(ObservableKind::SpinComponent(n))
    }

    pub fn spin_z() -> Self {
        Self::spin([0.0, 0.0, 1.0])
    }

    pub fn label(&self) -> String {
        self.kind.label()
    }

    /// Highest derivative order the observable applies.
    pub fn order(&self) -> u8 {
        self.kind.max_order()
    }

    pub fn scheme_for(&self, grid: &Grid) -> DerivativeScheme {
        self.scheme.unwrap_or_else(|| DerivativeScheme::default_for(grid))
    }

    /// Checks grid, boundary and component compatibility.
    pub fn validate(&self, grid: &Grid, components: usize) -> Result<()> {
        self.scheme_for(grid).check(grid)?;
        self.kind.validate(grid, components)
    }

    /// (Âφ) at the point of `local`; with `shift = Some(b)` returns ∂_b(Âφ).
    pub fn eval_at(&self, local: &dyn LocalField, shift: Option<usize>) -> [Complex64; 2] {
        let mut out = [Complex64::new(0.0, 0.0); 2];
        self.kind.accumulate(local, shift, 1.0, &mut out);
        out
    }

    /// Jets of `psi` sufficient to evaluate this observable, plus `extra`
    /// derivative orders.
    pub fn jets(&self, psi: &WaveFunction, extra: u8) -> Result<GridJets> {
        self.validate(psi.grid(), psi.components())?;
        GridJets::of(psi, self.scheme_for(psi.grid()), self.order() + extra)
    }

    /// Grid samples of Âψ.
    pub fn apply(&self, psi: &WaveFunction) -> Result<Vec<Complex64>> {
        let jets = self.jets(psi, 0)?;
        Ok(self.apply_jets(&jets))
    }

    pub(crate) fn apply_jets(&self, jets: &GridJets) -> Vec<Complex64> {
        let n = jets.grid().len();
        let comps = jets.components();
        let mut out = vec![Complex64::new(0.0, 0.0); n * comps];
        for flat in 0..n {
            let v = self.eval_at(&jets.node(flat), None);
            for c in 0..comps {
                out[c * n + flat] = v[c];
            }
        }
        out
    }

    pub fn apply_wave(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        let data = self.apply(psi)?;
        Ok(WaveFunction::new(psi.grid().clone(), psi.components(), data, psi.units)?.with_time(psi.time))
    }
}

/// ⟨ψ|Â|ψ⟩ with its imaginary residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    pub imag_residual: f64,
}

pub const SELF_ADJOINT_WARN: f64 = 1e-8;
pub const SELF_ADJOINT_FAIL: f64 = 1e-6;

pub fn expectation(obs: &Observable, psi: &WaveFunction) -> Result<Expectation> {
    let a_psi = obs.apply(psi)?;
    let z = inner(psi.amplitudes(), &a_psi) * psi.grid().cell_volume();
    let scale = z.re.abs().max(1.0);
    if z.im.abs() > SELF_ADJOINT_FAIL * scale {
        return Err(BohmError::SelfAdjointness { residual: z.im });
    }
    if z.im.abs() > SELF_ADJOINT_WARN * scale {
        log::warn!("<{}> has imaginary residual {:.3e}", obs.label(), z.im);
    }
    Ok(Expectation {
        value: z.re,
        imag_residual: z.im,
    })
}

/// Scenario-level observable descriptor, e.g.
/// `{"kind": "momentum", "axis": 0, "scheme": "spectral"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableSpec {
    Position {
        #[serde(default)]
        axis: usize,
    },
    Momentum {
        #[serde(default)]
        axis: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scheme: Option<DerivativeScheme>,
    },
    Kinetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scheme: Option<DerivativeScheme>,
    },
    /// Uses the scenario potential unless one is given inline.
    Potential {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        potential: Option<Value>,
    },
    Hamiltonian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        potential: Option<Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scheme: Option<DerivativeScheme>,
    },
    Spin {
        n: [f64; 3],
    },
    SpinZ,
    Scaled {
        c: f64,
        inner: Box<ObservableSpec>,
    },
    Sum {
        terms: Vec<ObservableSpec>,
    },
}

impl ObservableSpec {
    /// Resolves the descriptor; `default_potential` backs potential and
    /// Hamiltonian entries without an inline potential.
    pub fn build(
        &self,
        ctx: &BuildContext,
        default_potential: &Arc<dyn Potential>,
    ) -> Result<Observable> {
        let mut scheme = None;
        let kind = self.kind(ctx, default_potential, &mut scheme)?;
        Ok(Observable { kind, scheme })
    }

    fn kind(
        &self,
        ctx: &BuildContext,
        default_potential: &Arc<dyn Potential>,
        scheme: &mut Option<DerivativeScheme>,
    ) -> Result<ObservableKind> {
        let pick = |s: &Option<DerivativeScheme>, scheme: &mut Option<DerivativeScheme>| {
            if scheme.is_none() {
                *scheme = *s;
            }
        };
        let pot = |p: &Option<Value>| -> Result<Arc<dyn Potential>> {
            match p {
                Some(v) => potential::build(v, ctx),
                None => Ok(default_potential.clone()),
            }
        };
        Ok(match self {
            ObservableSpec::Position { axis } => ObservableKind::PositionAxis(*axis),
            ObservableSpec::Momentum { axis, scheme: s } => {
                pick(s, scheme);
                ObservableKind::MomentumAxis(*axis)
            }
            ObservableSpec::Kinetic { scheme: s } => {
                pick(s, scheme);
                ObservableKind::Kinetic
            }
            ObservableSpec::Potential { potential } => {
                ObservableKind::PotentialField(pot(potential)?)
            }
            ObservableSpec::Hamiltonian { potential, scheme: s } => {
                pick(s, scheme);
                ObservableKind::Hamiltonian(pot(potential)?)
            }
            ObservableSpec::Spin { n } => ObservableKind::SpinComponent(*n),
            ObservableSpec::SpinZ => ObservableKind::SpinComponent([0.0, 0.0, 1.0]),
            ObservableSpec::Scaled { c, inner } => {
                ObservableKind::Scaled(*c, Box::new(inner.kind(ctx, default_potential, scheme)?))
            }
            ObservableSpec::Sum { terms } => ObservableKind::Sum(
                terms
                    .iter()
                    .map(|t| t.kind(ctx, default_potential, scheme))
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

/// Unit vector helper for spin directions.
pub fn unit_vector(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}
