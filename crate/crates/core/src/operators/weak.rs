use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::local::{self, GridJets, LocalField};
use super::Observable;
use crate::error::{BohmError, Result};
use crate::grid::Point;
use crate::wavefunction::{WaveFunction, NODE_THRESHOLD};

/// Weak actual value and complex weak value of one observable at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakValueRecord {
    pub observable: String,
    pub a_w: f64,
    pub weak_re: f64,
    pub weak_im: f64,
    pub rho_at_q: f64,
}

impl WeakValueRecord {
    pub fn weak_value(&self) -> Complex64 {
        Complex64::new(self.weak_re, self.weak_im)
    }
}

/// An observable bound to one wave function, with the derivative fields
/// needed for point evaluation precomputed once.
#[derive(Debug, Clone)]
pub struct LocalEvaluator {
    observable: Observable,
    jets: GridJets,
    max_rho: f64,
    node_rel: f64,
}

impl LocalEvaluator {
    /// `extra` raises the precomputed derivative order beyond what the
    /// observable itself needs (one more for gradients of Âψ).
    pub fn new(observable: &Observable, psi: &WaveFunction, extra: u8) -> Result<Self> {
        let jets = observable.jets(psi, extra)?;
        Ok(Self {
            observable: observable.clone(),
            jets,
            max_rho: psi.max_density(),
            node_rel: NODE_THRESHOLD,
        })
    }

    pub fn with_node_threshold(mut self, relative_amplitude: f64) -> Self {
        self.node_rel = relative_amplitude;
        self
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    pub fn jets(&self) -> &GridJets {
        &self.jets
    }

    /// ρ(q), or a node error when it is at or below the threshold.
    pub fn density_checked(&self, q: &Point) -> Result<f64> {
        let rho = local::density(&self.jets.at(q));
        let threshold = self.node_rel * self.node_rel * self.max_rho;
        if !(rho > threshold) {
            return Err(BohmError::Node {
                rho,
                threshold,
                location: format!("{:?}", &q[..self.jets.grid().dims()]),
            });
        }
        Ok(rho)
    }

    /// (ψ(q), (Âψ)(q)).
    pub fn values(&self, q: &Point) -> ([Complex64; 2], [Complex64; 2]) {
        let at = self.jets.at(q);
        (local::values(&at), self.observable.eval_at(&at, None))
    }

    pub fn weak(&self, q: &Point) -> Result<WeakValueRecord> {
        let rho = self.density_checked(q)?;
        Ok(weak_from_local(&self.observable, &self.jets.at(q), rho))
    }
}

/// Weak actual value and weak value formed from point values of ψ and its
/// derivatives, given ρ at the point (already checked against nodes).
pub fn weak_from_local(obs: &Observable, at: &dyn LocalField, rho: f64) -> WeakValueRecord {
    let psi = local::values(at);
    let a_psi = obs.eval_at(at, None);
    let comps = at.components();
    let a_w = (0..comps)
        .map(|c| (psi[c].conj() * a_psi[c]).re)
        .sum::<f64>()
        / rho;
    let weak = if comps == 1 {
        a_psi[0] / psi[0]
    } else {
        let num: Complex64 = (0..comps).map(|c| psi[c].conj() * a_psi[c]).sum();
        num / rho
    };
    WeakValueRecord {
        observable: obs.label(),
        a_w,
        weak_re: weak.re,
        weak_im: weak.im,
        rho_at_q: rho,
    }
}

pub fn weak_actual_value(obs: &Observable, psi: &WaveFunction, q: &Point) -> Result<WeakValueRecord> {
    LocalEvaluator::new(obs, psi, 0)?.weak(q)
}

/// Weak value of a spin observable post-selected on position `q` and spin
/// state `chi_f`: χ_f†(Ŝψ)(q) / χ_f†ψ(q). Unlike the position-only weak
/// value this is not bounded by ħ/2.
pub fn spin_postselected_weak_value(
    obs: &Observable,
    psi: &WaveFunction,
    q: &Point,
    chi_f: [Complex64; 2],
) -> Result<Complex64> {
    if psi.components() != 2 {
        return Err(BohmError::Shape("spin post-selection needs a spinor".into()));
    }
    let ev = LocalEvaluator::new(obs, psi, 0)?;
    ev.density_checked(q)?;
    let (v, a) = ev.values(q);
    let den = chi_f[0].conj() * v[0] + chi_f[1].conj() * v[1];
    if den.norm() <= 1e-300 {
        return Err(BohmError::Degenerate(
            "post-selected spin state is orthogonal to ψ(q)".into(),
        ));
    }
    Ok((chi_f[0].conj() * a[0] + chi_f[1].conj() * a[1]) / den)
}
