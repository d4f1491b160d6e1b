use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{LocalEvaluator, Observable, ObservableKind};
use crate::error::{BohmError, Result};
use crate::grid::{Point, MAX_DIMS};
use crate::wavefunction::WaveFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Support radius of the bump in units of the grid spacing.
    #[serde(default = "default_radius")]
    pub radius_cells: f64,
}

fn default_radius() -> f64 {
    10.0
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            radius_cells: default_radius(),
        }
    }
}

/// Ratios (Âψ_n)(Q)/ψ_n(Q) for ψ_n = ψ + φ/n, n = 1..n_max.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSequence {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// (Âφ)(Q)/φ(Q) as realised on the grid; ideally α + iγ.
    pub achieved: Complex64,
    /// φ(Q)/ψ(Q); ideally 1.
    pub phi_ratio: Complex64,
    pub ratios: Vec<Complex64>,
    pub limit: Complex64,
    /// Coefficient c of the c/n term.
    pub first_order: Complex64,
}

/// Smooth bump exp(1 − 1/(1 − r²/ε²)) with η(0) = 1 and support r < ε.
pub fn bump(r: f64, eps: f64) -> f64 {
    let s = r * r / (eps * eps);
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s)).exp()
    }
}

/// Value at h = 0 of the polynomial through (h_i, y_i).
fn polynomial_at_zero(h: &[f64], y: &[Complex64]) -> Complex64 {
    let mut out = Complex64::new(0.0, 0.0);
    for i in 0..h.len() {
        let mut w = 1.0;
        for j in 0..h.len() {
            if i != j {
                w *= h[j] / (h[j] - h[i]);
            }
        }
        out += y[i] * w;
    }
    out
}

/// Extrapolates r_n (n = 1..len) to n → ∞ on h = 1/n from n, n/2, n/4 and
/// n/8, then the first-order coefficient as the limit of n(r_n − L).
pub fn extrapolate_limit(ratios: &[Complex64]) -> Result<(Complex64, Complex64)> {
    let n = ratios.len();
    if n < 8 {
        return Err(BohmError::Config("extrapolation needs at least 8 terms".into()));
    }
    let ns = [n, n / 2, n / 4, n / 8];
    let h = ns.map(|k| 1.0 / k as f64);
    let limit = polynomial_at_zero(&h, &ns.map(|k| ratios[k - 1]));
    let first = polynomial_at_zero(&h, &ns.map(|k| (ratios[k - 1] - limit) * k as f64));
    Ok((limit, first))
}

/// Builds the perturbation φ = η·ψ(Q)·e^{ib(x−Q)} along the momentum axis
/// with b chosen so that (P̂φ)(Q) = (α + iγ)ψ(Q), and returns the ratio
/// sequence of ψ + φ/n.
pub fn robustness_probe(
    obs: &Observable,
    psi: &WaveFunction,
    q: &Point,
    gamma: f64,
    n_max: usize,
    config: ProbeConfig,
) -> Result<ProbeSequence> {
    let axis = match obs.kind {
        ObservableKind::MomentumAxis(a) => a,
        _ => {
            return Err(BohmError::Unsupported(
                "robustness probes are built for momentum observables".into(),
            ))
        }
    };
    psi.require_scalar("robustness_probe")?;
    if n_max < 8 {
        return Err(BohmError::Config("n_max must be at least 8".into()));
    }
    let grid = psi.grid();
    let dx = (0..grid.dims()).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
    let eps = config.radius_cells * dx;
    for a in 0..grid.dims() {
        let ax = grid.axis(a);
        let fits = if grid.is_periodic() {
            2.0 * eps < grid.length(a)
        } else {
            q[a] - eps >= ax.min && q[a] + eps <= ax.max
        };
        if !fits {
            return Err(BohmError::Config(format!(
                "probe support radius {eps} does not fit the grid along axis {a}"
            )));
        }
    }

    let base = LocalEvaluator::new(obs, psi, 0)?;
    base.density_checked(q)?;
    let (v, a_v) = base.values(q);
    let psi_q = v[0];
    let z = a_v[0] / psi_q;
    let hbar = psi.hbar();
    let b = Complex64::new(z.re, gamma) / hbar;

    let phi: Vec<Complex64> = grid.sample(|p| {
        let d = grid.displacement(q, &p);
        let r = (0..MAX_DIMS).map(|k| d[k] * d[k]).sum::<f64>().sqrt();
        let eta = bump(r, eps);
        if eta == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            psi_q * eta * (Complex64::i() * b * d[axis]).exp()
        }
    });
    let phi_wf = WaveFunction::new(grid.clone(), 1, phi.clone(), psi.units)?;
    let (pv, pa) = LocalEvaluator::new(obs, &phi_wf, 0)?.values(q);
    let achieved = pa[0] / pv[0];
    let phi_ratio = pv[0] / psi_q;

    let mut ratios = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let inv = 1.0 / n as f64;
        let data: Vec<Complex64> = psi
            .amplitudes()
            .iter()
            .zip(&phi)
            .map(|(p, f)| p + f * inv)
            .collect();
        let psi_n = WaveFunction::new(grid.clone(), 1, data, psi.units)?;
        let (vn, an) = LocalEvaluator::new(obs, &psi_n, 0)?.values(q);
        ratios.push(an[0] / vn[0]);
    }
    let (limit, first_order) = extrapolate_limit(&ratios)?;
    Ok(ProbeSequence {
        alpha: z.re,
        beta: z.im,
        gamma,
        achieved,
        phi_ratio,
        ratios,
        limit,
        first_order,
    })
}
