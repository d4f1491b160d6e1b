use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{LocalEvaluator, Observable};
use crate::error::Result;
use crate::grid::Point;
use crate::wavefunction::WaveFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenTolerance {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_floor")]
    pub abs_floor: f64,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_floor() -> f64 {
    1e-12
}

impl Default for EigenTolerance {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            abs_floor: default_floor(),
        }
    }
}

impl EigenTolerance {
    pub fn relative(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Outcome of the local eigencondition test at one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActualValueVerdict {
    pub holds: bool,
    pub lambda: Option<f64>,
    pub ratio_re: f64,
    pub ratio_im: f64,
    pub imag_fraction: f64,
    /// Spinors only: |Âψ − zψ| / (|Âψ| + floor) at the point.
    pub residual: f64,
    pub tolerance: EigenTolerance,
}

impl ActualValueVerdict {
    pub fn ratio(&self) -> Complex64 {
        Complex64::new(self.ratio_re, self.ratio_im)
    }
}

impl LocalEvaluator {
    /// Tests (Âψ)(q) = λψ(q) with real λ. For spinors the candidate is
    /// z = ψ†Âψ/ψ†ψ and the vector residual must vanish as well.
    pub fn eigen(&self, q: &Point, tol: EigenTolerance) -> Result<ActualValueVerdict> {
        let rho = self.density_checked(q)?;
        let (psi, a_psi) = self.values(q);
        let comps = self.jets().components();
        let (z, residual) = if comps == 1 {
            (a_psi[0] / psi[0], 0.0)
        } else {
            let num: Complex64 = (0..comps).map(|c| psi[c].conj() * a_psi[c]).sum();
            let z = num / rho;
            let miss: f64 = (0..comps)
                .map(|c| (a_psi[c] - z * psi[c]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let scale: f64 = (0..comps).map(|c| a_psi[c].norm_sqr()).sum::<f64>().sqrt();
            (z, miss / (scale + tol.abs_floor))
        };
        let imag_fraction = if z.norm() > 0.0 { z.im.abs() / z.norm() } else { 0.0 };
        let holds = z.im.abs() <= tol.tol * (z.norm() + tol.abs_floor) && residual <= tol.tol;
        Ok(ActualValueVerdict {
            holds,
            lambda: holds.then_some(z.re),
            ratio_re: z.re,
            ratio_im: z.im,
            imag_fraction,
            residual,
            tolerance: tol,
        })
    }
}

pub fn local_eigen_check(
    obs: &Observable,
    psi: &WaveFunction,
    q: &Point,
    tol: EigenTolerance,
) -> Result<ActualValueVerdict> {
    LocalEvaluator::new(obs, psi, 0)?.eigen(q, tol)
}
