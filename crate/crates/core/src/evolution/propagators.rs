use std::sync::Arc;

use num_complex::Complex64;

use super::{Propagator, PropagatorContext};
use crate::calculus::{fft_all, wave_numbers, DerivativeScheme};
use crate::error::{BohmError, Result};
use crate::grid::Grid;

/// Strang splitting e^{−iVdt/2ħ} e^{−iTdt/ħ} e^{−iVdt/2ħ} with the kinetic
/// factor applied in Fourier space.
pub struct SplitStep {
    grid: Grid,
    dt: f64,
    half_potential: Option<Vec<Complex64>>,
    kinetic: Vec<Complex64>,
}

impl SplitStep {
    pub fn new(ctx: &PropagatorContext) -> Result<Self> {
        if !ctx.grid.is_periodic() {
            return Err(BohmError::Config(
                "split-step propagation requires a periodic grid".into(),
            ));
        }
        let grid = ctx.grid.clone();
        let u = ctx.units;
        let half_potential = (!ctx.potential.is_zero()).then(|| {
            ctx.potential
                .sample(&grid)
                .into_iter()
                .map(|v| Complex64::new(0.0, -v * ctx.dt / (2.0 * u.hbar)).exp())
                .collect()
        });
        let ks: Vec<Vec<f64>> = (0..grid.dims()).map(|a| wave_numbers(&grid, a)).collect();
        let kinetic = (0..grid.len())
            .map(|flat| {
                let idx = grid.multi_index(flat);
                let k2: f64 = (0..grid.dims()).map(|a| ks[a][idx[a]].powi(2)).sum();
                Complex64::new(0.0, -u.hbar * k2 * ctx.dt / (2.0 * u.mass)).exp()
            })
            .collect();
        Ok(Self {
            grid,
            dt: ctx.dt,
            half_potential,
            kinetic,
        })
    }

    pub fn build(ctx: &PropagatorContext) -> Result<Arc<dyn Propagator>> {
        Ok(Arc::new(Self::new(ctx)?))
    }
}

impl Propagator for SplitStep {
    fn name(&self) -> &'static str {
        "split_step"
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn hamiltonian_scheme(&self) -> DerivativeScheme {
        DerivativeScheme::Spectral
    }

    fn step(&self, amplitudes: &mut [Complex64]) {
        let n = self.grid.len();
        for block in amplitudes.chunks_mut(n) {
            if let Some(v) = &self.half_potential {
                block.iter_mut().zip(v).for_each(|(a, f)| *a *= f);
            }
            fft_all(&self.grid, block, false);
            block.iter_mut().zip(&self.kinetic).for_each(|(a, f)| *a *= f);
            fft_all(&self.grid, block, true);
            if let Some(v) = &self.half_potential {
                block.iter_mut().zip(v).for_each(|(a, f)| *a *= f);
            }
        }
    }
}

/// (1 + iĤdt/2ħ)ψⁿ⁺¹ = (1 − iĤdt/2ħ)ψⁿ with Ĥ built from the three-point
/// Laplacian and ψ = 0 beyond the end points.
pub struct CrankNicolson {
    dt: f64,
    /// Off-diagonal and diagonal of Ĥ/ħ.
    off: f64,
    diag: Vec<f64>,
}

impl CrankNicolson {
    pub fn new(ctx: &PropagatorContext) -> Result<Self> {
        if ctx.grid.is_periodic() {
            return Err(BohmError::Config(
                "Crank-Nicolson propagation requires a box grid".into(),
            ));
        }
        if ctx.grid.dims() != 1 {
            return Err(BohmError::Unsupported(
                "Crank-Nicolson is implemented for 1D grids only".into(),
            ));
        }
        let u = ctx.units;
        let h = ctx.grid.spacing(0);
        let t = u.hbar * u.hbar / (2.0 * u.mass * h * h);
        let diag = ctx
            .potential
            .sample(ctx.grid)
            .into_iter()
            .map(|v| (2.0 * t + v) / u.hbar)
            .collect();
        Ok(Self {
            dt: ctx.dt,
            off: -t / u.hbar,
            diag,
        })
    }

    pub fn build(ctx: &PropagatorContext) -> Result<Arc<dyn Propagator>> {
        Ok(Arc::new(Self::new(ctx)?))
    }
}

impl Propagator for CrankNicolson {
    fn name(&self) -> &'static str {
        "crank_nicolson"
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn hamiltonian_scheme(&self) -> DerivativeScheme {
        DerivativeScheme::CentralFd2
    }

    fn step(&self, amplitudes: &mut [Complex64]) {
        let n = self.diag.len();
        let a = Complex64::new(0.0, 0.5 * self.dt);
        let off = a * self.off;
        let mut rhs = vec![Complex64::new(0.0, 0.0); n];
        let mut c_prime = vec![Complex64::new(0.0, 0.0); n];
        for block in amplitudes.chunks_mut(n) {
            for i in 0..n {
                let mut v = block[i] * (Complex64::new(1.0, 0.0) - a * self.diag[i]);
                if i > 0 {
                    v -= off * block[i - 1];
                }
                if i + 1 < n {
                    v -= off * block[i + 1];
                }
                rhs[i] = v;
            }
            // Thomas algorithm for the constant off-diagonal system
            let mut b = Complex64::new(1.0, 0.0) + a * self.diag[0];
            c_prime[0] = off / b;
            rhs[0] /= b;
            for i in 1..n {
                b = Complex64::new(1.0, 0.0) + a * self.diag[i] - off * c_prime[i - 1];
                c_prime[i] = off / b;
                rhs[i] = (rhs[i] - off * rhs[i - 1]) / b;
            }
            block[n - 1] = rhs[n - 1];
            for i in (0..n - 1).rev() {
                block[i] = rhs[i] - c_prime[i] * block[i + 1];
            }
        }
    }
}
