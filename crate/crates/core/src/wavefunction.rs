//! Wave functions on a grid, their densities, and the polar decomposition
//! ψ = R·exp(iS/ħ).

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{BohmError, Result};
use crate::grid::{Grid, Point};
use crate::interp::Stencil;

/// Default node threshold relative to max |ψ|.
pub const NODE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for Units {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid,
    components: usize,
    amplitudes: Vec<Complex64>,
    pub time: f64,
    pub units: Units,
}

impl WaveFunction {
    pub fn new(
        grid: Grid,
        components: usize,
        amplitudes: Vec<Complex64>,
        units: Units,
    ) -> Result<Self> {
        if components == 0 || components > 2 {
            return Err(BohmError::Shape(format!(
                "components must be 1 or 2, got {components}"
            )));
        }
        if amplitudes.len() != grid.len() * components {
            return Err(BohmError::Shape(format!(
                "{} amplitudes for {} points x {} components",
                amplitudes.len(),
                grid.len(),
                components
            )));
        }
        Ok(Self {
            grid,
            components,
            amplitudes,
            time: 0.0,
            units,
        })
    }

    pub fn scalar(grid: Grid, units: Units, f: impl FnMut(Point) -> Complex64) -> Self {
        let amplitudes = grid.sample(f);
        Self {
            grid,
            components: 1,
            amplitudes,
            time: 0.0,
            units,
        }
    }

    /// Product state φ(q)⊗χ.
    pub fn separable_spinor(spatial: &WaveFunction, chi: [Complex64; 2]) -> Result<Self> {
        spatial.require_scalar("separable_spinor")?;
        let mut amplitudes = Vec::with_capacity(2 * spatial.len());
        for c in chi {
            amplitudes.extend(spatial.amplitudes.iter().map(|a| a * c));
        }
        let mut out = Self::new(spatial.grid.clone(), 2, amplitudes, spatial.units)?;
        out.time = spatial.time;
        Ok(out)
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_scalar(&self) -> bool {
        self.components == 1
    }

    /// Grid points per component.
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let n = self.len();
        &self.amplitudes[c * n..(c + 1) * n]
    }

    pub fn hbar(&self) -> f64 {
        self.units.hbar
    }

    pub fn mass(&self) -> f64 {
        self.units.mass
    }

    pub(crate) fn require_scalar(&self, what: &str) -> Result<()> {
        if !self.is_scalar() {
            return Err(BohmError::Unsupported(format!(
                "{what} needs a scalar wave function"
            )));
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &WaveFunction) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.components != other.components {
            return Err(BohmError::Shape(format!(
                "component counts differ ({} vs {})",
                self.components, other.components
            )));
        }
        Ok(())
    }

    /// ρ = ψ†ψ per grid point.
    pub fn density(&self) -> Vec<f64> {
        let n = self.len();
        let mut rho = vec![0.0; n];
        for c in 0..self.components {
            for (r, a) in rho.iter_mut().zip(&self.amplitudes[c * n..(c + 1) * n]) {
                *r += a.norm_sqr();
            }
        }
        rho
    }

    pub fn norm(&self) -> f64 {
        (self.density().iter().sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn normalize(&self) -> Result<WaveFunction> {
        let norm = self.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(BohmError::Degenerate(format!(
                "cannot normalize a state of norm {norm}"
            )));
        }
        let mut out = self.clone();
        out.amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(out)
    }

    /// Σ φ†ψ Δx^dims with `self` as the bra.
    pub fn inner_product(&self, psi: &WaveFunction) -> Result<Complex64> {
        self.check_compatible(psi)?;
        Ok(inner(&self.amplitudes, &psi.amplitudes) * self.grid.cell_volume())
    }

    /// Interpolated amplitudes at `q`, one per component.
    pub fn value_at(&self, q: &Point) -> [Complex64; 2] {
        let st = Stencil::new(&self.grid, q);
        let mut out = [Complex64::new(0.0, 0.0); 2];
        for (c, o) in out.iter_mut().enumerate().take(self.components) {
            *o = st.complex(self.component(c));
        }
        out
    }

    pub fn density_at(&self, q: &Point) -> f64 {
        self.value_at(q)[..self.components]
            .iter()
            .map(|a| a.norm_sqr())
            .sum()
    }

    pub fn max_density(&self) -> f64 {
        self.density().into_iter().fold(0.0, f64::max)
    }

    /// Absolute density threshold below which `q` counts as a node.
    pub fn node_density_threshold(&self, relative_amplitude: f64) -> f64 {
        relative_amplitude * relative_amplitude * self.max_density()
    }

    pub fn check_not_node(&self, q: &Point, relative_amplitude: f64) -> Result<f64> {
        let rho = self.density_at(q);
        let threshold = self.node_density_threshold(relative_amplitude);
        if !(rho > threshold) {
            return Err(BohmError::Node {
                rho,
                threshold,
                location: format!("{:?}", &q[..self.grid.dims()]),
            });
        }
        Ok(rho)
    }
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Amplitude/phase decomposition of a scalar wave function.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarForm {
    pub grid: Grid,
    pub hbar: f64,
    /// R = |ψ|.
    pub amplitude: Vec<f64>,
    /// S in action units; NaN where `valid` is false.
    pub phase: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Polar decomposition with S unwrapped outward from the density maximum.
/// Points with R ≤ `node_threshold`·max R carry no phase.
pub fn to_polar(psi: &WaveFunction, node_threshold: f64) -> Result<PolarForm> {
    psi.require_scalar("polar decomposition")?;
    let grid = psi.grid().clone();
    let amp: Vec<f64> = psi.amplitudes().iter().map(|a| a.norm()).collect();
    let max_r = amp.iter().cloned().fold(0.0, f64::max);
    if !(max_r > 0.0) {
        return Err(BohmError::Degenerate("zero wave function has no polar form".into()));
    }
    let valid: Vec<bool> = amp.iter().map(|&r| r > node_threshold * max_r).collect();
    let raw: Vec<f64> = psi.amplitudes().iter().map(|a| a.arg()).collect();
    let seed = amp
        .iter()
        .enumerate()
        .fold((0, 0.0), |best, (i, &r)| if r > best.1 { (i, r) } else { best })
        .0;

    let mut phase = vec![f64::NAN; grid.len()];
    let seed_idx = grid.multi_index(seed);
    phase[seed] = raw[seed];
    // axis 0 through the seed, then every line along the last axis
    unwrap_line(&grid, &raw, &valid, &mut phase, seed, 0);
    if grid.dims() == 2 {
        for i0 in 0..grid.points(0) {
            let start = grid.flat_index(&[i0, seed_idx[1]]);
            if phase[start].is_nan() {
                continue;
            }
            unwrap_line(&grid, &raw, &valid, &mut phase, start, 1);
        }
    }
    let hbar = psi.hbar();
    for (p, v) in phase.iter_mut().zip(&valid) {
        *p = if *v { *p * hbar } else { f64::NAN };
    }
    Ok(PolarForm {
        grid,
        hbar,
        amplitude: amp,
        phase,
        valid,
    })
}

/// Walks outward along `axis` from `start`, unwrapping `raw` phases across
/// valid points; invalid points keep the last valid phase as reference but
/// are left undefined.
fn unwrap_line(
    grid: &Grid,
    raw: &[f64],
    valid: &[bool],
    phase: &mut [f64],
    start: usize,
    axis: usize,
) {
    let n = grid.points(axis) as isize;
    let stride = grid.stride(axis) as isize;
    let i0 = ((start as isize / stride) % n) as isize;
    let base = start as isize - i0 * stride;
    let mut queue: VecDeque<isize> = VecDeque::new();
    queue.push_back(1);
    queue.push_back(-1);
    for dir in queue {
        let mut reference = phase[start];
        let mut i = i0 + dir;
        while i >= 0 && i < n {
            let flat = (base + i * stride) as usize;
            if valid[flat] {
                let mut d = raw[flat] - reference;
                d -= 2.0 * std::f64::consts::PI * (d / (2.0 * std::f64::consts::PI)).round();
                reference += d;
                phase[flat] = reference;
            }
            i += dir;
        }
    }
}

impl PolarForm {
    /// R·exp(iS/ħ) at valid points, zero elsewhere.
    pub fn to_wave_function(&self, units: Units) -> WaveFunction {
        let amps = self
            .amplitude
            .iter()
            .zip(&self.phase)
            .zip(&self.valid)
            .map(|((&r, &s), &v)| {
                if v {
                    Complex64::from_polar(r, s / self.hbar)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        WaveFunction::new(self.grid.clone(), 1, amps, units).expect("grid-shaped by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use std::f64::consts::PI;

    fn line(n: usize) -> Grid {
        Grid::line(-10.0, 10.0, n, Boundary::Periodic).unwrap()
    }

    #[test]
    fn normalize_and_inner_product() {
        let g = line(256);
        let psi = WaveFunction::scalar(g, Units::default(), |p| {
            Complex64::new((-p[0] * p[0]).exp(), 0.3 * p[0])
        });
        let n = psi.normalize().unwrap();
        assert!((n.norm() - 1.0).abs() < 1e-12);
        let ip = n.inner_product(&n).unwrap();
        assert!((ip.re - 1.0).abs() < 1e-12 && ip.im.abs() < 1e-14);
    }

    #[test]
    fn zero_state_cannot_be_normalized() {
        let g = line(64);
        let psi = WaveFunction::scalar(g, Units::default(), |_| Complex64::new(0.0, 0.0));
        assert!(matches!(psi.normalize(), Err(BohmError::Degenerate(_))));
    }

    #[test]
    fn mismatched_grids_are_shape_errors() {
        let a = WaveFunction::scalar(line(64), Units::default(), |_| Complex64::new(1.0, 0.0));
        let b = WaveFunction::scalar(line(128), Units::default(), |_| Complex64::new(1.0, 0.0));
        assert!(matches!(a.inner_product(&b), Err(BohmError::Shape(_))));
    }

    #[test]
    fn plane_wave_polar_form() {
        let g = Grid::line(0.0, 2.0 * PI, 128, Boundary::Periodic).unwrap();
        let k = 5.0;
        let psi = WaveFunction::scalar(g.clone(), Units::default(), |p| {
            Complex64::from_polar(1.0, k * p[0])
        });
        let polar = to_polar(&psi, NODE_THRESHOLD).unwrap();
        for i in 0..g.len() {
            assert!((polar.amplitude[i] - 1.0).abs() < 1e-14);
        }
        // unwrapped slope is k everywhere
        for i in 1..g.len() {
            let ds = polar.phase[i] - polar.phase[i - 1];
            assert!((ds - k * g.spacing(0)).abs() < 1e-10);
        }
    }

    #[test]
    fn spinor_has_no_polar_form() {
        let g = line(64);
        let phi = WaveFunction::scalar(g, Units::default(), |_| Complex64::new(1.0, 0.0));
        let s = WaveFunction::separable_spinor(&phi, [Complex64::new(1.0, 0.0); 2]).unwrap();
        assert!(matches!(to_polar(&s, NODE_THRESHOLD), Err(BohmError::Unsupported(_))));
    }
}
