//! Grid derivatives: spectral (FFT) on periodic grids, central finite
//! differences of second or fourth order on either boundary kind.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{BohmError, Result};
use crate::grid::{Boundary, Grid, MAX_DIMS};

pub type C64 = Complex64;

/// Derivative order per axis, e.g. `[1, 0]` is ∂/∂x₀.
pub type Order = [u8; MAX_DIMS];

pub const ZERO_ORDER: Order = [0; MAX_DIMS];

pub fn unit_order(axis: usize) -> Order {
    let mut o = ZERO_ORDER;
    o[axis] = 1;
    o
}

pub fn add_orders(a: Order, b: Order) -> Order {
    let mut o = ZERO_ORDER;
    for i in 0..MAX_DIMS {
        o[i] = a[i] + b[i];
    }
    o
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    Spectral,
    #[serde(alias = "fd2")]
    CentralFd2,
    #[serde(alias = "fd4")]
    CentralFd4,
}

impl DerivativeScheme {
    /// Spectral on periodic grids, fourth-order differences in a box.
    pub fn default_for(grid: &Grid) -> Self {
        match grid.boundary() {
            Boundary::Periodic => DerivativeScheme::Spectral,
            Boundary::Box => DerivativeScheme::CentralFd4,
        }
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if *self == DerivativeScheme::Spectral && !grid.is_periodic() {
            return Err(BohmError::Config(
                "spectral derivatives require a periodic grid".into(),
            ));
        }
        Ok(())
    }
}

fn fft_cache() -> &'static Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub(crate) fn fft_plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = fft_cache().lock().expect("fft cache poisoned");
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// Unnormalized in-place FFT of every line of `data` along `axis`.
pub(crate) fn fft_axis(grid: &Grid, data: &mut [C64], axis: usize, inverse: bool) {
    let n = grid.points(axis);
    let stride = grid.stride(axis);
    let plan = fft_plan(n, inverse);
    if stride == 1 {
        plan.process(data);
        return;
    }
    let mut line = vec![C64::new(0.0, 0.0); n];
    let block = n * stride;
    for outer in (0..data.len()).step_by(block) {
        for inner in 0..stride {
            let base = outer + inner;
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            plan.process(&mut line);
            for (i, v) in line.iter().enumerate() {
                data[base + i * stride] = *v;
            }
        }
    }
}

/// Forward FFT over every axis.
pub(crate) fn fft_all(grid: &Grid, data: &mut [C64], inverse: bool) {
    for axis in 0..grid.dims() {
        fft_axis(grid, data, axis, inverse);
    }
    if inverse {
        let scale = 1.0 / grid.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Angular wave numbers in FFT order for one axis.
pub fn wave_numbers(grid: &Grid, axis: usize) -> Vec<f64> {
    let n = grid.points(axis);
    let dk = 2.0 * PI / grid.length(axis);
    (0..n)
        .map(|j| {
            let j = j as i64;
            let n = n as i64;
            let m = if j < (n + 1) / 2 { j } else { j - n };
            m as f64 * dk
        })
        .collect()
}

/// Multiplier `(i k)^order` for one axis; odd orders drop the Nyquist mode.
fn spectral_factor(grid: &Grid, axis: usize, order: u8) -> Vec<C64> {
    let n = grid.points(axis);
    let ks = wave_numbers(grid, axis);
    ks.iter()
        .enumerate()
        .map(|(j, &k)| {
            if order % 2 == 1 && n % 2 == 0 && j == n / 2 {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, k).powu(order as u32)
            }
        })
        .collect()
}

/// Applies `∂^order` to one scalar component.
pub fn derivative(
    grid: &Grid,
    field: &[C64],
    order: Order,
    scheme: DerivativeScheme,
) -> Result<Vec<C64>> {
    if field.len() != grid.len() {
        return Err(BohmError::Shape(format!(
            "field has {} entries, grid has {}",
            field.len(),
            grid.len()
        )));
    }
    scheme.check(grid)?;
    if order == ZERO_ORDER {
        return Ok(field.to_vec());
    }
    match scheme {
        DerivativeScheme::Spectral => Ok(spectral_derivative(grid, field, order)),
        DerivativeScheme::CentralFd2 | DerivativeScheme::CentralFd4 => {
            let mut out = field.to_vec();
            for axis in 0..grid.dims() {
                let n = order[axis];
                for _ in 0..n / 2 {
                    out = fd_axis(grid, &out, axis, 2, scheme);
                }
                if n % 2 == 1 {
                    out = fd_axis(grid, &out, axis, 1, scheme);
                }
            }
            Ok(out)
        }
    }
}

fn spectral_derivative(grid: &Grid, field: &[C64], order: Order) -> Vec<C64> {
    let mut data = field.to_vec();
    fft_all(grid, &mut data, false);
    let factors: Vec<Vec<C64>> = (0..grid.dims())
        .map(|a| spectral_factor(grid, a, order[a]))
        .collect();
    for (flat, v) in data.iter_mut().enumerate() {
        let idx = grid.multi_index(flat);
        for a in 0..grid.dims() {
            *v *= factors[a][idx[a]];
        }
    }
    fft_all(grid, &mut data, true);
    data
}

fn fd_axis(grid: &Grid, f: &[C64], axis: usize, deriv: u8, scheme: DerivativeScheme) -> Vec<C64> {
    let h = grid.spacing(axis);
    let n = grid.points(axis) as isize;
    let stride = grid.stride(axis);
    let periodic = grid.is_periodic();
    let (offsets, weights, scale): (&[isize], &[f64], f64) = match (scheme, deriv) {
        (DerivativeScheme::CentralFd2, 1) => (&[-1, 1], &[-0.5, 0.5], 1.0 / h),
        (DerivativeScheme::CentralFd2, _) => (&[-1, 0, 1], &[1.0, -2.0, 1.0], 1.0 / (h * h)),
        (_, 1) => (
            &[-2, -1, 1, 2],
            &[1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0],
            1.0 / h,
        ),
        _ => (
            &[-2, -1, 0, 1, 2],
            &[-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0],
            1.0 / (h * h),
        ),
    };
    let mut out = vec![C64::new(0.0, 0.0); f.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let i = ((flat / stride) % n as usize) as isize;
        let base = flat - i as usize * stride;
        let mut acc = C64::new(0.0, 0.0);
        for (&off, &w) in offsets.iter().zip(weights) {
            let j = i + off;
            let j = if periodic {
                j.rem_euclid(n)
            } else if j < 0 || j >= n {
                continue;
            } else {
                j
            };
            acc += f[base + j as usize * stride] * w;
        }
        *o = acc * scale;
    }
    out
}

/// Derivative of a multi-component field, component by component.
pub fn derivative_components(
    grid: &Grid,
    field: &[C64],
    components: usize,
    order: Order,
    scheme: DerivativeScheme,
) -> Result<Vec<C64>> {
    let n = grid.len();
    let mut out = Vec::with_capacity(field.len());
    for c in 0..components {
        out.extend(derivative(grid, &field[c * n..(c + 1) * n], order, scheme)?);
    }
    Ok(out)
}

/// Laplacian of a multi-component field.
pub fn laplacian(
    grid: &Grid,
    field: &[C64],
    components: usize,
    scheme: DerivativeScheme,
) -> Result<Vec<C64>> {
    let mut out = vec![C64::new(0.0, 0.0); field.len()];
    for axis in 0..grid.dims() {
        let mut o = ZERO_ORDER;
        o[axis] = 2;
        let d = derivative_components(grid, field, components, o, scheme)?;
        out.iter_mut().zip(d).for_each(|(a, b)| *a += b);
    }
    Ok(out)
}

/// Second-order central difference of a real, non-periodic field along
/// `axis`, one-sided at the ends. Used for cross-checks on unwrapped phases.
pub fn gradient_real(grid: &Grid, field: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing(axis);
    let n = grid.points(axis);
    let stride = grid.stride(axis);
    (0..field.len())
        .map(|flat| {
            let i = (flat / stride) % n;
            let at = |j: usize| field[flat - i * stride + j * stride];
            if i == 0 {
                (at(1) - at(0)) / h
            } else if i == n - 1 {
                (at(n - 1) - at(n - 2)) / h
            } else {
                (at(i + 1) - at(i - 1)) / (2.0 * h)
            }
        })
        .collect()
}

/// Second-order central second derivative of a real field; zero at the ends.
pub fn second_derivative_real(grid: &Grid, field: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing(axis);
    let n = grid.points(axis);
    let stride = grid.stride(axis);
    (0..field.len())
        .map(|flat| {
            let i = (flat / stride) % n;
            if i == 0 || i == n - 1 {
                return 0.0;
            }
            let at = |j: usize| field[flat - i * stride + j * stride];
            (at(i + 1) - 2.0 * at(i) + at(i - 1)) / (h * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    fn plane(grid: &Grid, k: f64) -> Vec<C64> {
        grid.sample(|p| C64::from_polar(1.0, k * p[0]))
    }

    #[test]
    fn spectral_first_derivative_of_plane_wave_is_exact() {
        let g = Grid::line(0.0, 2.0 * PI, 64, Boundary::Periodic).unwrap();
        let f = plane(&g, 3.0);
        let d = derivative(&g, &f, [1, 0], DerivativeScheme::Spectral).unwrap();
        for (a, b) in d.iter().zip(&f) {
            assert!((a - C64::new(0.0, 3.0) * b).norm() < 1e-12);
        }
    }

    #[test]
    fn fd_schemes_converge_at_their_order() {
        let err = |n: usize, scheme| {
            let g = Grid::line(0.0, 2.0 * PI, n, Boundary::Periodic).unwrap();
            let f: Vec<C64> = g.sample(|p| C64::new(p[0].sin(), 0.0));
            let d = derivative(&g, &f, [1, 0], scheme).unwrap();
            g.coords(0)
                .iter()
                .zip(&d)
                .map(|(x, v)| (v.re - x.cos()).abs())
                .fold(0.0, f64::max)
        };
        let r2 = err(64, DerivativeScheme::CentralFd2) / err(128, DerivativeScheme::CentralFd2);
        let r4 = err(64, DerivativeScheme::CentralFd4) / err(128, DerivativeScheme::CentralFd4);
        assert!((r2 - 4.0).abs() < 0.1, "fd2 ratio {r2}");
        assert!((r4 - 16.0).abs() < 0.5, "fd4 ratio {r4}");
    }

    #[test]
    fn spectral_on_box_is_a_config_error() {
        let g = Grid::line(0.0, 1.0, 16, Boundary::Box).unwrap();
        let f = vec![C64::new(0.0, 0.0); 16];
        assert!(matches!(
            derivative(&g, &f, [1, 0], DerivativeScheme::Spectral),
            Err(BohmError::Config(_))
        ));
    }

    #[test]
    fn mixed_derivative_in_two_dimensions() {
        let g = Grid::new(
            vec![
                Axis { min: 0.0, max: 2.0 * PI, points: 32 },
                Axis { min: 0.0, max: 2.0 * PI, points: 16 },
            ],
            Boundary::Periodic,
        )
        .unwrap();
        let f: Vec<C64> = g.sample(|p| C64::new((2.0 * p[0]).sin() * p[1].cos(), 0.0));
        let d = derivative(&g, &f, [1, 1], DerivativeScheme::Spectral).unwrap();
        for (flat, v) in d.iter().enumerate() {
            let p = g.point(flat);
            let exact = -2.0 * (2.0 * p[0]).cos() * p[1].sin();
            assert!((v.re - exact).abs() < 1e-11);
        }
    }
}
