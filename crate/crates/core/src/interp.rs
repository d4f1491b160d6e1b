//! Local Lagrange interpolation of grid fields at off-grid points.

use num_complex::Complex64;

use crate::grid::{Grid, Point, MAX_DIMS};

const TAPS: usize = 8;
const MAX_TERMS: usize = TAPS * TAPS;
/// Offset of the first tap from the cell's left node.
const LEAD: i64 = TAPS as i64 / 2 - 1;

/// Precomputed interpolation weights for one point; reusable across every
/// field living on the same grid.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    index: [usize; MAX_TERMS],
    weight: [f64; MAX_TERMS],
    len: usize,
}

/// Degree-7 Lagrange weights on nodes −3..=4 at fraction `t` of the cell.
fn lagrange(t: f64) -> [f64; TAPS] {
    let mut w = [0.0; TAPS];
    for (k, wk) in w.iter_mut().enumerate() {
        let ok = k as f64 - LEAD as f64;
        let mut num = 1.0;
        let mut den = 1.0;
        for j in 0..TAPS {
            if j != k {
                let oj = j as f64 - LEAD as f64;
                num *= t - oj;
                den *= ok - oj;
            }
        }
        *wk = num / den;
    }
    w
}

impl Stencil {
    /// Builds the tensor-product stencil at `q`. Box grids treat points
    /// beyond the walls as zero.
    pub fn new(grid: &Grid, q: &Point) -> Self {
        let dims = grid.dims();
        let mut axis_idx = [[None; TAPS]; MAX_DIMS];
        let mut axis_w = [[0.0; TAPS]; MAX_DIMS];
        for a in 0..dims {
            let n = grid.points(a) as i64;
            let s = (q[a] - grid.axis(a).min) / grid.spacing(a);
            let mut i = s.floor();
            let mut t = s - i;
            // keep the stencil exact when q sits on a node up to rounding
            if t > 1.0 - 1e-13 {
                i += 1.0;
                t = 0.0;
            }
            let i = i as i64;
            axis_w[a] = lagrange(t);
            for k in 0..TAPS {
                let j = i - LEAD + k as i64;
                axis_idx[a][k] = if grid.is_periodic() {
                    Some(j.rem_euclid(n) as usize)
                } else if j >= 0 && j < n {
                    Some(j as usize)
                } else {
                    None
                };
            }
        }
        let mut st = Stencil {
            index: [0; MAX_TERMS],
            weight: [0.0; MAX_TERMS],
            len: 0,
        };
        if dims == 1 {
            for k in 0..TAPS {
                if let Some(j) = axis_idx[0][k] {
                    st.push(j, axis_w[0][k]);
                }
            }
        } else {
            let s0 = grid.stride(0);
            for k0 in 0..TAPS {
                for k1 in 0..TAPS {
                    if let (Some(j0), Some(j1)) = (axis_idx[0][k0], axis_idx[1][k1]) {
                        st.push(j0 * s0 + j1, axis_w[0][k0] * axis_w[1][k1]);
                    }
                }
            }
        }
        st
    }

    fn push(&mut self, index: usize, weight: f64) {
        if weight != 0.0 {
            self.index[self.len] = index;
            self.weight[self.len] = weight;
            self.len += 1;
        }
    }

    pub fn complex(&self, field: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..self.len {
            acc += field[self.index[k]] * self.weight[k];
        }
        acc
    }

    pub fn real(&self, field: &[f64]) -> f64 {
        (0..self.len)
            .map(|k| field[self.index[k]] * self.weight[k])
            .sum()
    }
}

pub fn interpolate(grid: &Grid, field: &[Complex64], q: &Point) -> Complex64 {
    Stencil::new(grid, q).complex(field)
}

pub fn interpolate_real(grid: &Grid, field: &[f64], q: &Point) -> f64 {
    Stencil::new(grid, q).real(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, Boundary};

    #[test]
    fn reproduces_nodes_and_quadratics() {
        let g = Grid::line(-2.0, 2.0, 41, Boundary::Box).unwrap();
        let f: Vec<f64> = g.sample(|p| 1.0 + 2.0 * p[0] - 0.5 * p[0] * p[0]);
        for &x in &[-1.0, -0.53, 0.0, 0.777, 1.3] {
            let v = interpolate_real(&g, &f, &[x, 0.0]);
            assert!((v - (1.0 + 2.0 * x - 0.5 * x * x)).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn error_shrinks_at_high_order() {
        let err = |n: usize| {
            let g = Grid::line(0.0, 1.0, n, Boundary::Periodic).unwrap();
            let f: Vec<f64> = g.sample(|p| (2.0 * std::f64::consts::PI * p[0]).sin());
            (0..97)
                .map(|i| {
                    let x = i as f64 / 97.0;
                    (interpolate_real(&g, &f, &[x, 0.0])
                        - (2.0 * std::f64::consts::PI * x).sin())
                    .abs()
                })
                .fold(0.0, f64::max)
        };
        let r = err(16) / err(32);
        assert!(r > 100.0, "ratio {r}");
    }

    #[test]
    fn bilinear_field_in_2d() {
        let g = Grid::new(
            vec![
                Axis { min: 0.0, max: 1.0, points: 16 },
                Axis { min: 0.0, max: 2.0, points: 16 },
            ],
            Boundary::Box,
        )
        .unwrap();
        let f: Vec<f64> = g.sample(|p| p[0] * p[1] + p[1]);
        let q = [0.41, 1.17];
        assert!((interpolate_real(&g, &f, &q) - (q[0] * q[1] + q[1])).abs() < 1e-12);
    }
}
