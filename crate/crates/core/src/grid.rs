//! Uniform 1D/2D grids over configuration space.
//!
//! Fields on a grid are flat arrays in row-major axis order: axis 0 is the
//! slowest index. Multi-component fields store each component as one
//! contiguous block, component 0 first.

use serde::{Deserialize, Serialize};

use crate::error::{BohmError, Result};

/// Maximum number of spatial axes a grid may carry.
pub const MAX_DIMS: usize = 2;

/// A configuration-space point. Entries past `Grid::dims()` are zero.
pub type Point = [f64; MAX_DIMS];

pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
    boundary: Boundary,
}

impl Grid {
    pub fn new(axes: Vec<Axis>, boundary: Boundary) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIMS {
            return Err(BohmError::Config(format!(
                "grid must have 1 or 2 axes, got {}",
                axes.len()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if a.points < MIN_POINTS {
                return Err(BohmError::Config(format!(
                    "axis {i} has {} points, need at least {MIN_POINTS}",
                    a.points
                )));
            }
            if !(a.max > a.min) || !a.min.is_finite() || !a.max.is_finite() {
                return Err(BohmError::Config(format!(
                    "axis {i} extent [{}, {}) is empty or not finite",
                    a.min, a.max
                )));
            }
        }
        Ok(Self { axes, boundary })
    }

    pub fn line(min: f64, max: f64, points: usize, boundary: Boundary) -> Result<Self> {
        Self::new(vec![Axis { min, max, points }], boundary)
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, axis: usize) -> &Axis {
        &self.axes[axis]
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn points(&self, axis: usize) -> usize {
        self.axes[axis].points
    }

    /// Total number of grid points (one component).
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn length(&self, axis: usize) -> f64 {
        let a = &self.axes[axis];
        a.max - a.min
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let a = &self.axes[axis];
        match self.boundary {
            Boundary::Periodic => (a.max - a.min) / a.points as f64,
            Boundary::Box => (a.max - a.min) / (a.points - 1) as f64,
        }
    }

    /// Volume element Δx^dims used by every quadrature on this grid.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dims()).map(|a| self.spacing(a)).product()
    }

    pub fn coord(&self, axis: usize, index: usize) -> f64 {
        self.axes[axis].min + index as f64 * self.spacing(axis)
    }

    /// Stride of `axis` in the flat layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.axes[axis + 1..].iter().map(|a| a.points).product()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| i * self.stride(a))
            .sum()
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIMS] {
        let mut out = [0; MAX_DIMS];
        let mut rem = flat;
        for a in 0..self.dims() {
            let s = self.stride(a);
            out[a] = rem / s;
            rem %= s;
        }
        out
    }

    pub fn point(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut p = [0.0; MAX_DIMS];
        for a in 0..self.dims() {
            p[a] = self.coord(a, idx[a]);
        }
        p
    }

    /// Coordinate samples along one axis.
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.points(axis)).map(|i| self.coord(axis, i)).collect()
    }

    /// Evaluates `f` at every grid point in flat order.
    pub fn sample<T>(&self, mut f: impl FnMut(Point) -> T) -> Vec<T> {
        (0..self.len()).map(|i| f(self.point(i))).collect()
    }

    pub fn contains(&self, q: &Point) -> bool {
        (0..self.dims()).all(|a| {
            let ax = &self.axes[a];
            match self.boundary {
                Boundary::Periodic => q[a].is_finite(),
                Boundary::Box => q[a] >= ax.min && q[a] <= ax.max,
            }
        })
    }

    /// Maps a point into the fundamental domain; identity on box grids.
    pub fn wrap(&self, mut q: Point) -> Point {
        if self.is_periodic() {
            for a in 0..self.dims() {
                let ax = &self.axes[a];
                let l = ax.max - ax.min;
                q[a] = ax.min + (q[a] - ax.min).rem_euclid(l);
                if q[a] >= ax.max {
                    q[a] = ax.min;
                }
            }
        }
        q
    }

    /// Shortest displacement from `a` to `b` (minimum image on periodic grids).
    pub fn displacement(&self, a: &Point, b: &Point) -> Point {
        let mut d = [0.0; MAX_DIMS];
        for ax in 0..self.dims() {
            let mut x = b[ax] - a[ax];
            if self.is_periodic() {
                let l = self.length(ax);
                x -= l * (x / l).round();
            }
            d[ax] = x;
        }
        d
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(BohmError::Shape("fields live on different grids".into()));
        }
        Ok(())
    }
}
