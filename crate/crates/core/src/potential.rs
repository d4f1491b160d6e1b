//! Real potentials V(q). Each potential knows its value and gradient at any
//! point so operators can evaluate V·ψ exactly at off-grid positions.

use std::fmt::Debug;
use std::sync::{Arc, OnceLock};

use serde::Deserialize;
use serde_json::Value;

use crate::calculus::gradient_real;
use crate::error::{BohmError, Result};
use crate::grid::{Grid, Point, MAX_DIMS};
use crate::interp::interpolate_real;
use crate::registry::Registry;
use crate::wavefunction::Units;

pub trait Potential: Debug + Send + Sync {
    fn name(&self) -> &str;

    fn value(&self, q: &Point) -> f64;

    fn gradient(&self, q: &Point) -> Point;

    /// Samples V on every grid point.
    fn sample(&self, grid: &Grid) -> Vec<f64> {
        grid.sample(|p| self.value(&p))
    }

    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl Potential for Zero {
    fn name(&self) -> &str {
        "zero"
    }
    fn value(&self, _q: &Point) -> f64 {
        0.0
    }
    fn gradient(&self, _q: &Point) -> Point {
        [0.0; MAX_DIMS]
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// V = ½ m ω² |q − c|².
#[derive(Debug, Clone, Copy)]
pub struct Harmonic {
    pub omega: f64,
    pub mass: f64,
    pub center: Point,
}

impl Potential for Harmonic {
    fn name(&self) -> &str {
        "harmonic"
    }
    fn value(&self, q: &Point) -> f64 {
        let k = self.mass * self.omega * self.omega;
        (0..MAX_DIMS)
            .map(|a| 0.5 * k * (q[a] - self.center[a]).powi(2))
            .sum()
    }
    fn gradient(&self, q: &Point) -> Point {
        let k = self.mass * self.omega * self.omega;
        let mut g = [0.0; MAX_DIMS];
        for a in 0..MAX_DIMS {
            g[a] = k * (q[a] - self.center[a]);
        }
        g
    }
}

/// Step of `height` at `position` along `axis`. A positive `width` smooths
/// the edge as ½·height·(1 + tanh((x − x₀)/width)).
#[derive(Debug, Clone, Copy)]
pub struct Step {
    pub axis: usize,
    pub position: f64,
    pub height: f64,
    pub width: f64,
}

impl Potential for Step {
    fn name(&self) -> &str {
        "step"
    }
    fn value(&self, q: &Point) -> f64 {
        let x = q[self.axis] - self.position;
        if self.width > 0.0 {
            0.5 * self.height * (1.0 + (x / self.width).tanh())
        } else if x >= 0.0 {
            self.height
        } else {
            0.0
        }
    }
    fn gradient(&self, q: &Point) -> Point {
        let mut g = [0.0; MAX_DIMS];
        if self.width > 0.0 {
            let x = (q[self.axis] - self.position) / self.width;
            let sech = 1.0 / x.cosh();
            g[self.axis] = 0.5 * self.height * sech * sech / self.width;
        }
        g
    }
}

/// Arbitrary field given by grid samples; off-grid values are interpolated
/// and gradients come from central differences.
#[derive(Debug, Clone)]
pub struct Sampled {
    grid: Grid,
    values: Vec<f64>,
    gradients: Vec<Vec<f64>>,
}

impl Sampled {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(BohmError::Shape(format!(
                "potential has {} samples, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BohmError::Config("potential samples must be finite".into()));
        }
        let gradients = (0..grid.dims())
            .map(|a| gradient_real(&grid, &values, a))
            .collect();
        Ok(Self {
            grid,
            values,
            gradients,
        })
    }
}

impl Potential for Sampled {
    fn name(&self) -> &str {
        "sampled"
    }
    fn value(&self, q: &Point) -> f64 {
        interpolate_real(&self.grid, &self.values, q)
    }
    fn gradient(&self, q: &Point) -> Point {
        let mut g = [0.0; MAX_DIMS];
        for (a, field) in self.gradients.iter().enumerate() {
            g[a] = interpolate_real(&self.grid, field, q);
        }
        g
    }
    fn sample(&self, grid: &Grid) -> Vec<f64> {
        if grid == &self.grid {
            self.values.clone()
        } else {
            grid.sample(|p| self.value(&p))
        }
    }
}

/// Context handed to potential builders.
pub struct BuildContext<'a> {
    pub grid: &'a Grid,
    pub units: Units,
}

pub type PotentialBuilder = fn(&Value, &BuildContext) -> Result<Arc<dyn Potential>>;

fn parse<T: for<'de> Deserialize<'de>>(params: &Value, key: &str) -> Result<T> {
    serde_json::from_value(params.clone()).map_err(|e| BohmError::validation(key, e.to_string()))
}

fn point_from(v: &[f64], key: &str) -> Result<Point> {
    if v.len() > MAX_DIMS {
        return Err(BohmError::validation(key, "too many coordinates"));
    }
    let mut p = [0.0; MAX_DIMS];
    p[..v.len()].copy_from_slice(v);
    Ok(p)
}

fn build_zero(_: &Value, _: &BuildContext) -> Result<Arc<dyn Potential>> {
    Ok(Arc::new(Zero))
}

fn build_harmonic(params: &Value, ctx: &BuildContext) -> Result<Arc<dyn Potential>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct P {
        #[serde(rename = "type")]
        _kind: Option<String>,
        omega: f64,
        #[serde(default)]
        center: Vec<f64>,
    }
    let p: P = parse(params, "potential")?;
    if !(p.omega > 0.0) {
        return Err(BohmError::validation("potential.omega", "must be positive"));
    }
    Ok(Arc::new(Harmonic {
        omega: p.omega,
        mass: ctx.units.mass,
        center: point_from(&p.center, "potential.center")?,
    }))
}

fn build_step(params: &Value, ctx: &BuildContext) -> Result<Arc<dyn Potential>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct P {
        #[serde(rename = "type")]
        _kind: Option<String>,
        #[serde(default)]
        axis: usize,
        position: f64,
        height: f64,
        #[serde(default)]
        width: f64,
    }
    let p: P = parse(params, "potential")?;
    if p.axis >= ctx.grid.dims() {
        return Err(BohmError::validation("potential.axis", "axis outside grid"));
    }
    Ok(Arc::new(Step {
        axis: p.axis,
        position: p.position,
        height: p.height,
        width: p.width.max(0.0),
    }))
}

fn build_sampled(params: &Value, ctx: &BuildContext) -> Result<Arc<dyn Potential>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct P {
        #[serde(rename = "type")]
        _kind: Option<String>,
        values: Vec<f64>,
    }
    let p: P = parse(params, "potential")?;
    Ok(Arc::new(Sampled::new(ctx.grid.clone(), p.values)?))
}

pub fn registry() -> &'static Registry<PotentialBuilder> {
    static REG: OnceLock<Registry<PotentialBuilder>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r = Registry::new("potential");
        r.register("zero", "V = 0", build_zero as PotentialBuilder)
            .register("harmonic", "V = ½ m ω² |q − center|²", build_harmonic)
            .register("step", "step of `height` at `position` (optional tanh `width`)", build_step)
            .register("sampled", "explicit grid samples `values`", build_sampled);
        r
    })
}

/// Builds a potential from a `{"type": name, ...}` JSON object.
pub fn build(spec: &Value, ctx: &BuildContext) -> Result<Arc<dyn Potential>> {
    let kind = spec
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| BohmError::validation("potential.type", "missing potential type"))?;
    let builder = registry().get(kind)?;
    builder(spec, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use serde_json::json;

    #[test]
    fn harmonic_from_json() {
        let g = Grid::line(-5.0, 5.0, 64, Boundary::Periodic).unwrap();
        let ctx = BuildContext { grid: &g, units: Units { hbar: 1.0, mass: 2.0 } };
        let v = build(&json!({"type": "harmonic", "omega": 3.0, "center": [1.0]}), &ctx).unwrap();
        assert!((v.value(&[2.0, 0.0]) - 9.0).abs() < 1e-14);
        assert!((v.gradient(&[2.0, 0.0])[0] - 18.0).abs() < 1e-14);
    }

    #[test]
    fn smooth_step_gradient_matches_difference() {
        let s = Step { axis: 0, position: 1.0, height: 2.0, width: 0.3 };
        let h = 1e-6;
        let fd = (s.value(&[1.1 + h, 0.0]) - s.value(&[1.1 - h, 0.0])) / (2.0 * h);
        assert!((fd - s.gradient(&[1.1, 0.0])[0]).abs() < 1e-8);
    }

    #[test]
    fn unknown_type_is_reported() {
        let g = Grid::line(-5.0, 5.0, 64, Boundary::Periodic).unwrap();
        let ctx = BuildContext { grid: &g, units: Units::default() };
        assert!(build(&json!({"type": "coulomb"}), &ctx).is_err());
        assert!(build(&json!({"omega": 1.0}), &ctx).is_err());
    }
}
