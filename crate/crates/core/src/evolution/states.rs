//! Analytic reference states sampled on a grid.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{BohmError, Result};
use crate::grid::{Grid, Point, MAX_DIMS};
use crate::registry::Registry;
use crate::wavefunction::{Units, WaveFunction};

/// Cells next to each wall inspected by the truncation check.
const EDGE_CELLS: usize = 8;
/// Largest tolerated probability in the edge cells.
pub const TAIL_MASS_LIMIT: f64 = 1e-8;
/// Largest tolerated ∫|φ_a||φ_b| between two branches.
pub const BRANCH_OVERLAP_LIMIT: f64 = 1e-10;

pub struct StateContext<'a> {
    pub grid: &'a Grid,
    pub units: Units,
}

pub type StateBuilder = fn(&Value, &StateContext) -> Result<WaveFunction>;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PerAxis {
    One(f64),
    Many(Vec<f64>),
}

impl PerAxis {
    fn resolve(&self, dims: usize, key: &str) -> Result<Point> {
        let mut p = [0.0; MAX_DIMS];
        match self {
            PerAxis::One(v) => p[..dims].iter_mut().for_each(|x| *x = *v),
            PerAxis::Many(v) => {
                if v.len() != dims {
                    return Err(BohmError::validation(
                        key,
                        format!("expected {dims} values, got {}", v.len()),
                    ));
                }
                p[..dims].copy_from_slice(v);
            }
        }
        Ok(p)
    }
}

impl Default for PerAxis {
    fn default() -> Self {
        PerAxis::One(0.0)
    }
}

fn parse<T: for<'de> Deserialize<'de>>(params: &Value, key: &str) -> Result<T> {
    serde_json::from_value(params.clone()).map_err(|e| BohmError::validation(key, e.to_string()))
}

fn finish(grid: &Grid, units: Units, data: Vec<Complex64>, components: usize) -> Result<WaveFunction> {
    WaveFunction::new(grid.clone(), components, data, units)?.normalize()
}

/// Fails when more than `TAIL_MASS_LIMIT` of the probability sits in the
/// cells next to any wall.
pub fn check_truncation(psi: &WaveFunction, what: &str) -> Result<()> {
    let grid = psi.grid();
    let rho = psi.density();
    let total: f64 = rho.iter().sum();
    let edge: f64 = rho
        .iter()
        .enumerate()
        .filter(|(flat, _)| {
            let idx = grid.multi_index(*flat);
            (0..grid.dims()).any(|a| idx[a] < EDGE_CELLS || idx[a] + EDGE_CELLS >= grid.points(a))
        })
        .map(|(_, r)| r)
        .sum();
    let frac = edge / total;
    if frac > TAIL_MASS_LIMIT {
        return Err(BohmError::Truncation(format!(
            "{what} has {frac:.3e} of its probability at the grid boundary"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PacketParams {
    #[serde(rename = "type", default)]
    _kind: Option<String>,
    #[serde(default)]
    x0: PerAxis,
    sigma: PerAxis,
    #[serde(default)]
    k0: PerAxis,
}

/// exp(Σ −(x−x₀)²/4σ² + i k₀x), unnormalized.
fn packet_values(grid: &Grid, p: &PacketParams, key: &str) -> Result<Vec<Complex64>> {
    let dims = grid.dims();
    let x0 = p.x0.resolve(dims, &format!("{key}.x0"))?;
    let sigma = p.sigma.resolve(dims, &format!("{key}.sigma"))?;
    let k0 = p.k0.resolve(dims, &format!("{key}.k0"))?;
    if sigma[..dims].iter().any(|s| !(*s > 0.0)) {
        return Err(BohmError::validation(format!("{key}.sigma"), "must be positive"));
    }
    Ok(grid.sample(|q| {
        let mut e = Complex64::new(0.0, 0.0);
        for a in 0..dims {
            let d = q[a] - x0[a];
            e += Complex64::new(-d * d / (4.0 * sigma[a] * sigma[a]), k0[a] * q[a]);
        }
        e.exp()
    }))
}

fn build_gaussian(params: &Value, ctx: &StateContext) -> Result<WaveFunction> {
    let p: PacketParams = parse(params, "state")?;
    let psi = finish(ctx.grid, ctx.units, packet_values(ctx.grid, &p, "state")?, 1)?;
    check_truncation(&psi, "gaussian packet")?;
    Ok(psi)
}

fn build_plane_wave(params: &Value, ctx: &StateContext) -> Result<WaveFunction> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct P {
        #[serde(rename = "type")]
        _kind: Option<String>,
        k: PerAxis,
    }
    let p: P = parse(params, "state")?;
    let grid = ctx.grid;
    let k = p.k.resolve(grid.dims(), "state.k")?;
    if grid.is_periodic() {
        for a in 0..grid.dims() {
            let m = k[a] * grid.length(a) / (2.0 * PI);
            if (m - m.round()).abs() > 1e-9 * m.abs().max(1.0) {
                return Err(BohmError::validation(
                    "state.k",
                    format!("k = {} is not a multiple of 2π/L on a periodic grid", k[a]),
                ));
            }
        }
    }
    let data = grid.sample(|q| {
        let phase: f64 = (0..grid.dims()).map(|a| k[a] * q[a]).sum();
        Complex64::new(0.0, phase).exp()
    });
    finish(grid, ctx.units, data, 1)
}

fn build_ho_ground(params: &Value, ctx: &StateContext) -> Result<WaveFunction> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct P {
        #[serde(rename = "type")]
        _kind: Option<String>,
        omega: f64,
        #[serde(default)]
        center: PerAxis,
    }
    let p: P = parse(params, "state")?;
    if !(p.omega > 0.0) {
        return Err(BohmError::validation("state.omega", "must be positive"));
    }
    let grid = ctx.grid;
    let c = p.center.resolve(grid.dims(), "state.center")?;
    let u = ctx.units;
    let a = u.mass * p.omega / u.hbar;
    let pref = (a / PI).powf(0.25 * grid.dims() as f64);
    let data = grid.sample(|q| {
        let r2: f64 = (0..grid.dims()).map(|k| (q[k] - c[k]).powi(2)).sum();
        Complex64::new(pref * (-0.5 * a * r2).exp(), 0.0)
    });
    let psi = finish(grid, u, data, 1)?;
    check_truncation(&psi, "oscillator ground state")?;
    Ok(psi)
}

fn build_evanescent(params: &Value, ctx: &StateContext) -> Result<WaveFunction> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct P {
        #[serde(rename = "type")]
        _kind: Option<String>,
        kappa: f64,
        position: f64,
        #[serde(default)]
        k: Option<f64>,
    }
    let p: P = parse(params, "state")?;
    if ctx.grid.dims() != 1 {
        return Err(BohmError::Unsupported("evanescent states are 1D".into()));
    }
    if !(p.kappa > 0.0) {
        return Err(BohmError::validation("state.kappa", "must be positive"));
    }
    let k = p.k.unwrap_or(p.kappa);
    if !(k > 0.0) {
        return Err(BohmError::validation("state.k", "must be positive"));
    }
    // standing wave on the left, e^{−κ(x−x_s)} on the right, C¹ at x_s
    let data = ctx.grid.sample(|q| {
        let d = q[0] - p.position;
        let v = if d >= 0.0 {
            (-p.kappa * d).exp()
        } else {
            (k * d).cos() - p.kappa / k * (k * d).sin()
        };
        Complex64::new(v, 0.0)
    });
    finish(ctx.grid, ctx.units, data, 1)
}

fn build_two_branch(params: &Value, ctx: &StateContext) -> Result<WaveFunction> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct P {
        #[serde(rename = "type")]
        _kind: Option<String>,
        weight_a: f64,
        #[serde(default)]
        phase_b: f64,
        a: PacketParams,
        b: PacketParams,
    }
    let p: P = parse(params, "state")?;
    if !(0.0..=1.0).contains(&p.weight_a) {
        return Err(BohmError::validation("state.weight_a", "must lie in [0, 1]"));
    }
    let grid = ctx.grid;
    let a = finish(grid, ctx.units, packet_values(grid, &p.a, "state.a")?, 1)?;
    let b = finish(grid, ctx.units, packet_values(grid, &p.b, "state.b")?, 1)?;
    check_truncation(&a, "branch a")?;
    check_truncation(&b, "branch b")?;
    let overlap: f64 = a
        .amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| x.norm() * y.norm())
        .sum::<f64>()
        * grid.cell_volume();
    if overlap > BRANCH_OVERLAP_LIMIT {
        return Err(BohmError::validation(
            "state",
            format!("branches overlap ({overlap:.3e})"),
        ));
    }
    let ca = p.weight_a.sqrt();
    let cb = Complex64::from_polar((1.0 - p.weight_a).sqrt(), p.phase_b);
    let data = a
        .amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| x * ca + y * cb)
        .collect();
    WaveFunction::new(grid.clone(), 1, data, ctx.units)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpinorTerm {
    #[serde(rename = "type", default)]
    _kind: Option<String>,
    state: Value,
    chi: [[f64; 2]; 2],
}

fn chi_of(raw: &[[f64; 2]; 2]) -> [Complex64; 2] {
    [
        Complex64::new(raw[0][0], raw[0][1]),
        Complex64::new(raw[1][0], raw[1][1]),
    ]
}

fn build_separable_spinor(params: &Value, ctx: &StateContext) -> Result<WaveFunction> {
    let p: SpinorTerm = parse(params, "state")?;
    let spatial = analytic_state(&p.state, ctx)?;
    WaveFunction::separable_spinor(&spatial, chi_of(&p.chi))?.normalize()
}

fn build_spinor_superposition(params: &Value, ctx: &StateContext) -> Result<WaveFunction> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct P {
        #[serde(rename = "type")]
        _kind: Option<String>,
        terms: Vec<SpinorTerm>,
    }
    let p: P = parse(params, "state")?;
    if p.terms.is_empty() {
        return Err(BohmError::validation("state.terms", "at least one term"));
    }
    let n = ctx.grid.len();
    let mut data = vec![Complex64::new(0.0, 0.0); 2 * n];
    for t in &p.terms {
        let part = WaveFunction::separable_spinor(&analytic_state(&t.state, ctx)?, chi_of(&t.chi))?;
        data.iter_mut().zip(part.amplitudes()).for_each(|(d, v)| *d += v);
    }
    finish(ctx.grid, ctx.units, data, 2)
}

pub fn registry() -> &'static Registry<StateBuilder> {
    static REG: OnceLock<Registry<StateBuilder>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r = Registry::new("state");
        r.register("plane_wave", "e^{ik·x}, `k` per axis", build_plane_wave as StateBuilder)
            .register("ho_ground", "oscillator ground state, `omega`, `center`", build_ho_ground)
            .register("gaussian_packet", "`x0`, `sigma`, `k0` per axis", build_gaussian)
            .register(
                "evanescent_step",
                "standing wave matched to e^{−κ(x−position)}, `kappa`, `position`, `k`",
                build_evanescent,
            )
            .register(
                "two_branch",
                "√w·φ_a + √(1−w)·e^{iθ}φ_b for disjoint packets `a`, `b`",
                build_two_branch,
            )
            .register(
                "separable_spinor",
                "spatial `state` times spinor `chi`",
                build_separable_spinor,
            )
            .register(
                "spinor_superposition",
                "Σ state_i ⊗ chi_i, normalized",
                build_spinor_superposition,
            );
        r
    })
}

/// Builds a normalized state from `{"type": family, ...}`.
pub fn analytic_state(spec: &Value, ctx: &StateContext) -> Result<WaveFunction> {
    let kind = spec
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| BohmError::validation("state.type", "missing state type"))?;
    registry().get(kind)?(spec, ctx)
}
