//! Evanescent states at a potential step and the speed scale extracted from
//! them: v = √(2|Δ|/m) = ħκ/m = |Im p_w|/m.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BohmError, Result};
use crate::grid::{Boundary, Grid};
use crate::guidance::velocity_at;
use crate::operators::{LocalEvaluator, Observable};
use crate::potential::{Potential, Step};
use crate::wavefunction::{Units, WaveFunction};

/// |Δ| ≤ ħJ₀·rel_tol counts as critical.
pub const DEFAULT_CRITICAL_REL_TOL: f64 = 0.1;
pub const DEFAULT_FIT_TOL: f64 = 0.02;
/// Relative tolerance on v_scale = ħκ/m, which is pure algebra.
pub const CHAIN_TOL: f64 = 1e-10;
/// The decay window ends where R drops to this fraction of its start value.
pub const WINDOW_DROP: f64 = 1e-4;
pub const MIN_WINDOW_POINTS: usize = 8;
/// Nodes kept clear of the box wall, where the difference stencils see
/// the zero ghosts.
const EDGE_MARGIN: usize = 4;
const CONTINUITY_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Allowed,
    Forbidden,
    Critical,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Allowed => "allowed",
            Regime::Forbidden => "forbidden",
            Regime::Critical => "critical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepScenario {
    pub energy: f64,
    pub v0: f64,
    pub j0: f64,
    pub units: Units,
    pub delta: f64,
    pub regime: Regime,
}

impl StepScenario {
    pub fn new(energy: f64, v0: f64, j0: f64, units: Units, rel_tol: f64) -> Result<Self> {
        for (key, v) in [("energy", energy), ("v0", v0), ("j0", j0), ("rel_tol", rel_tol)] {
            if !v.is_finite() {
                return Err(BohmError::validation(key, "must be finite"));
            }
        }
        if !(j0 >= 0.0) || !(rel_tol >= 0.0) {
            return Err(BohmError::validation("j0", "coupling and tolerance must be non-negative"));
        }
        if !(units.hbar > 0.0 && units.mass > 0.0) {
            return Err(BohmError::validation("units", "hbar and mass must be positive"));
        }
        let delta = delta_of(energy, v0, j0, units.hbar);
        let regime = if delta.abs() <= units.hbar * j0 * rel_tol {
            Regime::Critical
        } else if delta > 0.0 {
            Regime::Allowed
        } else {
            Regime::Forbidden
        };
        Ok(Self {
            energy,
            v0,
            j0,
            units,
            delta,
            regime,
        })
    }

    /// Scenario at detuning `delta` for a given energy and coupling; V₀
    /// absorbs the difference.
    pub fn at_delta(delta: f64, energy: f64, j0: f64, units: Units, rel_tol: f64) -> Result<Self> {
        let v0 = energy + units.hbar * j0 - delta;
        let mut s = Self::new(energy, v0, j0, units, rel_tol)?;
        // keep the requested Δ bit-for-bit when the round trip is exact
        if delta_of(energy, v0, j0, units.hbar) == delta {
            s.delta = delta;
        }
        Ok(s)
    }

    pub fn recomputed_delta(&self) -> f64 {
        delta_of(self.energy, self.v0, self.j0, self.units.hbar)
    }

    /// Height of the step seen by the main guide: E − height = Δ.
    pub fn effective_height(&self) -> f64 {
        self.v0 - self.units.hbar * self.j0
    }
}

fn delta_of(energy: f64, v0: f64, j0: f64, hbar: f64) -> f64 {
    energy - v0 + hbar * j0
}

/// √(2|Δ|/m).
pub fn v_scale(s: &StepScenario) -> f64 {
    (2.0 * s.delta.abs() / s.units.mass).sqrt()
}

/// κ = √(2m|Δ|)/ħ for a decaying state.
pub fn kappa(s: &StepScenario) -> Result<f64> {
    if s.regime == Regime::Allowed || s.delta >= 0.0 {
        return Err(BohmError::Regime(format!(
            "Δ = {} is not below zero: the decay constant is imaginary",
            s.delta
        )));
    }
    Ok((2.0 * s.units.mass * s.delta.abs()).sqrt() / s.units.hbar)
}

/// Wave number ħk = √(2mΔ) of the transmitted wave in the allowed regime.
pub fn wave_number(s: &StepScenario) -> Result<f64> {
    if s.delta <= 0.0 {
        return Err(BohmError::Regime(format!("Δ = {} admits no transmitted wave", s.delta)));
    }
    Ok((2.0 * s.units.mass * s.delta).sqrt() / s.units.hbar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PwSample {
    pub x: f64,
    pub re: f64,
    pub im: f64,
}

impl PwSample {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// p_w = (p̂ψ)/ψ at every node with x in [from, to].
pub fn momentum_weak_value_profile(psi: &WaveFunction, from: f64, to: f64) -> Result<Vec<PwSample>> {
    if psi.grid().dims() != 1 || !psi.is_scalar() {
        return Err(BohmError::Unsupported("momentum weak value profiles need a scalar 1D state".into()));
    }
    let ev = LocalEvaluator::new(&Observable::momentum(0), psi, 0)?;
    let grid = psi.grid();
    (0..grid.points(0))
        .map(|i| grid.coord(0, i))
        .filter(|x| *x >= from && *x <= to)
        .map(|x| {
            let w = ev.weak(&[x, 0.0])?;
            Ok(PwSample {
                x,
                re: w.weak_re,
                im: w.weak_im,
            })
        })
        .collect()
}

/// Velocity of the particle at `q`; zero for a real evanescent state.
pub fn bohmian_velocity_in_forbidden(psi: &WaveFunction, q: f64) -> Result<f64> {
    if psi.grid().dims() != 1 {
        return Err(BohmError::Unsupported("the step analysis is 1D".into()));
    }
    Ok(velocity_at(psi, &[q, 0.0])?[0])
}

/// Stationary state of energy E at the step, solved by Numerov's method from
/// the right wall inward. The right edge is seeded with the pure decaying,
/// flat or outgoing solution, so the step region carries no admixture of the
/// other branch.
pub fn stationary_state(s: &StepScenario, grid: &Grid, position: f64, width: f64) -> Result<WaveFunction> {
    if grid.dims() != 1 || grid.boundary() != Boundary::Box {
        return Err(BohmError::Unsupported("step states are solved on a 1D box grid".into()));
    }
    let n = grid.points(0);
    let h = grid.spacing(0);
    let (hbar, m) = (s.units.hbar, s.units.mass);
    let step = Step {
        axis: 0,
        position,
        height: s.effective_height(),
        width,
    };
    let g: Vec<f64> = (0..n)
        .map(|i| 2.0 * m * (step.value(&[grid.coord(0, i), 0.0]) - s.energy) / (hbar * hbar))
        .collect();
    let seed = |x: f64| -> Complex64 {
        let d = x - position;
        if s.delta < 0.0 {
            let k = (2.0 * m * -s.delta).sqrt() / hbar;
            Complex64::new((-k * d).exp(), 0.0)
        } else if s.delta > 0.0 {
            let k = (2.0 * m * s.delta).sqrt() / hbar;
            Complex64::from_polar(1.0, k * d)
        } else {
            Complex64::new(1.0, 0.0)
        }
    };
    let c = h * h / 12.0;
    let mut psi = vec![Complex64::new(0.0, 0.0); n];
    psi[n - 1] = seed(grid.coord(0, n - 1));
    psi[n - 2] = seed(grid.coord(0, n - 2));
    for i in (1..n - 1).rev() {
        let next = 2.0 * (1.0 + 5.0 * c * g[i]) * psi[i] - (1.0 - c * g[i + 1]) * psi[i + 1];
        psi[i - 1] = next / (1.0 - c * g[i - 1]);
        if !psi[i - 1].norm().is_finite() {
            return Err(BohmError::Degenerate(format!(
                "step solution overflowed at x = {}",
                grid.coord(0, i - 1)
            )));
        }
    }
    let scale = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for z in &mut psi {
        *z /= scale;
    }
    WaveFunction::new(grid.clone(), 1, psi, s.units)?.normalize()
}

/// Least-squares fit of ln R = c − κx.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub kappa: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Fits the decay constant of R right of the step. The window opens two
/// nodes past `position` and closes where R has dropped by `WINDOW_DROP`.
pub fn fit_decay(psi: &WaveFunction, position: f64) -> Result<DecayFit> {
    let grid = psi.grid();
    if grid.dims() != 1 || !psi.is_scalar() {
        return Err(BohmError::Unsupported("decay fits need a scalar 1D state".into()));
    }
    let (start, end) = decay_window(psi, position)?;
    let amp = psi.amplitudes();
    let threshold = psi.node_density_threshold(crate::wavefunction::NODE_THRESHOLD);
    let mut xs = Vec::with_capacity(end - start);
    let mut ys = Vec::with_capacity(end - start);
    for (i, z) in amp.iter().enumerate().take(end).skip(start) {
        if !(z.norm_sqr() > threshold) {
            return Err(BohmError::Fit(format!("node at x = {} inside the decay window", grid.coord(0, i))));
        }
        xs.push(grid.coord(0, i));
        ys.push(z.norm().ln());
    }
    let slope = regression_slope(&xs, &ys);
    Ok(DecayFit {
        kappa: -slope,
        window: (xs[0], xs[xs.len() - 1]),
        points: xs.len(),
    })
}

fn decay_window(psi: &WaveFunction, position: f64) -> Result<(usize, usize)> {
    let grid = psi.grid();
    let n = grid.points(0);
    let h = grid.spacing(0);
    let start = (0..n)
        .find(|&i| grid.coord(0, i) >= position + 2.0 * h - 1e-9 * h)
        .ok_or_else(|| BohmError::Fit("step lies outside the grid".into()))?;
    let amp = psi.amplitudes();
    let r0 = amp[start].norm();
    let last = n.saturating_sub(EDGE_MARGIN);
    let end = (start..last).find(|&i| amp[i].norm() < WINDOW_DROP * r0).ok_or_else(|| {
        BohmError::Fit(format!(
            "R does not fall by {WINDOW_DROP:e} before the wall; the decay window exceeds the grid"
        ))
    })?;
    if end - start < MIN_WINDOW_POINTS {
        return Err(BohmError::Fit(format!(
            "decay window holds {} points, need at least {MIN_WINDOW_POINTS}",
            end - start
        )));
    }
    Ok((start, end))
}

fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub delta: f64,
    pub regime: Regime,
    pub v_scale: f64,
    /// ħκ/m from the analytic κ; absent in the allowed regime.
    pub v_kappa: Option<f64>,
    pub chain_error: Option<f64>,
    pub kappa_fit: Option<f64>,
    /// ħκ_fit/m.
    pub v_fit: Option<f64>,
    /// Window averages of |Im p_w|/m and |Re p_w|/m.
    pub v_im: f64,
    pub v_re: f64,
    pub window: (f64, f64),
    pub points: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares v_scale with ħκ_fit/m and |Im p_w|/m over the decay window
/// right of `position`. In the allowed regime the comparison is against
/// |Re p_w|/m over the region from the step to the wall.
pub fn identity_check(s: &StepScenario, psi: &WaveFunction, position: f64, tol: f64) -> Result<IdentityReport> {
    let m = s.units.mass;
    let v = v_scale(s);
    if s.delta == 0.0 {
        return Err(BohmError::Regime("Δ = 0 has no speed scale to compare".into()));
    }
    let (v_kappa, fit, window) = if s.delta < 0.0 {
        let k = kappa(s)?;
        let fit = fit_decay(psi, position)?;
        (Some(s.units.hbar * k / m), Some(fit), fit.window)
    } else {
        let grid = psi.grid();
        let h = grid.spacing(0);
        let end = grid.coord(0, grid.points(0) - 1 - EDGE_MARGIN);
        (None, None, (position + 2.0 * h, end))
    };
    let profile = momentum_weak_value_profile(psi, window.0, window.1)?;
    if profile.len() < MIN_WINDOW_POINTS {
        return Err(BohmError::Fit(format!("window holds {} points", profile.len())));
    }
    let count = profile.len() as f64;
    let v_im = profile.iter().map(|p| p.im.abs()).sum::<f64>() / count / m;
    let v_re = profile.iter().map(|p| p.re.abs()).sum::<f64>() / count / m;
    let v_fit = fit.map(|f| s.units.hbar * f.kappa / m);
    let chain_error = v_kappa.map(|vk| (vk - v).abs());

    let rel = |x: f64| (x - v).abs() / v;
    let max_deviation = match v_fit {
        Some(vf) => rel(vf).max(rel(v_im)),
        None => rel(v_re),
    };
    let chain_ok = chain_error.map_or(true, |e| e <= CHAIN_TOL * v);
    Ok(IdentityReport {
        delta: s.delta,
        regime: s.regime,
        v_scale: v,
        v_kappa,
        chain_error,
        kappa_fit: fit.map(|f| f.kappa),
        v_fit,
        v_im,
        v_re,
        window,
        points: profile.len(),
        max_deviation,
        tolerance: tol,
        pass: chain_ok && max_deviation <= tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub energy: f64,
    pub j0: f64,
    pub units: Units,
    pub deltas: Vec<f64>,
    pub grid: Grid,
    pub position: f64,
    #[serde(default)]
    pub width: f64,
    /// Length of the fixed window over which |p_w|/m is averaged.
    pub window: f64,
    pub fit_tol: f64,
    pub critical_rel_tol: f64,
}

impl SweepOptions {
    /// `n` detunings spaced evenly over [−max, max].
    pub fn symmetric(max: f64, n: usize) -> Vec<f64> {
        let step = 2.0 * max / (n - 1) as f64;
        (0..n).map(|i| -max + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub regime: Regime,
    pub v_scale: f64,
    pub v_fit: Option<f64>,
    pub v_im: f64,
    pub v_re: f64,
    /// Window average of |p_w|/m, the signal the sweep follows through Δ = 0.
    pub v_measured: f64,
    /// Identity verdict where a decay fit was possible.
    pub identity_pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityCheck {
    pub max_ratio: f64,
    pub worst_pair: usize,
    pub factor: f64,
    pub pass: bool,
}

/// Every jump between adjacent samples must stay below `factor` times the
/// larger neighbouring jump. Flat neighbourhoods allow only a
/// rounding-level jump.
pub fn continuity_check(values: &[f64], factor: f64) -> ContinuityCheck {
    let jumps: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut max_ratio = 0.0;
    let mut worst_pair = 0;
    for (i, &j) in jumps.iter().enumerate() {
        let left = if i > 0 { jumps[i - 1] } else { 0.0 };
        let right = jumps.get(i + 1).copied().unwrap_or(0.0);
        let local = left.max(right).max(1e-12 * scale);
        let ratio = j / local;
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_pair = i;
        }
    }
    ContinuityCheck {
        max_ratio,
        worst_pair,
        factor,
        pass: jumps.len() < 2 || max_ratio < factor,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub continuity: ContinuityCheck,
    pub identity_checked: usize,
    pub identity_failed: usize,
    pub pass: bool,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,regime,v_scale,v_fit,v_im,v_re,v_measured\n");
        for p in &self.points {
            let fit = p.v_fit.map(|v| format!("{v:.12e}")).unwrap_or_default();
            out.push_str(&format!(
                "{:.12e},{},{:.12e},{},{:.12e},{:.12e},{:.12e}\n",
                p.delta,
                p.regime.as_str(),
                p.v_scale,
                fit,
                p.v_im,
                p.v_re,
                p.v_measured
            ));
        }
        out
    }
}

/// Solves the step state at every Δ of `opts`, in parallel, and checks the
/// identity where the decay fits inside the grid and the continuity of
/// |p_w|/m across the sweep.
pub fn delta_sweep(opts: &SweepOptions) -> Result<SweepReport> {
    if opts.deltas.len() < 3 {
        return Err(BohmError::validation("waveguide.deltas", "need at least 3 detunings"));
    }
    if !(opts.window > 0.0) {
        return Err(BohmError::validation("waveguide.window", "must be positive"));
    }
    let points: Vec<SweepPoint> = opts
        .deltas
        .par_iter()
        .map(|&d| sweep_point(opts, d))
        .collect::<Result<_>>()?;
    let measured: Vec<f64> = points.iter().map(|p| p.v_measured).collect();
    let continuity = continuity_check(&measured, CONTINUITY_FACTOR);
    let identity_checked = points.iter().filter(|p| p.identity_pass.is_some()).count();
    let identity_failed = points.iter().filter(|p| p.identity_pass == Some(false)).count();
    let pass = continuity.pass && identity_failed == 0;
    Ok(SweepReport {
        points,
        continuity,
        identity_checked,
        identity_failed,
        pass,
    })
}

fn sweep_point(opts: &SweepOptions, delta: f64) -> Result<SweepPoint> {
    let s = StepScenario::at_delta(delta, opts.energy, opts.j0, opts.units, opts.critical_rel_tol)?;
    let psi = stationary_state(&s, &opts.grid, opts.position, opts.width)?;
    let h = opts.grid.spacing(0);
    let from = opts.position + 2.0 * h;
    let profile = momentum_weak_value_profile(&psi, from, from + opts.window)?;
    let count = profile.len() as f64;
    let m = s.units.mass;
    let v_im = profile.iter().map(|p| p.im.abs()).sum::<f64>() / count / m;
    let v_re = profile.iter().map(|p| p.re.abs()).sum::<f64>() / count / m;
    let v_measured = profile.iter().map(|p| p.value().norm()).sum::<f64>() / count / m;
    let (v_fit, identity_pass) = if s.regime == Regime::Forbidden {
        match identity_check(&s, &psi, opts.position, opts.fit_tol) {
            Ok(r) => (r.v_fit, Some(r.pass)),
            Err(BohmError::Fit(_)) => (None, None),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };
    Ok(SweepPoint {
        delta: s.delta,
        regime: s.regime,
        v_scale: v_scale(&s),
        v_fit,
        v_im,
        v_re,
        v_measured,
        identity_pass,
    })
}

#[cfg(test)]
mod tests;
