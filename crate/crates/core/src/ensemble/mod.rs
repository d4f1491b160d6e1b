//! Equilibrium ensembles: |ψ|² sampling, ensemble averages of weak actual
//! values, equivariance and Born-rule frequency tests.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{BohmError, Result};
use crate::evolution::{analytic_state, evolve, EvolutionRecord, PropagatorSpec, StateContext};
use crate::grid::{Grid, Point};
use crate::guidance::{GuidanceField, TrajectoryOptions, TrajectoryStatus};
use crate::operators::{expectation, local_eigen_check, EigenTolerance, LocalEvaluator, Observable};
use crate::potential::{Potential, Zero};
use crate::wavefunction::{Units, WaveFunction};

/// Node-abort fraction above which statistics are flagged.
pub const MAX_ABORT_FRACTION: f64 = 0.01;
/// Relative floor added to Monte-Carlo tolerances for exactly constant a_w.
pub const MC_ROUNDING_FLOOR: f64 = 1e-9;
/// Kolmogorov-Smirnov coefficient at the 1% level.
pub const KS_COEFFICIENT_1PCT: f64 = 1.63;

/// Random stream of sample `index` under `seed`, independent of scheduling.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Cell-measure CDF of a grid density.
struct CellSampler {
    cdf: Vec<f64>,
}

impl CellSampler {
    fn new(psi: &WaveFunction) -> Result<Self> {
        let rho = psi.density();
        let mut cdf = Vec::with_capacity(rho.len());
        let mut acc = 0.0;
        for r in rho {
            acc += r;
            cdf.push(acc);
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(BohmError::Degenerate("cannot sample a zero density".into()));
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        Ok(Self { cdf })
    }

    fn draw(&self, psi: &WaveFunction, rng: &mut ChaCha8Rng) -> Point {
        let grid = psi.grid();
        let u: f64 = rng.gen();
        let cell = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let mut q = grid.point(cell);
        for (a, qa) in q.iter_mut().enumerate().take(grid.dims()) {
            let jitter: f64 = rng.gen::<f64>() - 0.5;
            *qa += jitter * grid.spacing(a);
            let ax = grid.axis(a);
            if !grid.is_periodic() {
                *qa = qa.clamp(ax.min, ax.max);
            }
        }
        grid.wrap(q)
    }
}

/// `n` i.i.d. points from the normalized grid density of `psi`: a cell is
/// drawn from ρΔV, then a uniform offset within the cell around its node.
pub fn sample_equilibrium(psi: &WaveFunction, n: usize, seed: u64) -> Result<Vec<Point>> {
    let sampler = CellSampler::new(psi)?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| sampler.draw(psi, &mut sample_rng(seed, i)))
        .collect())
}

/// Monte-Carlo and deterministic ensemble averages of one observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableStats {
    pub observable: String,
    pub n_samples: usize,
    pub completed: usize,
    pub aborted_count: usize,
    pub mean_a_w: f64,
    pub std_error: f64,
    pub expectation: f64,
    pub z_score: f64,
    /// Σ ρ a_w ΔV over grid nodes.
    pub grid_integral: f64,
    pub grid_relative_error: f64,
    pub statistically_valid: bool,
    pub mc_pass: bool,
    pub grid_pass: bool,
}

/// Tolerance of the deterministic grid identity.
pub const GRID_IDENTITY_TOL: f64 = 1e-8;

/// Mean, standard error of the mean, and count of the finite values.
fn mean_and_error(values: &[Option<f64>]) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.iter().flatten() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = sum / n as f64;
    if n < 2 {
        return (mean, f64::NAN, n);
    }
    let ss: f64 = values.iter().flatten().map(|v| (v - mean) * (v - mean)).sum();
    let std = (ss / (n - 1) as f64).sqrt();
    (mean, std / (n as f64).sqrt(), n)
}

/// Checks the ensemble-average identity for `obs` on `psi` with `n`
/// equilibrium samples.
pub fn ensemble_average(psi: &WaveFunction, obs: &Observable, n: usize, seed: u64) -> Result<ObservableStats> {
    let psi = psi.normalize()?;
    let ev = LocalEvaluator::new(obs, &psi, 0)?;
    let expected = expectation(obs, &psi)?.value;

    let grid = psi.grid();
    let comps = psi.components();
    let grid_integral: f64 = (0..grid.len())
        .map(|j| {
            let (p, ap) = ev.values(&grid.point(j));
            (0..comps).map(|c| (p[c].conj() * ap[c]).re).sum::<f64>()
        })
        .sum::<f64>()
        * grid.cell_volume();
    let grid_relative_error = (grid_integral - expected).abs() / expected.abs().max(1.0);

    let points = sample_equilibrium(&psi, n, seed)?;
    let values: Vec<Option<f64>> = points
        .par_iter()
        .map(|q| ev.weak(q).ok().map(|w| w.a_w))
        .collect();
    let (mean, se, completed) = mean_and_error(&values);
    let aborted = n - completed;
    let diff = (mean - expected).abs();
    let floor = MC_ROUNDING_FLOOR * expected.abs().max(1.0);
    let z_score = if se > 0.0 {
        (mean - expected) / se
    } else if diff <= floor {
        0.0
    } else {
        f64::INFINITY
    };
    if aborted as f64 > MAX_ABORT_FRACTION * n as f64 {
        log::warn!("{} of {n} samples hit nodes for {}", aborted, obs.label());
    }
    Ok(ObservableStats {
        observable: obs.label(),
        n_samples: n,
        completed,
        aborted_count: aborted,
        mean_a_w: mean,
        std_error: se,
        expectation: expected,
        z_score,
        grid_integral,
        grid_relative_error,
        statistically_valid: aborted as f64 <= MAX_ABORT_FRACTION * n as f64,
        mc_pass: completed > 0 && diff <= 4.0 * se.max(0.0) + floor,
        grid_pass: grid_relative_error <= GRID_IDENTITY_TOL,
    })
}

/// Histogram comparison of transported samples against |ψ_t|².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub t_check: f64,
    pub n_samples: usize,
    pub completed: usize,
    pub aborted_count: usize,
    pub aborted_fraction: f64,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// ∫_bin |ψ_t|², including mass outside the window in the first/last bins.
    pub reference: Vec<f64>,
    pub sup_distance: f64,
    pub ks_bound: f64,
    pub chi_square: f64,
    pub chi_square_dof: usize,
    pub inconclusive: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceOptions {
    pub bins: usize,
    /// Density quantile excluded on each side when choosing the window.
    pub tail: f64,
    pub dt_traj: Option<f64>,
}

impl Default for EquivarianceOptions {
    fn default() -> Self {
        Self {
            bins: 64,
            tail: 1e-5,
            dt_traj: None,
        }
    }
}

/// Mass of |ψ|² below each of `edges` along axis 0, by integrating the
/// interpolated density on a sub-grid of each grid cell.
fn mass_below(psi: &WaveFunction, edges: &[f64]) -> Vec<f64> {
    const SUB: usize = 8;
    let grid = psi.grid();
    let dx = grid.spacing(0);
    let ax = grid.axis(0);
    let x0 = ax.min - if grid.is_periodic() { 0.0 } else { 0.5 * dx };
    let h = dx / SUB as f64;
    let cells = grid.points(0) * SUB;
    let mut cum = Vec::with_capacity(cells + 1);
    let mut acc = 0.0;
    cum.push(0.0);
    for k in 0..cells {
        let x = x0 + (k as f64 + 0.5) * h;
        let rho = if grid.is_periodic() || (x >= ax.min && x <= ax.max) {
            psi.density_at(&[x, 0.0])
        } else {
            0.0
        };
        acc += rho * h;
        cum.push(acc);
    }
    let total = acc;
    edges
        .iter()
        .map(|&e| {
            let s = ((e - x0) / h).clamp(0.0, cells as f64);
            let i = (s.floor() as usize).min(cells - 1);
            let frac = s - i as f64;
            (cum[i] + frac * (cum[i + 1] - cum[i])) / total
        })
        .collect()
}

/// Window [lo, hi] along axis 0 holding all but `tail` of the mass per side.
fn density_window(psi: &WaveFunction, tail: f64) -> (f64, f64) {
    let grid = psi.grid();
    let rho = psi.density();
    let total: f64 = rho.iter().sum();
    let mut acc = 0.0;
    let (mut lo, mut hi) = (grid.axis(0).min, grid.coord(0, grid.points(0) - 1));
    let mut found_lo = false;
    for (i, r) in rho.iter().enumerate() {
        acc += r / total;
        if !found_lo && acc >= tail {
            lo = grid.coord(0, i.saturating_sub(1));
            found_lo = true;
        }
        if acc >= 1.0 - tail {
            hi = grid.coord(0, (i + 1).min(grid.points(0) - 1));
            break;
        }
    }
    (lo, hi)
}

/// Samples ρ₀, transports each sample to `t_check` and compares the
/// histogram of final positions with |ψ(t_check)|² (1D records).
pub fn equivariance_test(
    record: &EvolutionRecord,
    n: usize,
    seed: u64,
    t_check: f64,
    opts: EquivarianceOptions,
) -> Result<EquivarianceReport> {
    if record.grid().dims() != 1 {
        return Err(BohmError::Unsupported(
            "equivariance histograms are implemented for 1D records".into(),
        ));
    }
    if opts.bins < 2 {
        return Err(BohmError::Config("need at least two histogram bins".into()));
    }
    let psi0 = record.snapshots()[0].normalize()?;
    let psi_t = record.state_at(t_check)?.normalize()?;
    let field = GuidanceField::new(record, 1)?;
    let topts = TrajectoryOptions {
        dt: opts.dt_traj,
        t_end: Some(t_check),
        divergence: false,
    };
    let starts = sample_equilibrium(&psi0, n, seed)?;
    let finals: Vec<Option<Point>> = starts
        .par_iter()
        .map(|q| match field.transport(q, &topts) {
            Ok((q, TrajectoryStatus::Completed)) => Some(q),
            _ => None,
        })
        .collect();
    let xs: Vec<f64> = finals.iter().flatten().map(|q| q[0]).collect();
    let completed = xs.len();
    let aborted = n - completed;

    let (lo, hi) = density_window(&psi_t, opts.tail);
    let edges: Vec<f64> = (0..=opts.bins)
        .map(|i| lo + (hi - lo) * i as f64 / opts.bins as f64)
        .collect();
    let below = mass_below(&psi_t, &edges);
    let mut reference: Vec<f64> = below.windows(2).map(|w| w[1] - w[0]).collect();
    reference[0] += below[0];
    *reference.last_mut().expect("bins >= 2") += 1.0 - below[opts.bins];

    let mut counts = vec![0u64; opts.bins];
    let width = (hi - lo) / opts.bins as f64;
    for &x in &xs {
        let b = ((x - lo) / width).floor();
        let b = if b < 0.0 { 0 } else { (b as usize).min(opts.bins - 1) };
        counts[b] += 1;
    }
    let nc = completed.max(1) as f64;
    let mut sup: f64 = 0.0;
    let (mut emp, mut refc) = (0.0, 0.0);
    for (c, r) in counts.iter().zip(&reference) {
        emp += *c as f64 / nc;
        refc += r;
        sup = sup.max((emp - refc).abs());
    }
    let mut chi = 0.0;
    let mut dof = 0usize;
    for (c, r) in counts.iter().zip(&reference) {
        let e = r * nc;
        if e >= 5.0 {
            chi += (*c as f64 - e).powi(2) / e;
            dof += 1;
        }
    }
    let ks_bound = KS_COEFFICIENT_1PCT / nc.sqrt();
    let aborted_fraction = aborted as f64 / n.max(1) as f64;
    let inconclusive = aborted_fraction > MAX_ABORT_FRACTION;
    Ok(EquivarianceReport {
        t_check,
        n_samples: n,
        completed,
        aborted_count: aborted,
        aborted_fraction,
        bin_edges: edges,
        counts,
        reference,
        sup_distance: sup,
        ks_bound,
        chi_square: chi,
        chi_square_dof: dof.saturating_sub(1),
        inconclusive,
        pass: !inconclusive && completed > 0 && sup < ks_bound,
    })
}

impl EquivarianceReport {
    /// Plot-ready CSV: bin_lo, bin_hi, count, empirical, reference.
    pub fn histogram_csv(&self) -> String {
        let nc = self.completed.max(1) as f64;
        let mut out = String::from("bin_lo,bin_hi,count,empirical,reference\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.bin_edges[i],
                self.bin_edges[i + 1],
                c,
                *c as f64 / nc,
                self.reference[i]
            ));
        }
        out
    }
}

/// One branch of a superposition Σ c_i ψ_i: its evolution and the value the
/// observable takes inside it.
#[derive(Debug, Clone)]
pub struct Branch {
    pub label: String,
    pub coefficient: Complex64,
    /// Normalized branch state evolved alone.
    pub record: EvolutionRecord,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct BranchScenario {
    /// Evolution of the full superposition.
    pub record: EvolutionRecord,
    pub branches: Vec<Branch>,
    pub observable: Observable,
    pub eigen_tol: EigenTolerance,
    /// Q is ambiguous when every branch has density above this fraction of
    /// its own maximum there.
    pub overlap_threshold: f64,
    /// Relative window around the branch value counted as a match.
    pub value_window: f64,
    pub dt_traj: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchStats {
    pub label: String,
    pub weight: f64,
    pub count: usize,
    pub frequency: f64,
    pub binomial_se: f64,
    pub z_score: f64,
    pub eigen_held: usize,
    pub value_matched: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BornRuleReport {
    pub n_samples: usize,
    pub completed: usize,
    pub aborted_count: usize,
    pub ambiguous_count: usize,
    pub branches: Vec<BranchStats>,
    /// Fraction of assigned samples whose eigencheck held with λ inside the
    /// value window of their branch.
    pub verdict_fraction: f64,
    pub pass: bool,
}

/// Required fraction of holding verdicts.
pub const VERDICT_FRACTION: f64 = 0.99;

enum Outcome {
    Aborted,
    Ambiguous,
    Branch { index: usize, held: bool, matched: bool },
}

/// Transports equilibrium samples to the record end, assigns each to the
/// branch whose support holds it and checks the local eigencondition there.
pub fn born_rule_test(scenario: &BranchScenario, n: usize, seed: u64) -> Result<BornRuleReport> {
    let record = &scenario.record;
    let t_end = record.end();
    let psi0 = record.snapshots()[0].normalize()?;
    let psi_t = record.snapshots()[record.len() - 1].clone();
    let field = GuidanceField::new(record, 1)?;
    let topts = TrajectoryOptions {
        dt: scenario.dt_traj,
        t_end: Some(t_end),
        divergence: false,
    };
    let finals: Vec<&WaveFunction> = scenario
        .branches
        .iter()
        .map(|b| &b.record.snapshots()[b.record.len() - 1])
        .collect();
    let norm: f64 = scenario.branches.iter().map(|b| b.coefficient.norm_sqr()).sum();
    let starts = sample_equilibrium(&psi0, n, seed)?;
    let outcomes: Vec<Outcome> = starts
        .par_iter()
        .map(|q0| {
            let q = match field.transport(q0, &topts) {
                Ok((q, TrajectoryStatus::Completed)) => q,
                _ => return Outcome::Aborted,
            };
            let inside: Vec<usize> = finals
                .iter()
                .enumerate()
                .filter(|(_, b)| b.density_at(&q) > scenario.overlap_threshold * b.max_density())
                .map(|(i, _)| i)
                .collect();
            if inside.len() != 1 {
                return Outcome::Ambiguous;
            }
            let index = inside[0];
            let target = scenario.branches[index].value;
            match local_eigen_check(&scenario.observable, &psi_t, &q, scenario.eigen_tol) {
                Ok(v) => {
                    let lambda = v.lambda.unwrap_or(v.ratio_re);
                    let matched = (lambda - target).abs() <= scenario.value_window * target.abs().max(1e-300);
                    Outcome::Branch { index, held: v.holds, matched }
                }
                Err(_) => Outcome::Aborted,
            }
        })
        .collect();

    let mut counts = vec![0usize; scenario.branches.len()];
    let mut held = vec![0usize; scenario.branches.len()];
    let mut matched = vec![0usize; scenario.branches.len()];
    let (mut aborted, mut ambiguous) = (0, 0);
    for o in &outcomes {
        match o {
            Outcome::Aborted => aborted += 1,
            Outcome::Ambiguous => ambiguous += 1,
            Outcome::Branch { index, held: h, matched: m } => {
                counts[*index] += 1;
                held[*index] += *h as usize;
                matched[*index] += (*h && *m) as usize;
            }
        }
    }
    let assigned: usize = counts.iter().sum();
    let branches: Vec<BranchStats> = scenario
        .branches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let w = b.coefficient.norm_sqr() / norm;
            let freq = counts[i] as f64 / assigned.max(1) as f64;
            let se = (w * (1.0 - w) / assigned.max(1) as f64).sqrt();
            let z = if se > 0.0 { (freq - w) / se } else { 0.0 };
            BranchStats {
                label: b.label.clone(),
                weight: w,
                count: counts[i],
                frequency: freq,
                binomial_se: se,
                z_score: z,
                eigen_held: held[i],
                value_matched: matched[i],
                pass: z.abs() <= 3.0,
            }
        })
        .collect();
    let verdict_fraction = matched.iter().sum::<usize>() as f64 / assigned.max(1) as f64;
    let completed = n - aborted;
    Ok(BornRuleReport {
        n_samples: n,
        completed,
        aborted_count: aborted,
        ambiguous_count: ambiguous,
        pass: assigned > 0
            && branches.iter().all(|b| b.pass)
            && verdict_fraction >= VERDICT_FRACTION
            && (aborted as f64) <= MAX_ABORT_FRACTION * n as f64,
        branches,
        verdict_fraction,
    })
}

/// Branch scenario for a `two_branch` state spec: the superposition and
/// each packet are evolved separately under `propagator` with V = 0; the
/// observable is momentum along axis 0 with branch values ħk₀.
pub fn two_branch_scenario(
    grid: &Grid,
    units: Units,
    spec: &Value,
    propagator: &PropagatorSpec,
    eigen_tol: EigenTolerance,
) -> Result<BranchScenario> {
    let ctx = StateContext { grid, units };
    let psi = analytic_state(spec, &ctx)?;
    let weight_a = spec["weight_a"].as_f64().unwrap_or(0.5);
    let phase_b = spec.get("phase_b").and_then(Value::as_f64).unwrap_or(0.0);
    let v: Arc<dyn Potential> = Arc::new(Zero);
    let prop = propagator.build(grid, units, v.clone())?;
    let run = |state: &WaveFunction| evolve(state, prop.as_ref(), v.clone(), propagator.steps, propagator.stride);
    let record = run(&psi)?;
    let mut branches = Vec::new();
    for (label, c) in [
        ("a", Complex64::new(weight_a.sqrt(), 0.0)),
        ("b", Complex64::from_polar((1.0 - weight_a).sqrt(), phase_b)),
    ] {
        let mut packet = spec[label].clone();
        packet["type"] = Value::from("gaussian_packet");
        let k0 = packet.get("k0").and_then(Value::as_f64).unwrap_or(0.0);
        let state = analytic_state(&packet, &ctx)?;
        branches.push(Branch {
            label: label.into(),
            coefficient: c,
            record: run(&state)?,
            value: units.hbar * k0,
        });
    }
    Ok(BranchScenario {
        record,
        branches,
        observable: Observable::momentum(0),
        eigen_tol,
        overlap_threshold: 1e-8,
        value_window: 0.05,
        dt_traj: None,
    })
}

/// Everything an ensemble run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n_samples: usize,
    pub seed: u64,
    pub aborted_count: usize,
    pub observables: Vec<ObservableStats>,
    pub equivariance: Option<EquivarianceReport>,
    pub born_rule: Option<BornRuleReport>,
}

impl EnsembleReport {
    pub fn pass(&self) -> bool {
        self.observables.iter().all(|o| o.mc_pass && o.grid_pass)
            && self.equivariance.as_ref().is_none_or(|e| e.pass)
            && self.born_rule.as_ref().is_none_or(|b| b.pass)
    }
}
