use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::{Artifact, Block, Check, Pipeline, PipelineOutput, Registry, RunOptions, Scenario, Setup};
use crate::dynamics::{aw_along, evolution_terms_series, verify_case, verify_registry, VerifyReport};
use crate::ensemble::{
    born_rule_test, ensemble_average, equivariance_test, sample_equilibrium, two_branch_scenario,
    EquivarianceOptions, ObservableStats, MAX_ABORT_FRACTION, VERDICT_FRACTION,
};
use crate::error::{BohmError, Result};
use crate::evolution::{continuity_residual, EvolutionRecord};
use crate::grid::{Point, MAX_DIMS};
use crate::guidance::{GuidanceField, TrajectoryOptions, TrajectoryStatus};
use crate::io::{field_csv, trajectory_csv};
use crate::operators::{
    expectation, local_eigen_check, robustness_probe, spin_postselected_weak_value, weak_actual_value,
    EigenTolerance, ObservableKind,
};
use crate::waveguide::{
    delta_sweep, identity_check, stationary_state, IdentityReport, StepScenario, SweepOptions,
};

pub(super) fn registry() -> Registry<Arc<dyn Pipeline>> {
    let mut r: Registry<Arc<dyn Pipeline>> = Registry::new("pipeline");
    r.register("evolve", Evolve.describe(), Arc::new(Evolve))
        .register("trajectories", Trajectories.describe(), Arc::new(Trajectories))
        .register("ensemble", Ensemble.describe(), Arc::new(Ensemble))
        .register("verify", Verify.describe(), Arc::new(Verify))
        .register("waveguide", Waveguide.describe(), Arc::new(Waveguide))
        .register("actual_values", ActualValues.describe(), Arc::new(ActualValues));
    r
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn point_of(coords: &[f64], dims: usize, key: &str) -> Result<Point> {
    if coords.len() != dims {
        return Err(BohmError::validation(key, format!("expected {dims} coordinates, got {}", coords.len())));
    }
    let mut p = [0.0; MAX_DIMS];
    p[..dims].copy_from_slice(coords);
    Ok(p)
}

fn record_artifacts(record: &EvolutionRecord, out: &mut Vec<Artifact>) {
    for (i, s) in record.snapshots().iter().enumerate() {
        out.push(Artifact {
            path: format!("record/snapshot_{i:05}.csv"),
            contents: field_csv(s.grid(), s.amplitudes(), s.components()),
        });
    }
}

struct Evolve;

impl Pipeline for Evolve {
    fn describe(&self) -> &'static str {
        "propagate the initial state; norm, continuity and expectation values over time"
    }

    fn requires(&self) -> &'static [Block] {
        &[Block::Grid, Block::State, Block::Propagator]
    }

    fn run(&self, sc: &Scenario, _opts: &RunOptions) -> Result<PipelineOutput> {
        let setup = sc.setup()?;
        let record = sc.evolve(&setup)?;
        let mut checks = Vec::new();
        let n0 = record.snapshots()[0].norm();
        let drift = record
            .snapshots()
            .iter()
            .map(|s| (s.norm() - n0).abs() / n0)
            .fold(0.0, f64::max);
        checks.push(Check::at_most("norm drift", drift, sc.tolerances.norm_drift));

        let continuity = if record.len() >= 3 {
            let r = continuity_residual(&record)?;
            if let Some(tol) = sc.tolerances.continuity {
                checks.push(Check::at_most("continuity residual", r.worst(), tol));
            }
            Some(r.worst())
        } else {
            None
        };

        // ⟨A⟩ per snapshot, one column per observable
        let mut csv = String::from("t");
        for o in &setup.observables {
            let _ = write!(csv, ",<{}>", o.label());
        }
        csv.push('\n');
        let mut series = vec![Vec::with_capacity(record.len()); setup.observables.len()];
        for s in record.snapshots() {
            let _ = write!(csv, "{:e}", s.time);
            for (k, o) in setup.observables.iter().enumerate() {
                let e = expectation(o, s)?;
                let _ = write!(csv, ",{:e}", e.value);
                series[k].push(e.value);
            }
            csv.push('\n');
        }
        let mut expectations = Vec::new();
        for (o, vals) in setup.observables.iter().zip(&series) {
            let (first, last) = (vals[0], vals[vals.len() - 1]);
            expectations.push(json!({"observable": o.label(), "initial": first, "final": last}));
            if let (Some(tol), ObservableKind::Hamiltonian(_)) = (sc.tolerances.energy_drift, &o.kind) {
                let worst = vals.iter().map(|v| (v - first).abs()).fold(0.0, f64::max);
                checks.push(Check::at_most("energy drift", worst / first.abs().max(1.0), tol));
            }
        }
        let mut artifacts = vec![Artifact {
            path: "expectations.csv".into(),
            contents: csv,
        }];
        if sc.dump_fields {
            record_artifacts(&record, &mut artifacts);
        }
        Ok(PipelineOutput {
            checks,
            details: json!({
                "method": record.method(),
                "dt": record.dt(),
                "snapshots": record.len(),
                "t_end": record.end(),
                "norm_drift": drift,
                "continuity_worst": continuity,
                "expectations": expectations,
            }),
            artifacts,
        })
    }
}

struct Trajectories;

#[derive(Serialize)]
struct TrajectorySummary {
    start: Vec<f64>,
    end: Vec<f64>,
    status: TrajectoryStatus,
    samples: usize,
    /// Largest |lhs − rhs| of the evolution equation per observable.
    max_residual: Vec<Option<f64>>,
}

impl Pipeline for Trajectories {
    fn describe(&self) -> &'static str {
        "guided trajectories with weak actual values and evolution-equation terms"
    }

    fn requires(&self) -> &'static [Block] {
        &[Block::Grid, Block::State, Block::Propagator, Block::Trajectories]
    }

    fn run(&self, sc: &Scenario, opts: &RunOptions) -> Result<PipelineOutput> {
        let spec = sc.trajectories.as_ref().expect("validated");
        let setup = sc.setup()?;
        let dims = setup.grid.dims();
        let mut starts = spec
            .starts
            .iter()
            .enumerate()
            .map(|(i, s)| point_of(s, dims, &format!("trajectories.starts[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        if spec.count > 0 {
            let seed = opts.seed.unwrap_or(spec.seed);
            starts.extend(sample_equilibrium(&setup.psi0, spec.count, seed)?);
        }
        if starts.is_empty() {
            return Err(BohmError::validation("trajectories", "no start points"));
        }
        let record = sc.evolve(&setup)?;
        let field = GuidanceField::new(&record, 1)?;
        let topts = TrajectoryOptions {
            dt: spec.dt,
            t_end: None,
            divergence: false,
        };
        let runs: Vec<(String, TrajectorySummary)> = starts
            .par_iter()
            .map(|q0| -> Result<(String, TrajectorySummary)> {
                let traj = field.integrate(q0, &topts)?;
                let mut columns = Vec::new();
                let mut max_residual = Vec::new();
                for o in &setup.observables {
                    columns.push((o.label(), aw_along(&traj, &record, o)?));
                    let worst = if spec.terms && traj.len() >= 3 && traj.completed() {
                        let terms = evolution_terms_series(&traj, &record, o)?;
                        Some(terms.iter().map(|t| t.residual).fold(0.0, f64::max))
                    } else {
                        None
                    };
                    max_residual.push(worst);
                }
                let csv = trajectory_csv(&traj, dims, &columns)?;
                let summary = TrajectorySummary {
                    start: q0[..dims].to_vec(),
                    end: traj.last().q[..dims].to_vec(),
                    status: traj.status,
                    samples: traj.len(),
                    max_residual,
                };
                Ok((csv, summary))
            })
            .collect::<Result<_>>()?;

        let aborted = runs.iter().filter(|(_, s)| s.status != TrajectoryStatus::Completed).count();
        let mut checks = vec![Check::at_most(
            "aborted fraction",
            aborted as f64 / runs.len() as f64,
            MAX_ABORT_FRACTION,
        )];
        if let (Some(tol), true) = (sc.tolerances.terms_residual, spec.terms) {
            for (k, o) in setup.observables.iter().enumerate() {
                let worst = runs
                    .iter()
                    .filter_map(|(_, s)| s.max_residual[k])
                    .fold(0.0, f64::max);
                checks.push(Check::at_most(format!("evolution residual {}", o.label()), worst, tol));
            }
        }
        let mut artifacts = Vec::new();
        let mut summaries = Vec::new();
        for (i, (csv, s)) in runs.into_iter().enumerate() {
            artifacts.push(Artifact {
                path: format!("trajectories/trajectory_{i:04}.csv"),
                contents: csv,
            });
            summaries.push(s);
        }
        if sc.dump_fields {
            record_artifacts(&record, &mut artifacts);
        }
        Ok(PipelineOutput {
            checks,
            details: json!({
                "snapshots": record.len(),
                "t_end": record.end(),
                "trajectories": to_value(&summaries)?,
            }),
            artifacts,
        })
    }
}

struct Ensemble;

#[derive(Serialize)]
struct AverageSummary {
    first: ObservableStats,
    repeats: usize,
    mc_passed: usize,
}

impl Pipeline for Ensemble {
    fn describe(&self) -> &'static str {
        "equilibrium ensembles: averages of a_w, equivariance, branch frequencies"
    }

    fn requires(&self) -> &'static [Block] {
        &[Block::Grid, Block::State, Block::Ensemble]
    }

    fn run(&self, sc: &Scenario, opts: &RunOptions) -> Result<PipelineOutput> {
        let spec = sc.ensemble.as_ref().expect("validated");
        let seed = opts.seed.unwrap_or(spec.seed);
        let setup = sc.setup()?;
        let mut checks = Vec::new();
        let mut artifacts = Vec::new();
        let mut details = serde_json::Map::new();
        details.insert("samples".into(), json!(spec.samples));
        details.insert("seed".into(), json!(seed));

        if !setup.observables.is_empty() {
            let averages = averages(&setup, spec.samples, seed, spec.repeats)?;
            for a in &averages {
                let label = &a.first.observable;
                checks.push(Check::at_most(
                    format!("grid identity {label}"),
                    a.first.grid_relative_error,
                    crate::ensemble::GRID_IDENTITY_TOL,
                ));
                let needed = if a.repeats == 1 {
                    1.0
                } else {
                    (VERDICT_FRACTION * a.repeats as f64).floor()
                };
                checks.push(Check::at_least(
                    format!("monte carlo {label} seeds within 4 SE"),
                    a.mc_passed as f64,
                    needed,
                ));
            }
            details.insert("averages".into(), to_value(&averages)?);
        }

        if let Some(eq) = &spec.equivariance {
            let record = sc.evolve(&setup)?;
            let t_check = eq.t_check.unwrap_or_else(|| record.end());
            let report = equivariance_test(
                &record,
                spec.samples,
                seed,
                t_check,
                EquivarianceOptions {
                    bins: eq.bins,
                    dt_traj: eq.dt_traj,
                    ..EquivarianceOptions::default()
                },
            )?;
            checks.push(Check::at_most("equivariance sup distance", report.sup_distance, report.ks_bound));
            checks.push(Check::at_most(
                "equivariance aborted fraction",
                report.aborted_fraction,
                MAX_ABORT_FRACTION,
            ));
            artifacts.push(Artifact {
                path: "histogram.csv".into(),
                contents: report.histogram_csv(),
            });
            details.insert("equivariance".into(), to_value(&report)?);
        }

        if let Some(b) = &spec.born_rule {
            let prop = sc
                .propagator
                .as_ref()
                .ok_or_else(|| BohmError::validation("propagator", "required by the born_rule block"))?;
            let state = sc.state.as_ref().expect("validated");
            let scenario = two_branch_scenario(&setup.grid, setup.units, state, prop, EigenTolerance::relative(b.eigen_tol))?;
            let report = born_rule_test(&scenario, spec.samples, seed)?;
            for br in &report.branches {
                checks.push(Check::at_most(format!("branch {} frequency |z|", br.label), br.z_score.abs(), 3.0));
            }
            checks.push(Check::at_least("eigencondition verdicts", report.verdict_fraction, VERDICT_FRACTION));
            details.insert("born_rule".into(), to_value(&report)?);
        }
        if checks.is_empty() {
            return Err(BohmError::validation(
                "ensemble",
                "nothing to do: give observables, equivariance or born_rule",
            ));
        }
        Ok(PipelineOutput {
            checks,
            details: Value::Object(details),
            artifacts,
        })
    }
}

fn averages(setup: &Setup, n: usize, seed: u64, repeats: usize) -> Result<Vec<AverageSummary>> {
    setup
        .observables
        .iter()
        .map(|o| {
            let runs: Vec<ObservableStats> = (0..repeats as u64)
                .map(|r| ensemble_average(&setup.psi0, o, n, seed.wrapping_add(r)))
                .collect::<Result<_>>()?;
            let mc_passed = runs.iter().filter(|s| s.mc_pass).count();
            Ok(AverageSummary {
                first: runs.into_iter().next().expect("repeats > 0"),
                repeats,
                mc_passed,
            })
        })
        .collect()
}

struct Verify;

impl Pipeline for Verify {
    fn describe(&self) -> &'static str {
        "closed-form verification cases for the evolution equation of a_w"
    }

    fn requires(&self) -> &'static [Block] {
        &[]
    }

    fn run(&self, sc: &Scenario, _opts: &RunOptions) -> Result<PipelineOutput> {
        let names: Vec<String> = match &sc.verify {
            Some(v) if !v.cases.is_empty() => v.cases.clone(),
            _ => verify_registry().names().into_iter().map(String::from).collect(),
        };
        let reports: Vec<VerifyReport> = names.par_iter().map(|n| verify_case(n)).collect::<Result<_>>()?;
        let checks = reports
            .iter()
            .map(|r| Check {
                name: format!("case {}", r.name),
                value: r.checks.iter().map(|c| c.value).fold(r.max_residual, f64::max),
                tolerance: r.tolerance,
                pass: r.pass,
            })
            .collect();
        Ok(PipelineOutput {
            checks,
            details: json!({ "cases": to_value(&reports)? }),
            artifacts: Vec::new(),
        })
    }
}

struct Waveguide;

impl Pipeline for Waveguide {
    fn describe(&self) -> &'static str {
        "evanescent step states: speed-scale identity and the sweep through Δ = 0"
    }

    fn requires(&self) -> &'static [Block] {
        &[Block::Grid, Block::Waveguide]
    }

    fn run(&self, sc: &Scenario, _opts: &RunOptions) -> Result<PipelineOutput> {
        let spec = sc.waveguide.as_ref().expect("validated");
        let grid = sc.grid.as_ref().expect("validated").build()?;
        let deltas = if !spec.deltas.is_empty() {
            spec.deltas.clone()
        } else {
            match (spec.delta_max, spec.count) {
                (Some(m), Some(n)) if m > 0.0 && n >= 3 => SweepOptions::symmetric(m, n),
                _ => {
                    return Err(BohmError::validation(
                        "waveguide",
                        "give `deltas` or a positive `delta_max` with `count` ≥ 3",
                    ))
                }
            }
        };
        let opts = SweepOptions {
            energy: spec.energy,
            j0: spec.j0,
            units: sc.units,
            deltas,
            grid: grid.clone(),
            position: spec.position,
            width: spec.width,
            window: spec.window,
            fit_tol: spec.fit_tol,
            critical_rel_tol: spec.critical_rel_tol,
        };
        let sweep = delta_sweep(&opts)?;
        let mut checks = vec![
            Check::at_most("sweep continuity ratio", sweep.continuity.max_ratio, sweep.continuity.factor),
            Check::at_most("sweep identity failures", sweep.identity_failed as f64, 0.0),
        ];
        let identities: Vec<IdentityReport> = spec
            .identity
            .par_iter()
            .map(|&d| {
                let s = StepScenario::at_delta(d, spec.energy, spec.j0, sc.units, spec.critical_rel_tol)?;
                let psi = stationary_state(&s, &grid, spec.position, spec.width)?;
                identity_check(&s, &psi, spec.position, spec.fit_tol)
            })
            .collect::<Result<_>>()?;
        for r in &identities {
            checks.push(Check {
                name: format!("identity at delta {:.4}", r.delta),
                value: r.max_deviation,
                tolerance: r.tolerance,
                pass: r.pass,
            });
        }
        Ok(PipelineOutput {
            checks,
            details: json!({
                "sweep": to_value(&sweep)?,
                "identity": to_value(&identities)?,
            }),
            artifacts: vec![Artifact {
                path: "sweep.csv".into(),
                contents: sweep.to_csv(),
            }],
        })
    }
}

struct ActualValues;

impl Pipeline for ActualValues {
    fn describe(&self) -> &'static str {
        "local eigencondition, weak values, robustness probes and spin post-selection at given points"
    }

    fn requires(&self) -> &'static [Block] {
        &[Block::Grid, Block::State, Block::ActualValues]
    }

    fn run(&self, sc: &Scenario, _opts: &RunOptions) -> Result<PipelineOutput> {
        let spec = sc.actual_values.as_ref().expect("validated");
        let setup = sc.setup()?;
        let dims = setup.grid.dims();
        let psi = &setup.psi0;
        let points = spec
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| point_of(p, dims, &format!("actual_values.points[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let mut checks = Vec::new();
        let mut rows = Vec::new();
        for q in &points {
            for o in &setup.observables {
                let verdict = local_eigen_check(o, psi, q, spec.eigen_tol)?;
                let weak = weak_actual_value(o, psi, q)?;
                rows.push(json!({
                    "point": &q[..dims],
                    "observable": o.label(),
                    "verdict": to_value(&verdict)?,
                    "weak": to_value(&weak)?,
                }));
            }
        }

        let mut probes = Vec::new();
        if let Some(p) = &spec.probes {
            let obs = setup
                .observables
                .iter()
                .find(|o| matches!(o.kind, ObservableKind::MomentumAxis(_)))
                .ok_or_else(|| BohmError::validation("actual_values.probes", "needs a momentum observable"))?;
            for q in &points {
                let base = weak_actual_value(obs, psi, q)?.weak_value();
                for &gamma in &p.gammas {
                    let seq = robustness_probe(obs, psi, q, gamma, p.n_max, p.config)?;
                    let limit_err = (seq.limit - base).norm();
                    let predicted = seq.phi_ratio * (seq.achieved - base);
                    let first_err = (seq.first_order - predicted).norm();
                    let tag = format!("at {:?} gamma {gamma}", &q[..dims]);
                    checks.push(Check::at_most(format!("probe limit {tag}"), limit_err, sc.tolerances.probe));
                    checks.push(Check::at_most(format!("probe first order {tag}"), first_err, sc.tolerances.probe));
                    probes.push(json!({
                        "point": &q[..dims],
                        "gamma": gamma,
                        "base": [base.re, base.im],
                        "limit": [seq.limit.re, seq.limit.im],
                        "first_order": [seq.first_order.re, seq.first_order.im],
                        "achieved": [seq.achieved.re, seq.achieved.im],
                    }));
                }
            }
        }

        let mut post = Vec::new();
        if let Some(chi) = spec.postselect {
            let chi_f = [Complex64::new(chi[0][0], chi[0][1]), Complex64::new(chi[1][0], chi[1][1])];
            let half = 0.5 * setup.units.hbar;
            for o in setup.observables.iter().filter(|o| matches!(o.kind, ObservableKind::SpinComponent(_))) {
                for q in &points {
                    let w = spin_postselected_weak_value(o, psi, q, chi_f)?;
                    let rayleigh = weak_actual_value(o, psi, q)?.a_w;
                    checks.push(Check::at_most(
                        format!("spin a_w bound {} at {:?}", o.label(), &q[..dims]),
                        rayleigh.abs(),
                        half * (1.0 + 1e-12),
                    ));
                    if spec.expect_anomalous {
                        checks.push(Check::at_least(
                            format!("anomalous |Re S_w|/(hbar/2) {} at {:?}", o.label(), &q[..dims]),
                            w.re.abs() / half,
                            1.0,
                        ));
                    }
                    post.push(json!({
                        "point": &q[..dims],
                        "observable": o.label(),
                        "postselected": [w.re, w.im],
                        "a_w": rayleigh,
                    }));
                }
            }
        }
        if checks.is_empty() {
            // eigen verdicts alone are findings, not pass/fail checks
            checks.push(Check::flag("evaluated", !rows.is_empty()));
        }
        Ok(PipelineOutput {
            checks,
            details: json!({ "points": rows, "probes": probes, "postselected": post }),
            artifacts: Vec::new(),
        })
    }
}
