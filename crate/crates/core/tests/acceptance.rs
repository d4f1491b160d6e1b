//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines reach the terminal under
//! plain `cargo test`. Oracles here are closed forms computed in this file;
//! library invariants that must hold regardless of the verdict are asserted.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use bohmlab_core::dynamics::{evolution_terms_series, verify_case, verify_registry};
use bohmlab_core::ensemble::{
    born_rule_test, ensemble_average, equivariance_test, sample_equilibrium, two_branch_scenario,
    EquivarianceOptions,
};
use bohmlab_core::evolution::{analytic_state, continuity_residual, evolve, PropagatorSpec, StateContext};
use bohmlab_core::guidance::integrate_trajectory;
use bohmlab_core::operators::{
    expectation, robustness_probe, weak_actual_value, EigenTolerance, Observable, ProbeConfig,
};
use bohmlab_core::potential::{Potential, Zero};
use bohmlab_core::scenario::{bundled, find_bundled, run, RunOptions, Scenario, Setup};
use bohmlab_core::waveguide::{
    bohmian_velocity_in_forbidden, delta_sweep, identity_check, kappa, stationary_state, v_scale, Regime,
    StepScenario, SweepOptions, DEFAULT_CRITICAL_REL_TOL,
};
use bohmlab_core::{Boundary, Grid, Units, WaveFunction};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::sync::Arc;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        summary: summary.into(),
    }
}

fn bundled_setup(name: &str) -> (Scenario, Setup) {
    let sc = Scenario::from_json(find_bundled(name).unwrap().text).unwrap();
    let setup = sc.setup().unwrap();
    (sc, setup)
}

fn verify_suite() -> Outcome {
    let names = verify_registry().names();
    assert_eq!(names.len(), 6);
    let mut worst = 0.0f64;
    let mut all = true;
    for name in &names {
        let setup = verify_registry().get(name).unwrap().setup().unwrap();
        assert_eq!(setup.psi0.grid().dims(), 1);
        assert_eq!(setup.psi0.grid().len(), 1024, "{name}");
        let r = verify_case(name).unwrap();
        let residual = r.checks.iter().map(|c| c.value).fold(r.max_residual, f64::max);
        worst = worst.max(residual);
        all &= r.pass && r.error.is_none() && residual <= 1e-6;

        if *name == "plane_wave_position" {
            // terms (0, v, 0) with v = ħk/m, k read off the state's momentum
            let k = expectation(&Observable::momentum(0), &setup.psi0).unwrap().value / setup.psi0.hbar();
            let v = setup.psi0.hbar() * k / setup.psi0.mass();
            let m = r.measured.unwrap();
            assert!((r.expected.rate - v).abs() < 1e-12);
            assert!(m.quantum_dynamical.abs() < 1e-6 && m.divergence_correction.abs() < 1e-6);
            assert!((m.convective - v).abs() < 1e-6 && (m.lhs_fd - v).abs() < 1e-6);
        }
    }
    outcome(all, format!("6 cases on 1024 points, worst residual {worst:.2e} (tol 1e-6)"))
}

/// Closed-form ⟨A⟩ of the bundled ensemble states, by observable label.
fn property1_oracles() -> Vec<(&'static str, BTreeMap<&'static str, f64>)> {
    let k = 2.0 * PI * 3.0 / 20.0;
    let dx = 20.0 / 256.0;
    let packet_e = (0.8f64.powi(2) + 1.0 / (4.0 * 1.5 * 1.5)) / 2.0;
    vec![
        (
            "property1_plane_wave",
            // uniform weight on the periodic nodes 0, dx, ..., 255 dx
            BTreeMap::from([("x0", 255.0 * dx / 2.0), ("p0", k), ("energy", k * k / 2.0)]),
        ),
        ("property1_ho_ground", BTreeMap::from([("x0", 0.0), ("p0", 0.0), ("energy", 0.5)])),
        ("property1_packet", BTreeMap::from([("x0", 1.0), ("p0", 0.8), ("energy", packet_e)])),
        (
            "property1_spinor",
            BTreeMap::from([("x0", -1.0), ("p0", 1.0), ("energy", 0.625), ("spin_z", 0.5 * (0.64 - 0.36))]),
        ),
    ]
}

fn property1() -> Outcome {
    const SEEDS: u64 = 100;
    let mut worst_grid = 0.0f64;
    let mut min_passing = SEEDS;
    let mut pairs = 0;
    let mut all = true;
    for (name, oracle) in property1_oracles() {
        let (_, setup) = bundled_setup(name);
        assert_eq!(setup.observables.len(), oracle.len());
        for obs in &setup.observables {
            let label = obs.label();
            let exact = oracle[label.as_str()];
            let first = ensemble_average(&setup.psi0, obs, 10_000, 0).unwrap();
            assert!(
                (first.expectation - exact).abs() < 1e-8,
                "{name} {label}: <A> {} vs closed form {exact}",
                first.expectation
            );
            worst_grid = worst_grid.max(first.grid_relative_error);
            let passing = (0..SEEDS)
                .filter(|&seed| ensemble_average(&setup.psi0, obs, 10_000, seed).unwrap().mc_pass)
                .count() as u64;
            min_passing = min_passing.min(passing);
            all &= first.grid_relative_error <= 1e-8 && passing >= 99;
            pairs += 1;
        }
    }
    outcome(
        all,
        format!(
            "{pairs} state/observable pairs, grid identity worst rel {worst_grid:.1e} (tol 1e-8), \
             MC within 4 SE on at least {min_passing}/{SEEDS} seeds (need 99)"
        ),
    )
}

fn equivariance() -> Outcome {
    let (sc, setup) = bundled_setup("equivariance_free_packet");
    let sigma = 1.0;
    let t_double = 2.0 * 3f64.sqrt() * setup.units.mass * sigma * sigma / setup.units.hbar;
    let record = sc.evolve(&setup).unwrap();
    assert!((record.end() - t_double).abs() < 1e-12);

    // oracle: σ(t)² = σ²(1 + (ħt/2mσ²)²), four times σ² at t_double
    let last = &record.snapshots()[record.len() - 1];
    let rho = last.density();
    let norm: f64 = rho.iter().sum();
    let xs = last.grid().coords(0);
    let mean: f64 = rho.iter().zip(&xs).map(|(r, x)| r * x).sum::<f64>() / norm;
    let var: f64 = rho.iter().zip(&xs).map(|(r, x)| r * (x - mean).powi(2)).sum::<f64>() / norm;
    assert!((var - 4.0 * sigma * sigma).abs() < 1e-6, "width² {var}");

    let n = 10_000;
    let r = equivariance_test(&record, n, 1, t_double, EquivarianceOptions::default()).unwrap();
    assert_eq!(r.counts.len(), 64);
    assert!((r.ks_bound - 1.63 / (n as f64).sqrt()).abs() < 1e-12);
    let pass = r.sup_distance < r.ks_bound && r.aborted_fraction < 0.01;
    outcome(
        pass,
        format!(
            "n = {n}, 64 bins, sup distance {:.4} < {:.4}, aborted {:.2}%",
            r.sup_distance,
            r.ks_bound,
            100.0 * r.aborted_fraction
        ),
    )
}

fn born_rule() -> Outcome {
    let sc = Scenario::from_json(find_bundled("born_rule_two_branch").unwrap().text).unwrap();
    let state = sc.state.as_ref().unwrap();
    assert_eq!(state["weight_a"], json!(0.3));
    let grid = sc.grid.as_ref().unwrap().build().unwrap();
    let branches = two_branch_scenario(
        &grid,
        sc.units,
        state,
        sc.propagator.as_ref().unwrap(),
        EigenTolerance::relative(0.05),
    )
    .unwrap();
    // branch values are ħk₀ of each packet
    assert_eq!(branches.branches[0].value, 5.0);
    assert_eq!(branches.branches[1].value, -5.0);
    let n = 10_000;
    let r = born_rule_test(&branches, n, 4).unwrap();
    let weights = [0.3, 0.7];
    let mut worst_z = 0.0f64;
    for (b, w) in r.branches.iter().zip(weights) {
        let se = (w * (1.0 - w) / n as f64).sqrt();
        let z = (b.frequency - w) / se;
        assert!((z.abs() - b.z_score.abs()).abs() < 1e-9);
        worst_z = worst_z.max(z.abs());
    }
    let pass = worst_z <= 3.0 && r.verdict_fraction >= 0.99;
    outcome(
        pass,
        format!(
            "n = {n}, |c_a|² = 0.3, frequencies {:.4}/{:.4}, worst |z| {worst_z:.2} (max 3), \
             verdicts holding {:.2}% (need 99%)",
            r.branches[0].frequency,
            r.branches[1].frequency,
            100.0 * r.verdict_fraction
        ),
    )
}

fn probes() -> Outcome {
    let (_, setup) = bundled_setup("robustness_probe_packet");
    let psi = &setup.psi0;
    let p = Observable::momentum(0);
    let q = [1.5, 0.0];
    // packet e^{−(x−x₀)²/4σ² + ik₀x}: (p̂ψ)/ψ = ħk₀ + iħ(x − x₀)/2σ²
    let (x0, sigma, k0) = (0.5, 1.0, 1.5);
    let alpha = psi.hbar() * k0;
    let beta = psi.hbar() * (q[0] - x0) / (2.0 * sigma * sigma);
    let z = weak_actual_value(&p, psi, &q).unwrap().weak_value();
    assert!((z.re - alpha).abs() < 1e-8 && (z.im - beta).abs() < 1e-8, "{z}");
    assert!(beta != 0.0);

    let plus = robustness_probe(&p, psi, &q, beta, 1000, ProbeConfig::default()).unwrap();
    let minus = robustness_probe(&p, psi, &q, -beta, 1000, ProbeConfig::default()).unwrap();
    // what the sequences actually do: both return to α + iβ, and the γ = −β
    // one carries the −2iβ/n correction
    for s in [&plus, &minus] {
        assert!((s.limit - z).norm() < 1e-6, "limit {}", s.limit);
        assert!((s.first_order - s.phi_ratio * (s.achieved - z)).norm() < 1e-6);
    }
    // the grid bump realises α − iβ to about 1%, hence the loose bound
    assert!((minus.first_order - Complex64::new(0.0, -2.0 * beta)).norm() < 0.02 * 2.0 * beta);

    let plus_ok = (plus.limit.im - beta).abs() <= 1e-6;
    let minus_ok = (minus.limit.im + beta).abs() <= 1e-6;
    outcome(
        plus_ok && minus_ok,
        format!(
            "β = {beta}, n_max = 1000: Im limit {:+.9} for γ = +β (want {beta:+}), {:+.9} for γ = −β \
             (want {:+}); the γ = −β sequence converges to α + iβ with first-order term {:.4}",
            plus.limit.im, minus.limit.im, -beta, minus.first_order
        ),
    )
}

/// Random member of each bundled family on its ensemble grid.
fn random_state(family: usize, grid: &Grid, units: Units, rng: &mut ChaCha8Rng) -> WaveFunction {
    let ctx = StateContext { grid, units };
    let spec = match family {
        0 => {
            let mode = rng.gen_range(-6i32..=6);
            json!({"type": "plane_wave", "k": 2.0 * PI * mode as f64 / grid.length(0)})
        }
        1 => json!({"type": "ho_ground", "omega": rng.gen_range(0.7..1.5), "center": rng.gen_range(-1.0..1.0)}),
        2 => json!({"type": "gaussian_packet", "x0": rng.gen_range(-3.0..3.0),
                    "sigma": rng.gen_range(0.8..2.0), "k0": rng.gen_range(-2.0..2.0)}),
        _ => {
            let (a, b) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
            let t: f64 = rng.gen_range(0.1..1.4);
            json!({"type": "separable_spinor",
                   "state": {"type": "gaussian_packet", "x0": rng.gen_range(-2.0..2.0),
                             "sigma": rng.gen_range(0.8..1.6), "k0": rng.gen_range(-2.0..2.0)},
                   "chi": [[t.cos() * a.cos(), t.cos() * a.sin()], [t.sin() * b.cos(), t.sin() * b.sin()]]})
        }
    };
    analytic_state(&spec, &ctx).unwrap()
}

fn correspondence() -> Outcome {
    const TRIPLES: usize = 10_000;
    let families: Vec<Setup> = ["property1_plane_wave", "property1_ho_ground", "property1_packet", "property1_spinor"]
        .iter()
        .map(|n| bundled_setup(n).1)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for i in 0..TRIPLES {
        let f = i % families.len();
        let setup = &families[f];
        let grid = &setup.grid;
        let psi = random_state(f, grid, setup.units, &mut rng);
        let obs = &setup.observables[rng.gen_range(0..setup.observables.len())];
        // Q drawn from |ψ|² and moved to the nearest node, where |Q⟩ is a grid vector
        let q = sample_equilibrium(&psi, 1, rng.gen())
            .unwrap()
            .remove(0);
        let n = grid.len();
        let node = ((q[0] - grid.axis(0).min) / grid.spacing(0)).round() as usize % n;
        let qn = grid.point(node);

        let a_w = weak_actual_value(obs, &psi, &qn).unwrap().a_w;

        // weak value ⟨φ|Â|ψ⟩/⟨φ|ψ⟩ post-selected on |Q⟩ (times the local spin
        // direction ψ(Q) for spinors)
        let chi = psi.value_at(&qn);
        let comps = psi.components();
        let mut phi = vec![Complex64::new(0.0, 0.0); comps * n];
        for c in 0..comps {
            phi[c * n + node] = if comps == 1 { Complex64::new(1.0, 0.0) } else { chi[c] };
        }
        let phi = WaveFunction::new(grid.clone(), comps, phi, psi.units).unwrap();
        let a_psi = obs.apply_wave(&psi).unwrap();
        let weak = phi.inner_product(&a_psi).unwrap() / phi.inner_product(&psi).unwrap();
        let rel = (weak.re - a_w).abs() / a_w.abs().max(1.0);
        worst = worst.max(rel);
    }
    outcome(
        worst <= 1e-10,
        format!("{TRIPLES} random triples, worst |Re A_w − a_w| / max(|a_w|, 1) = {worst:.1e} (tol 1e-10)"),
    )
}

fn waveguide() -> Outcome {
    let units = Units::default();
    let grid = Grid::line(-20.0, 40.0, 6001, Boundary::Box).unwrap();
    let deltas: Vec<f64> = (1..=20).map(|i| -0.1 * i as f64).collect();
    let mut worst_fit = 0.0f64;
    let mut worst_chain = 0.0f64;
    let mut worst_vb = 0.0f64;
    let mut all = true;
    for &delta in &deltas {
        let s = StepScenario::at_delta(delta, 1.0, 0.05, units, DEFAULT_CRITICAL_REL_TOL).unwrap();
        assert_eq!(s.regime, Regime::Forbidden);
        // κ = √(2m|Δ|)/ħ
        let k = (2.0 * units.mass * delta.abs()).sqrt() / units.hbar;
        assert!((kappa(&s).unwrap() - k).abs() <= 1e-12 * k);
        assert!((v_scale(&s) - units.hbar * k / units.mass).abs() <= 1e-12 * k);

        let psi = stationary_state(&s, &grid, 0.0, 0.0).unwrap();
        let r = identity_check(&s, &psi, 0.0, 0.02).unwrap();
        let fit_dev = (r.v_fit.unwrap() - r.v_scale).abs().max((r.v_im - r.v_scale).abs()) / r.v_scale;
        worst_fit = worst_fit.max(fit_dev);
        worst_chain = worst_chain.max(r.chain_error.unwrap());
        for d in [0.5, 1.0, 2.0, 4.0] {
            worst_vb = worst_vb.max(bohmian_velocity_in_forbidden(&psi, d).unwrap().abs());
        }
        all &= r.pass && fit_dev <= 0.02;
    }
    let sweep = delta_sweep(&SweepOptions {
        energy: 1.0,
        j0: 0.05,
        units,
        deltas: SweepOptions::symmetric(0.5, 21),
        grid,
        position: 0.0,
        width: 0.0,
        window: 5.0,
        fit_tol: 0.02,
        critical_rel_tol: DEFAULT_CRITICAL_REL_TOL,
    })
    .unwrap();
    all &= worst_chain <= 1e-10 && worst_vb <= 1e-8 && sweep.continuity.pass;
    outcome(
        all,
        format!(
            "20 forbidden steps: fit worst rel {worst_fit:.1e} (tol 2e-2), chain {worst_chain:.1e} (tol 1e-10), \
             |v_B| ≤ {worst_vb:.1e} (tol 1e-8); sweep continuity ratio {:.2} (limit {})",
            sweep.continuity.max_ratio, sweep.continuity.factor
        ),
    )
}

fn convergence() -> Outcome {
    let units = Units::default();
    let v: Arc<dyn Potential> = Arc::new(Zero);
    let mut terms = Vec::new();
    let mut cont = Vec::new();
    for level in 0..2u32 {
        let f = 1usize << level;
        let grid = Grid::line(-20.0, 30.0, 512 * f, Boundary::Periodic).unwrap();
        let psi = analytic_state(
            &json!({"type": "gaussian_packet", "x0": 0.0, "sigma": 1.0, "k0": 1.0}),
            &StateContext { grid: &grid, units },
        )
        .unwrap();
        let dt = 0.02 / f as f64;
        let spec = PropagatorSpec {
            method: "split_step".into(),
            dt: Some(dt),
            steps: 50 * f,
            stride: 2,
        };
        let prop = spec.build(&grid, units, v.clone()).unwrap();
        let rec = evolve(&psi, prop.as_ref(), v.clone(), spec.steps, spec.stride).unwrap();
        // trajectory samples on snapshots
        let traj = integrate_trajectory(&rec, &[0.7, 0.0], Some(rec.spacing())).unwrap();
        let mut worst = 0.0f64;
        for obs in [Observable::momentum(0), rec.hamiltonian()] {
            for t in evolution_terms_series(&traj, &rec, &obs).unwrap() {
                // compare on the coarse sample times only
                let coarse = (t.t / 0.04).round();
                if (t.t - coarse * 0.04).abs() < 1e-9 {
                    worst = worst.max(t.residual.abs());
                }
            }
        }
        terms.push(worst);
        cont.push(continuity_residual(&rec).unwrap().worst());
    }
    let rt = terms[0] / terms[1];
    let rc = cont[0] / cont[1];
    let ok = |r: f64| (3.2..=4.8).contains(&r);
    outcome(
        ok(rt) && ok(rc),
        format!(
            "halving dx and dt: evolution terms {:.2e} -> {:.2e} (ratio {rt:.2}), \
             continuity {:.2e} -> {:.2e} (ratio {rc:.2}); want ratios in [3.2, 4.8]",
            terms[0], terms[1], cont[0], cont[1]
        ),
    )
}

fn determinism() -> Outcome {
    let pools: Vec<rayon::ThreadPool> = [1, 2, 8]
        .iter()
        .map(|&n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap())
        .collect();
    let mut differing = Vec::new();
    for b in bundled() {
        let sc = Scenario::from_json(b.text).unwrap();
        let outputs: Vec<(String, Vec<_>)> = pools
            .iter()
            .map(|pool| {
                pool.install(|| {
                    let r = run(&sc, b.text, &RunOptions::default()).unwrap();
                    (r.report_json().unwrap(), r.artifacts)
                })
            })
            .collect();
        if outputs.iter().any(|o| *o != outputs[0]) {
            differing.push(b.name);
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{} bundled scenarios at 1, 2 and 8 threads, {} with differing reports {:?}",
            bundled().len(),
            differing.len(),
            differing
        ),
    )
}

fn main() {
    type Criterion = (u32, &'static str, f64, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        (1, "verification suite", 10.0, verify_suite),
        (2, "ensemble average identity", 120.0, property1),
        (3, "equivariance", 120.0, equivariance),
        (4, "Born rule from branches", 120.0, born_rule),
        (5, "robustness probe limits", 5.0, probes),
        (6, "weak value correspondence", 30.0, correspondence),
        (7, "waveguide identities", 60.0, waveguide),
        (8, "second-order convergence", 120.0, convergence),
        (9, "thread-count determinism", f64::INFINITY, determinism),
    ];
    // Criterion 5 asks the γ = −β sequence to converge to α − iβ; it does
    // not (see the assertions in `probes`), so it reports FAIL.
    let expected_fail = [5];

    let mut unexpected = Vec::new();
    for (n, title, limit, f) in criteria {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        let pass = o.pass && secs < limit;
        let budget = if limit.is_finite() {
            format!("{secs:.1}s of {limit:.0}s")
        } else {
            format!("{secs:.1}s")
        };
        println!(
            "criterion {n} {title}: {} {} [{budget}]",
            if pass { "PASS" } else { "FAIL" },
            o.summary
        );
        if pass == expected_fail.contains(&n) {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected verdicts for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
