//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs the full fig1 and fig5 configurations (a few minutes).
//! Failures are reported, not hidden; set `ZENO_ACCEPTANCE_STRICT=1` to turn
//! any FAIL into a nonzero exit status.

use std::time::Instant;

use zeno_core::config::RunConfig;
use zeno_core::experiment::{
    prepare_initial, run_nonselective, run_selective, MeasurementSchedule, RunOptions, ScheduleFamily,
};
use zeno_core::grid::WaveFunction;
use zeno_core::potential::{Hamiltonian, SimulationParams};
use zeno_core::propagator::{Propagator, StepControl};
use zeno_core::validation::{propagator_checks, wigner_checks, Check};
use zeno_core::wigner::{wigner_of_ensemble, wigner_transform_window, WignerWindow};

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn line(&mut self, name: &str, passed: bool, detail: String) {
        let status = if passed { "PASS" } else { "FAIL" };
        let text = format!("{status} {name}: {detail}");
        println!("{text}");
        self.lines.push((passed, text));
    }
}

fn selective(params: &SimulationParams, schedule: &MeasurementSchedule, ctrl: StepControl) -> zeno_core::experiment::SelectiveResult {
    run_selective(params, schedule, ctrl, &RunOptions::default()).expect("selective run")
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn main() {
    let started = Instant::now();
    let mut r = Report { lines: Vec::new() };

    let fig1 = RunConfig::fig1();
    let p1 = fig1.params();
    let c1 = fig1.step_control();
    let fig5 = RunConfig::fig5();
    let p5 = fig5.params();
    let c5 = fig5.step_control();
    let family5 = fig5.schedule;

    // baseline
    let one = selective(&p1, &MeasurementSchedule::equispaced(1, p1.tau_max).unwrap(), c1);
    r.line(
        "baseline tunneling probability (fig1, N=1, 0.162 +- 0.005)",
        (one.p_n - 0.162).abs() <= 0.005,
        format!("P = {:.5}", one.p_n),
    );

    // selective curve and shape
    let targets = [(16usize, 0.31), (64, 0.69), (256, 0.90), (1024, 0.97)];
    let mut curve = Vec::new();
    for &(n, _) in &targets {
        curve.push(selective(&p1, &MeasurementSchedule::equispaced(n, p1.tau_max).unwrap(), c1));
    }
    let misses: Vec<String> = targets
        .iter()
        .zip(&curve)
        .filter(|((_, t), res)| (res.p_n - t).abs() > 0.02)
        .map(|((n, t), res)| format!("N={n}: {:.4} vs {t}", res.p_n))
        .collect();
    let values: Vec<String> = targets
        .iter()
        .zip(&curve)
        .map(|((n, t), res)| format!("N={n} {:.4} (target {t})", res.p_n))
        .collect();
    r.line(
        "selective Zeno curve (fig1, +- 0.02)",
        misses.is_empty(),
        format!("{}{}", values.join(", "), if misses.is_empty() { String::new() } else { format!("; outside tolerance: {}", misses.join(", ")) }),
    );
    let ps: Vec<f64> = curve.iter().map(|c| c.p_n).collect();
    let monotone = ps.windows(2).all(|w| w[1] >= w[0]);
    r.line(
        "curve shape (fig1, non-decreasing over N=16..1024, P(1024) > 0.95)",
        monotone && ps[3] > 0.95,
        format!("{ps:.4?}"),
    );

    // nonselective fig5
    let t = Instant::now();
    let s16 = family5.schedule(16, p5.tau_max).unwrap();
    let ns16 = run_nonselective(&p5, &s16, c5, 0.0, &RunOptions::default()).expect("nonselective run");
    r.line(
        "nonselective result (fig5, N=16, prune 0, 0.579 +- 0.01)",
        (ns16.p_n - 0.579).abs() <= 0.01,
        format!("P_ns = {:.5} ({} branches, {:.0?})", ns16.p_n, ns16.branches.len(), t.elapsed()),
    );

    // dominance
    let mut dominance = Vec::new();
    let mut dominated = true;
    let mut s_by_n = Vec::new();
    for n in [2usize, 4, 8, 16] {
        let s = family5.schedule(n, p5.tau_max).unwrap();
        let sel = selective(&p5, &s, c5);
        let p_ns = if n == 16 {
            ns16.p_n
        } else {
            run_nonselective(&p5, &s, c5, 0.0, &RunOptions::default()).unwrap().p_n
        };
        dominated &= p_ns >= sel.p_n - 1e-10;
        dominance.push(format!("N={n} P_ns {p_ns:.4} >= P_s {:.4}", sel.p_n));
        s_by_n.push((n, sel));
    }
    r.line("dominance P_ns >= P_s (fig5, N=2,4,8,16)", dominated, dominance.join(", "));

    // all-plus identity, plus ensemble Wigner marginal on the same run
    let s8 = family5.schedule(8, p5.tau_max).unwrap();
    let keep = RunOptions {
        keep_final_states: true,
        ..RunOptions::default()
    };
    let ns8 = run_nonselective(&p5, &s8, c5, 0.0, &keep).unwrap();
    let sel8 = &s_by_n.iter().find(|(n, _)| *n == 8).unwrap().1;
    let identity = sel8.final_state.distance(ns8.all_plus_state.as_ref().unwrap()).unwrap();
    r.line(
        "all-plus identity (fig5, N=8, L2 <= 1e-12)",
        identity <= 1e-12,
        format!("L2 = {identity:.3e}"),
    );

    // coincidence
    let sel1024 = &curve[3];
    let gap_s = (sel1024.transmitted_probability - sel1024.p_n).abs();
    let gap_ns = (ns16.transmitted_probability - ns16.p_n).abs();
    r.line(
        "transmission-direction coincidence (<= 1e-3; fig1 N=1024 selective, fig5 N=16 nonselective)",
        gap_s <= 1e-3 && gap_ns <= 1e-3,
        format!(
            "selective |{:.5} - {:.5}| = {gap_s:.2e}, nonselective |{:.5} - {:.5}| = {gap_ns:.2e}",
            sel1024.transmitted_probability, sel1024.p_n, ns16.transmitted_probability, ns16.p_n
        ),
    );

    // propagator oracle
    let prop = propagator_checks().unwrap();
    let find = |checks: &[Check], name: &str| checks.iter().find(|c| c.name == name).cloned().unwrap();
    let oracle = find(&prop, "oracle_l2_error");
    let ratio = find(&prop, "halving_error_ratio");
    r.line(
        "propagator oracle (256 points, dt 0.05, L2 <= 1e-6, halving ratio in [3.5, 4.5])",
        oracle.passed && ratio.passed,
        format!("L2 = {:.3e}, ratio = {:.3}", oracle.value, ratio.value),
    );

    // conservation
    let drift = find(&prop, "norm_drift_per_unit_tau");
    let parseval = find(&prop, "parseval_relative");
    let generations = ns16
        .generation_totals
        .iter()
        .chain(&ns8.generation_totals)
        .fold(0.0f64, |m, t| m.max((t - 1.0).abs()));
    let wig = wigner_checks().unwrap();
    let ens = ns8.final_ensemble.as_ref().unwrap();
    let ens_map = wigner_of_ensemble(ens).unwrap();
    let ens_marginal = max_rel_diff(&ens_map.position_marginal(), &ens.position_density());
    let ens_norm = (ens_map.total() - ens.retained_probability()).abs();
    let wig_ok = ["position_marginal_relative", "momentum_marginal_relative", "normalization"]
        .iter()
        .all(|n| find(&wig, n).passed);
    let wig_worst = ["position_marginal_relative", "momentum_marginal_relative", "normalization"]
        .iter()
        .fold(0.0f64, |m, n| m.max(find(&wig, n).value));
    r.line(
        "conservation suite (drift 1e-12/tau, completeness 1e-10, Parseval 1e-12, Wigner 1e-8)",
        drift.passed && parseval.passed && generations <= 1e-10 && wig_ok && ens_marginal <= 1e-8 && ens_norm <= 1e-8,
        format!(
            "drift {:.2e}, completeness {generations:.2e}, Parseval {:.2e}, Wigner {wig_worst:.2e}, fig5 ensemble marginal {ens_marginal:.2e}, normalization {ens_norm:.2e}",
            drift.value, parseval.value
        ),
    );

    // free particle
    let mut free = p1;
    free.barrier.v0 = 0.0;
    let base = selective(&free, &MeasurementSchedule::equispaced(1, free.tau_max).unwrap(), c1).p_n;
    let mut worst: f64 = 0.0;
    for family in [ScheduleFamily::Equispaced, ScheduleFamily::Concentrated { tau1: 1.0, tau2: 5.0 }] {
        for n in [2usize, 16, 128] {
            let s = family.schedule(n, free.tau_max).unwrap();
            worst = worst.max((selective(&free, &s, c1).p_n - base).abs());
        }
    }
    let grid = free.grid.build().unwrap();
    let psi0 = prepare_initial(&free, &grid).unwrap();
    let mut prop = Propagator::new(Hamiltonian::from_params(&free).unwrap(), c1).unwrap();
    let psi1: WaveFunction = prop.evolve(psi0.clone(), free.tau_max).unwrap();
    let mom = max_rel_diff(&psi1.momentum_density(), &psi0.momentum_density());
    r.line(
        "free-particle QND (v0=0, |P_N - P_1| <= 1e-6, momentum density 1e-10)",
        worst <= 1e-6 && mom <= 1e-10,
        format!("max |P_N - P_1| = {worst:.2e}, momentum density change {mom:.2e}"),
    );

    // Wigner negativity at a tunneling time
    let snap = RunOptions {
        snapshots: vec![2.36],
        keep_snapshot_states: true,
        ..RunOptions::default()
    };
    let dense = run_selective(&p1, &MeasurementSchedule::equispaced(2048, p1.tau_max).unwrap(), c1, &snap).unwrap();
    let state = dense.snapshots[0].state.as_ref().unwrap();
    let window = WignerWindow {
        xi_min: -10.0,
        xi_max: 10.0,
        kappa_min: -12.0,
        kappa_max: 12.0,
    };
    let w = wigner_transform_window(state, &window).unwrap();
    r.line(
        "Wigner negativity (fig1, N=2048, tau=2.36, min < -0.05 max)",
        w.min() < -0.05 * w.max(),
        format!("min {:.4}, max {:.4}, ratio {:.3}", w.min(), w.max(), -w.min() / w.max()),
    );

    let failed = r.lines.iter().filter(|(p, _)| !p).count();
    println!(
        "acceptance: {} passed, {failed} failed ({:.0?})",
        r.lines.len() - failed,
        started.elapsed()
    );
    if failed > 0 && std::env::var("ZENO_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
