//! Self-checks of the numerical machinery, runnable from the command line.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{run_nonselective, run_selective, MeasurementSchedule, RunOptions};
use crate::grid::{Grid, Representation, WaveFunction};
use crate::measurement::{measure_nonselective, project_positive, split_by_sign, BranchEnsemble};
use crate::potential::{BarrierSpec, GridSpec, Hamiltonian, SimulationParams};
use crate::propagator::{evolve_oracle, Propagator, StepControl};
use crate::wigner::{wigner_of_ensemble, wigner_transform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Propagator,
    Measurement,
    Wigner,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "propagator" => Ok(Suite::Propagator),
            "measurement" => Ok(Suite::Measurement),
            "wigner" => Ok(Suite::Wigner),
            "all" => Ok(Suite::All),
            _ => Err(Error::InvalidParameter(format!(
                "unknown suite {s:?}, expected propagator, measurement, wigner or all"
            ))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Suite::Propagator => "propagator",
            Suite::Measurement => "measurement",
            Suite::Wigner => "wigner",
            Suite::All => "all",
        };
        f.write_str(s)
    }
}

/// One measured quantity against its acceptance interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub value: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub passed: bool,
}

impl Check {
    pub fn at_most(suite: Suite, name: &str, value: f64, max: f64) -> Self {
        Self::within(suite, name, value, None, Some(max))
    }

    pub fn within(suite: Suite, name: &str, value: f64, min: Option<f64>, max: Option<f64>) -> Self {
        let passed = value.is_finite() && min.is_none_or(|m| value >= m) && max.is_none_or(|m| value <= m);
        Self {
            suite,
            name: name.to_string(),
            value,
            min,
            max,
            passed,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bound = match (self.min, self.max) {
            (Some(lo), Some(hi)) => format!("in [{lo}, {hi}]"),
            (None, Some(hi)) => format!("<= {hi:e}"),
            (Some(lo), None) => format!(">= {lo:e}"),
            (None, None) => String::new(),
        };
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}/{}: {:.3e} {bound}", self.suite, self.name, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

pub fn validate(suite: Suite) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Propagator | Suite::All) {
        checks.extend(propagator_checks()?);
    }
    if matches!(suite, Suite::Measurement | Suite::All) {
        checks.extend(measurement_checks()?);
    }
    if matches!(suite, Suite::Wigner | Suite::All) {
        checks.extend(wigner_checks()?);
    }
    Ok(ValidationReport {
        suite,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

const BARRIER: BarrierSpec = BarrierSpec {
    v0: 1.5,
    xi_b: 1.0,
    alpha: 6.0,
};

fn packet(grid: &Grid, xi0: f64, kappa0: f64) -> WaveFunction {
    let amp = (2.0 / PI).powf(0.25);
    WaveFunction::from_position_fn(grid, |x| Complex64::from_polar(amp * (-(x - xi0).powi(2)).exp(), kappa0 * x))
}

fn random_state(grid: &Grid, seed: u64) -> WaveFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = (0..grid.n_points())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mut psi = WaveFunction::new(grid, amps, Representation::Position).expect("length matches");
    let n = psi.norm_sq();
    psi.scale(1.0 / n.sqrt());
    psi
}

/// Split-step error against the dense oracle for a random state, the
/// substep-halving ratio on a smooth packet under the barrier, norm drift
/// and Parseval.
pub fn propagator_checks() -> Result<Vec<Check>> {
    let s = Suite::Propagator;
    let grid = Grid::new(20.0, 256)?;
    let ham = Hamiltonian::new(&grid, 4.0, &BARRIER)?;
    let dt = 0.05;

    let psi = random_state(&grid, 7);
    let reference = evolve_oracle(&ham, &psi, dt)?;
    let mut fine = Propagator::new(ham.clone(), StepControl::Substeps(4000))?;
    let oracle_err = fine.evolve(psi.clone(), dt)?.distance(&reference)?;

    let smooth = packet(&grid, -1.2, 4.0);
    let reference = evolve_oracle(&ham, &smooth, dt)?;
    let mut errs = Vec::new();
    for n in [4, 8] {
        let mut p = Propagator::new(ham.clone(), StepControl::Substeps(n))?;
        errs.push(p.evolve(smooth.clone(), dt)?.distance(&reference)?);
    }
    let ratio = errs[0] / errs[1];

    let params = SimulationParams {
        kappa0: 4.0,
        barrier: BARRIER,
        xi0: -4.0,
        tau_max: 1.0,
        grid: GridSpec::default(),
    };
    let ham = Hamiltonian::from_params(&params)?;
    let big = ham.grid().clone();
    let mut p = Propagator::new(ham, StepControl::default())?;
    let start = packet(&big, -1.5, 4.0);
    let n0 = start.norm_sq();
    let drift = (p.evolve(start, 1.0)?.norm_sq() - n0).abs() / n0;

    let r = random_state(&big, 11);
    let parseval = (r.to_momentum()?.norm_sq() - r.norm_sq()).abs() / r.norm_sq();
    let round_trip = r.to_momentum()?.into_position().distance(&r)?;

    Ok(vec![
        Check::at_most(s, "oracle_l2_error", oracle_err, 1e-6),
        Check::within(s, "halving_error_ratio", ratio, Some(3.5), Some(4.5)),
        Check::at_most(s, "norm_drift_per_unit_tau", drift, 1e-12),
        Check::at_most(s, "parseval_relative", parseval, 1e-12),
        Check::at_most(s, "round_trip_l2", round_trip, 1e-12),
    ])
}

/// Channel completeness, projection/split identity, per-generation
/// completeness and the selective/all-plus identity on a small setup.
pub fn measurement_checks() -> Result<Vec<Check>> {
    let s = Suite::Measurement;
    let grid = Grid::new(20.0, 512)?;
    let psi = random_state(&grid, 3);
    let (plus, minus) = split_by_sign(&psi);
    let completeness = (plus.norm_sq() + minus.norm_sq() - psi.norm_sq()).abs();
    let overlap = plus.inner(&minus)?.norm();
    let identical = project_positive(&psi).amplitudes() == plus.amplitudes();

    let params = SimulationParams {
        kappa0: 4.0,
        barrier: BARRIER,
        xi0: -3.0,
        tau_max: 2.5,
        grid: GridSpec {
            half_width: 20.0,
            n_points: 512,
        },
    };
    let schedule = MeasurementSchedule::equispaced(8, params.tau_max)?;
    let ctrl = StepControl::MaxSubstep(2e-3);
    let opts = RunOptions {
        keep_final_states: true,
        ..RunOptions::default()
    };
    let sel = run_selective(&params, &schedule, ctrl, &RunOptions::default())?;
    let ns = run_nonselective(&params, &schedule, ctrl, 0.0, &opts)?;
    let all_plus = ns
        .all_plus_state
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("all-plus branch was pruned".into()))?;
    let identity = sel.final_state.distance(all_plus)?;
    let generations = ns
        .generation_totals
        .iter()
        .fold(0.0f64, |m, t| m.max((t - 1.0).abs()));
    let branch_count = ns.branches.len() as f64;
    let dominance = ns.p_n - sel.p_n;

    let mut ens = BranchEnsemble::pure(packet(&grid, 0.0, 0.5));
    let mut step = 0.0f64;
    for _ in 0..4 {
        ens = measure_nonselective(ens, 0.0);
        step = step.max((ens.total_probability() - 1.0).abs());
    }

    Ok(vec![
        Check::at_most(s, "channel_completeness", completeness, 1e-14),
        Check::at_most(s, "split_overlap", overlap, 1e-14),
        Check::within(s, "projection_equals_plus_part", f64::from(u8::from(identical)), Some(1.0), None),
        Check::at_most(s, "ensemble_completeness", step, 1e-10),
        Check::at_most(s, "generation_completeness_max", generations, 1e-10),
        Check::within(s, "branch_count_2^8", branch_count, Some(256.0), Some(256.0)),
        Check::at_most(s, "selective_vs_all_plus_l2", identity, 1e-12),
        Check::within(s, "ns_minus_s", dominance, Some(-1e-10), None),
    ])
}

/// Realness, marginals and normalization of single-state and ensemble maps.
pub fn wigner_checks() -> Result<Vec<Check>> {
    let s = Suite::Wigner;
    let grid = Grid::new(20.0, 256)?;
    let amp = (2.0 / PI).powf(0.25);
    let mut cat = WaveFunction::from_position_fn(&grid, |x| {
        let env = amp * (-(x + 1.0) * (x + 1.0)).exp();
        Complex64::from_polar(env, 3.0 * x) + Complex64::from_polar(0.7 * env, -2.0 * x)
    });
    let n = cat.norm_sq();
    cat.scale(1.0 / n.sqrt());

    let w = wigner_transform(&cat)?;
    let pos_err = rel_err(&w.position_marginal(), &cat.position_density());
    let mom_err = rel_err(&w.momentum_marginal(), &ascending(&grid, &cat.momentum_density()));
    let norm_err = (w.total() - 1.0).abs();
    let negativity = -w.min() / w.max();

    let (plus, minus) = split_by_sign(&cat);
    let ens = BranchEnsemble {
        branches: vec![
            crate::measurement::Branch {
                state: plus.into_position(),
                history: crate::measurement::History::new(),
            },
            crate::measurement::Branch {
                state: minus.into_position(),
                history: crate::measurement::History::new(),
            },
        ],
        generation: 1,
        discarded_probability: 0.0,
    };
    let we = wigner_of_ensemble(&ens)?;
    let ens_err = rel_err(&we.position_marginal(), &ens.position_density());

    Ok(vec![
        Check::at_most(s, "imaginary_residue", w.imag_residue, 1e-10),
        Check::at_most(s, "position_marginal_relative", pos_err, 1e-8),
        Check::at_most(s, "momentum_marginal_relative", mom_err, 1e-8),
        Check::at_most(s, "normalization", norm_err, 1e-8),
        Check::at_most(s, "ensemble_position_marginal_relative", ens_err, 1e-8),
        Check::within(s, "superposition_negativity", negativity, Some(0.05), None),
    ])
}

/// Momentum density reordered to ascending κ.
pub(crate) fn ascending(grid: &Grid, density: &[f64]) -> Vec<f64> {
    let n = grid.n_points();
    (0..n).map(|k| density[(k + n / 2) % n]).collect()
}

/// Max-norm error relative to the max of the reference.
pub(crate) fn rel_err(a: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = a.iter().zip(reference).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    err / scale
}
