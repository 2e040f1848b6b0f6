//! Zeno experiment drivers: initial packet, measurement schedules,
//! selective and nonselective runs, observables and sweeps.
//!
//! Probabilities always come from the unnormalized chain of projected
//! states; snapshot densities of selective runs are normalized for
//! plotting and carry the norm they were divided by.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, WaveFunction};
use crate::measurement::{project_positive, split_by_sign, Branch, BranchEnsemble, History, Sign};
use crate::potential::{Hamiltonian, SimulationParams};
use crate::propagator::{Propagator, StepControl};

/// Largest unpruned nonselective run (2^N branches).
pub const MAX_UNPRUNED_MEASUREMENTS: usize = 24;

/// Largest fraction of the initial density allowed inside `|ξ| ≤ ξ_b`.
pub const PLACEMENT_TOLERANCE: f64 = 1e-3;

/// Largest fraction of the initial density allowed within
/// [`BOUNDARY_MARGIN`] of the grid edge.
pub const BOUNDARY_TOLERANCE: f64 = 1e-6;

pub const BOUNDARY_MARGIN: f64 = 2.0;

/// Density left inside the barrier at `τ_max` above which the
/// transmission/reflection process is reported as not completed.
pub const COMPLETION_TOLERANCE: f64 = 1e-3;

/// Density within [`BOUNDARY_MARGIN`] of the edge at `τ_max` above which
/// wrap-around leakage is reported.
pub const LEAKAGE_TOLERANCE: f64 = 1e-8;

// rayon::join is used down to this depth of the branch tree
const PARALLEL_DEPTH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Equispaced { n: usize },
    Concentrated { n: usize, tau1: f64, tau2: f64 },
    /// User-supplied times.
    Explicit { n: usize },
}

/// Measurement times in `(0, τ_max]`; the last one is always `τ_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSchedule {
    kind: ScheduleKind,
    tau_max: f64,
    times: Vec<f64>,
    intervals: Vec<f64>,
}

impl MeasurementSchedule {
    /// `τ_n = n·τ_max/N`, `n = 1..=N`.
    pub fn equispaced(n: usize, tau_max: f64) -> Result<Self> {
        check_tau_max(tau_max)?;
        if n == 0 {
            return Err(Error::Schedule("at least one measurement is required".into()));
        }
        let dt = tau_max / n as f64;
        let mut times: Vec<f64> = (1..=n).map(|k| k as f64 * dt).collect();
        times[n - 1] = tau_max;
        Ok(Self {
            kind: ScheduleKind::Equispaced { n },
            tau_max,
            times,
            intervals: vec![dt; n],
        })
    }

    /// `N − 1` equispaced times on `[τ1, τ2]` with both endpoints included
    /// (a single one at `τ1` when `N = 2`), plus the last at `τ_max`.
    pub fn concentrated(n: usize, tau1: f64, tau2: f64, tau_max: f64) -> Result<Self> {
        check_tau_max(tau_max)?;
        if n == 0 {
            return Err(Error::Schedule("at least one measurement is required".into()));
        }
        if !(tau1 > 0.0 && tau1 < tau2 && tau2 < tau_max) {
            return Err(Error::Schedule(format!(
                "concentrated schedule requires 0 < tau1 < tau2 < tau_max, got tau1={tau1}, tau2={tau2}, tau_max={tau_max}"
            )));
        }
        let (times, intervals) = match n {
            1 => (vec![tau_max], vec![tau_max]),
            2 => (vec![tau1, tau_max], vec![tau1, tau_max - tau1]),
            _ => {
                let inner = n - 2;
                let step = (tau2 - tau1) / inner as f64;
                let mut times: Vec<f64> = (0..=inner).map(|k| tau1 + k as f64 * step).collect();
                times[inner] = tau2;
                times.push(tau_max);
                let mut intervals = vec![tau1];
                intervals.extend(std::iter::repeat(step).take(inner));
                intervals.push(tau_max - tau2);
                (times, intervals)
            }
        };
        Ok(Self {
            kind: ScheduleKind::Concentrated { n, tau1, tau2 },
            tau_max,
            times,
            intervals,
        })
    }

    /// Arbitrary strictly increasing times in `(0, τ_max]`, the last being `τ_max`.
    pub fn explicit(times: Vec<f64>) -> Result<Self> {
        let tau_max = *times
            .last()
            .ok_or_else(|| Error::Schedule("at least one measurement is required".into()))?;
        check_tau_max(tau_max)?;
        let mut prev = 0.0;
        let mut intervals = Vec::with_capacity(times.len());
        for &t in &times {
            if !(t > prev) {
                return Err(Error::Schedule(format!("times must be strictly increasing and positive, got {t} after {prev}")));
            }
            intervals.push(t - prev);
            prev = t;
        }
        Ok(Self {
            kind: ScheduleKind::Explicit { n: times.len() },
            tau_max,
            times,
            intervals,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Evolution time before each measurement.
    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    /// Time of the `k`-th level start: 0 for `k = 0`, else the `k`-th measurement.
    fn level_start(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.times[k - 1]
        }
    }
}

fn check_tau_max(tau_max: f64) -> Result<()> {
    if !(tau_max.is_finite() && tau_max > 0.0) {
        return Err(Error::Schedule(format!("tau_max must be > 0, got {tau_max}")));
    }
    Ok(())
}

/// Family of schedules indexed by the number of measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleFamily {
    Equispaced,
    Concentrated { tau1: f64, tau2: f64 },
}

impl ScheduleFamily {
    pub fn schedule(&self, n: usize, tau_max: f64) -> Result<MeasurementSchedule> {
        match *self {
            ScheduleFamily::Equispaced => MeasurementSchedule::equispaced(n, tau_max),
            ScheduleFamily::Concentrated { tau1, tau2 } => MeasurementSchedule::concentrated(n, tau1, tau2, tau_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Selective,
    Nonselective,
    /// Unitary evolution without any measurement.
    None,
}

/// Gaussian packet `(2/π)^{1/4} exp(−(ξ−ξ0)²) exp(iκ0ξ)`, renormalized on the grid.
pub fn prepare_initial(params: &SimulationParams, grid: &Grid) -> Result<WaveFunction> {
    let amp = (2.0 / PI).powf(0.25);
    let (xi0, kappa0) = (params.xi0, params.kappa0);
    let mut psi = WaveFunction::from_position_fn(grid, |x| Complex64::from_polar(amp * (-(x - xi0).powi(2)).exp(), kappa0 * x));
    let norm = psi.norm_sq();
    psi.scale(1.0 / norm.sqrt());

    let density = psi.position_density();
    let dxi = grid.dxi();
    if params.barrier.v0 > 0.0 {
        let inside = region_probability(grid, &density, |x| x.abs() <= params.barrier.xi_b);
        if inside > PLACEMENT_TOLERANCE {
            return Err(Error::Placement(format!(
                "initial packet has probability {inside:.3e} inside the barrier |xi| <= {}, limit {PLACEMENT_TOLERANCE:.0e}",
                params.barrier.xi_b
            )));
        }
    }
    let edge = boundary_probability(grid, &density);
    if edge > BOUNDARY_TOLERANCE {
        return Err(Error::Placement(format!(
            "initial packet has probability {edge:.3e} within {BOUNDARY_MARGIN} of the grid boundary, limit {BOUNDARY_TOLERANCE:.0e}"
        )));
    }
    debug_assert!((density.iter().sum::<f64>() * dxi - 1.0).abs() < 1e-10);
    Ok(psi)
}

fn region_probability(grid: &Grid, density: &[f64], inside: impl Fn(f64) -> bool) -> f64 {
    grid.xi()
        .iter()
        .zip(density)
        .filter(|(x, _)| inside(**x))
        .map(|(_, d)| d)
        .sum::<f64>()
        * grid.dxi()
}

fn boundary_probability(grid: &Grid, density: &[f64]) -> f64 {
    let limit = grid.half_width() - BOUNDARY_MARGIN;
    region_probability(grid, density, |x| x.abs() >= limit)
}

/// `∫₀^∞ |ψ|² dξ` as a sum over the `ξ > 0` bins.
pub fn transmitted_probability(psi: &WaveFunction) -> f64 {
    transmitted_from_density(psi.grid(), &psi.position_density())
}

/// Branch-summed `∫₀^∞ ⟨ξ|ρ|ξ⟩ dξ`.
pub fn ensemble_transmitted_probability(ensemble: &BranchEnsemble) -> f64 {
    ensemble.branches.iter().map(|b| transmitted_probability(&b.state)).sum()
}

pub fn transmitted_from_density(grid: &Grid, density: &[f64]) -> f64 {
    region_probability(grid, density, |x| x > 0.0)
}

/// End-of-run checks on a (possibly branch-summed) density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Fraction of the final probability inside `|ξ| < ξ_b`.
    pub completion_residual: f64,
    /// Fraction of the final probability within 2 units of the grid edge.
    pub boundary_leakage: f64,
}

impl Diagnostics {
    fn from_density(params: &SimulationParams, grid: &Grid, density: &[f64]) -> Self {
        let total = (density.iter().sum::<f64>() * grid.dxi()).max(f64::MIN_POSITIVE);
        let xi_b = params.barrier.xi_b;
        let d = Self {
            completion_residual: region_probability(grid, density, |x| x.abs() < xi_b) / total,
            boundary_leakage: boundary_probability(grid, density) / total,
        };
        if d.completion_residual > COMPLETION_TOLERANCE {
            log::warn!(
                "tau_max = {} may be too short: {:.3e} of the probability is still inside the barrier",
                params.tau_max,
                d.completion_residual
            );
        }
        if d.boundary_leakage > LEAKAGE_TOLERANCE {
            log::warn!("{:.3e} of the probability is within {BOUNDARY_MARGIN} of the grid boundary", d.boundary_leakage);
        }
        d
    }
}

/// Density record at one sample time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub tau: f64,
    /// Norm of the underlying (unnormalized or ensemble) state.
    pub norm_sq: f64,
    /// Position density; normalized for selective runs, raw otherwise.
    pub density: Vec<f64>,
    /// Normalized state, when requested and the engine has a single state.
    pub state: Option<WaveFunction>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Sample times, sorted, in `[0, τ_max]`. A sample that coincides with a
    /// measurement is taken after it.
    pub snapshots: Vec<f64>,
    /// Keep normalized snapshot states (selective and unmeasured runs).
    pub keep_snapshot_states: bool,
    /// Keep the final branch states of a nonselective run.
    pub keep_final_states: bool,
}

#[derive(Debug, Clone)]
pub struct SelectiveResult {
    /// `P₁P₂…P_n` after the `n`-th projection.
    pub survival_staircase: Vec<f64>,
    pub p_n: f64,
    /// Unnormalized final state, momentum representation.
    pub final_state: WaveFunction,
    pub transmitted_probability: f64,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchSummary {
    pub history: String,
    pub norm_sq: f64,
    pub transmitted: f64,
}

#[derive(Debug, Clone)]
pub struct NonselectiveResult {
    /// Probability of a positive direction at the last measurement.
    pub p_n: f64,
    /// Leaf branches in depth-first order, `+` before `−`.
    pub branches: Vec<BranchSummary>,
    pub transmitted_probability: f64,
    pub discarded_probability: f64,
    /// Retained plus discarded probability after each measurement.
    pub generation_totals: Vec<f64>,
    /// Branch-summed final position density.
    pub final_density: Vec<f64>,
    /// The branch with only positive outcomes, if it was not pruned.
    pub all_plus_state: Option<WaveFunction>,
    pub final_ensemble: Option<BranchEnsemble>,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct UnmeasuredResult {
    pub final_state: WaveFunction,
    pub transmitted_probability: f64,
    /// Probability of non-negative momentum at `τ_max`.
    pub direction_probability: f64,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Diagnostics,
}

/// Samples grouped by the level of the run in which they are taken.
/// Level `k < N` spans `[t_k, t_{k+1})`; level `N` holds samples at `τ_max`.
fn assign_samples(schedule: &MeasurementSchedule, samples: &[f64]) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = schedule.len();
    let mut levels = vec![Vec::new(); n + 1];
    let mut prev = f64::NEG_INFINITY;
    for (idx, &tau) in samples.iter().enumerate() {
        if !(tau >= 0.0 && tau <= schedule.tau_max()) {
            return Err(Error::Schedule(format!(
                "snapshot time {tau} outside [0, {}]",
                schedule.tau_max()
            )));
        }
        if tau < prev {
            return Err(Error::Schedule("snapshot times must be sorted".into()));
        }
        prev = tau;
        let level = schedule.times().iter().take_while(|&&t| t <= tau).count();
        levels[level].push((idx, tau));
    }
    Ok(levels)
}

/// Evolves a state from the start of level `k` to the `k+1`-th measurement,
/// stopping at the level's samples.
fn advance(
    prop: &mut Propagator,
    mut state: WaveFunction,
    schedule: &MeasurementSchedule,
    k: usize,
    samples: &[(usize, f64)],
    mut record: impl FnMut(usize, f64, &WaveFunction),
) -> Result<WaveFunction> {
    if samples.is_empty() {
        return prop.evolve(state, schedule.intervals()[k]);
    }
    let mut now = schedule.level_start(k);
    for &(idx, tau) in samples {
        state = prop.evolve(state, (tau - now).max(0.0))?;
        record(idx, tau, &state);
        now = tau;
    }
    prop.evolve(state, (schedule.times()[k] - now).max(0.0))
}

fn setup(params: &SimulationParams, ctrl: StepControl) -> Result<(Grid, Propagator, WaveFunction)> {
    params.validate()?;
    ctrl.validate()?;
    let grid = params.grid.build()?;
    let ham = Hamiltonian::new(&grid, params.kappa0, &params.barrier)?;
    let psi0 = prepare_initial(params, &grid)?;
    Ok((grid, Propagator::new(ham, ctrl)?, psi0.into_momentum()))
}

fn check_schedule(params: &SimulationParams, schedule: &MeasurementSchedule) -> Result<()> {
    if schedule.tau_max() != params.tau_max {
        return Err(Error::Schedule(format!(
            "schedule ends at {} but tau_max is {}",
            schedule.tau_max(),
            params.tau_max
        )));
    }
    Ok(())
}

fn normalized_snapshot(tau: f64, state: &WaveFunction, keep: bool) -> Snapshot {
    let norm_sq = state.norm_sq();
    let mut pos = state.clone().into_position();
    if norm_sq > 0.0 {
        pos.scale(1.0 / norm_sq.sqrt());
    }
    Snapshot {
        tau,
        norm_sq,
        density: pos.position_density(),
        state: keep.then_some(pos),
    }
}

fn empty_snapshots(samples: &[f64]) -> Vec<Snapshot> {
    samples
        .iter()
        .map(|&tau| Snapshot {
            tau,
            norm_sq: 0.0,
            density: Vec::new(),
            state: None,
        })
        .collect()
}

/// Selective run: evolve and project onto non-negative momenta at every
/// schedule time, on a single unnormalized state.
pub fn run_selective(
    params: &SimulationParams,
    schedule: &MeasurementSchedule,
    ctrl: StepControl,
    opts: &RunOptions,
) -> Result<SelectiveResult> {
    check_schedule(params, schedule)?;
    let (grid, mut prop, mut state) = setup(params, ctrl)?;
    let levels = assign_samples(schedule, &opts.snapshots)?;
    let mut snapshots = empty_snapshots(&opts.snapshots);
    let keep = opts.keep_snapshot_states;
    let mut staircase = Vec::with_capacity(schedule.len());

    for k in 0..schedule.len() {
        state = advance(&mut prop, state, schedule, k, &levels[k], |idx, tau, s| {
            snapshots[idx] = normalized_snapshot(tau, s, keep);
        })?;
        state = project_positive(&state);
        staircase.push(state.norm_sq());
    }
    for &(idx, tau) in &levels[schedule.len()] {
        snapshots[idx] = normalized_snapshot(tau, &state, keep);
    }

    let density = state.position_density();
    Ok(SelectiveResult {
        p_n: *staircase.last().expect("schedule is non-empty"),
        survival_staircase: staircase,
        transmitted_probability: transmitted_from_density(&grid, &density),
        diagnostics: Diagnostics::from_density(params, &grid, &density),
        final_state: state,
        snapshots,
    })
}

/// Evolution over `[0, τ_max]` without measurements.
pub fn run_unmeasured(params: &SimulationParams, ctrl: StepControl, opts: &RunOptions) -> Result<UnmeasuredResult> {
    let schedule = MeasurementSchedule::equispaced(1, params.tau_max)?;
    let (grid, mut prop, state) = setup(params, ctrl)?;
    let levels = assign_samples(&schedule, &opts.snapshots)?;
    let mut snapshots = empty_snapshots(&opts.snapshots);
    let keep = opts.keep_snapshot_states;
    let state = advance(&mut prop, state, &schedule, 0, &levels[0], |idx, tau, s| {
        snapshots[idx] = normalized_snapshot(tau, s, keep);
    })?;
    for &(idx, tau) in &levels[1] {
        snapshots[idx] = normalized_snapshot(tau, &state, keep);
    }
    let density = state.position_density();
    Ok(UnmeasuredResult {
        transmitted_probability: transmitted_from_density(&grid, &density),
        direction_probability: project_positive(&state).norm_sq(),
        diagnostics: Diagnostics::from_density(params, &grid, &density),
        final_state: state,
        snapshots,
    })
}

struct Leaf {
    bits: u64,
    norm_sq: f64,
    transmitted: f64,
}

struct Tally {
    leaves: Vec<Leaf>,
    retained: Vec<f64>,
    discarded: Vec<f64>,
    final_density: Vec<f64>,
    snapshots: Vec<Vec<f64>>,
    all_plus: Option<WaveFunction>,
    kept: Vec<(u64, WaveFunction)>,
}

impl Tally {
    fn new(levels: usize, n_points: usize, n_samples: usize) -> Self {
        Self {
            leaves: Vec::new(),
            retained: vec![0.0; levels],
            discarded: vec![0.0; levels],
            final_density: vec![0.0; n_points],
            snapshots: vec![vec![0.0; n_points]; n_samples],
            all_plus: None,
            kept: Vec::new(),
        }
    }

    fn add_density(target: &mut [f64], state: &WaveFunction) {
        for (t, d) in target.iter_mut().zip(state.position_density()) {
            *t += d;
        }
    }

    fn merge(&mut self, other: Tally) {
        self.leaves.extend(other.leaves);
        for (a, b) in self.retained.iter_mut().zip(other.retained) {
            *a += b;
        }
        for (a, b) in self.discarded.iter_mut().zip(other.discarded) {
            *a += b;
        }
        for (a, b) in self.final_density.iter_mut().zip(other.final_density) {
            *a += b;
        }
        for (sa, sb) in self.snapshots.iter_mut().zip(other.snapshots) {
            for (a, b) in sa.iter_mut().zip(sb) {
                *a += b;
            }
        }
        if other.all_plus.is_some() {
            self.all_plus = other.all_plus;
        }
        self.kept.extend(other.kept);
    }
}

struct Walker<'a> {
    schedule: &'a MeasurementSchedule,
    levels: Vec<Vec<(usize, f64)>>,
    prune_eps: f64,
    keep_states: bool,
    grid: Grid,
    n_samples: usize,
}

impl Walker<'_> {
    fn new_tally(&self) -> Tally {
        Tally::new(self.schedule.len(), self.grid.n_points(), self.n_samples)
    }

    /// Processes the subtree rooted at a state just after measurement `k`.
    fn descend(&self, prop: &mut Propagator, state: WaveFunction, k: usize, bits: u64, tally: &mut Tally) -> Result<()> {
        let n = self.schedule.len();
        if k == n {
            let pos = state.clone().into_position();
            let density = pos.position_density();
            for &(idx, _) in &self.levels[n] {
                for (t, d) in tally.snapshots[idx].iter_mut().zip(&density) {
                    *t += d;
                }
            }
            for (t, d) in tally.final_density.iter_mut().zip(&density) {
                *t += d;
            }
            tally.leaves.push(Leaf {
                bits,
                norm_sq: state.norm_sq(),
                transmitted: transmitted_from_density(&self.grid, &density),
            });
            if bits == 0 {
                tally.all_plus = Some(state.clone());
            }
            if self.keep_states {
                tally.kept.push((bits, state));
            }
            return Ok(());
        }

        let snaps = &mut tally.snapshots;
        let state = advance(prop, state, self.schedule, k, &self.levels[k], |idx, _, s| {
            Tally::add_density(&mut snaps[idx], s);
        })?;
        let (plus, minus) = split_by_sign(&state);
        drop(state);

        let mut children = Vec::with_capacity(2);
        for (child, sign) in [(plus, 0u64), (minus, 1u64)] {
            let p = child.norm_sq();
            if p < self.prune_eps {
                tally.discarded[k] += p;
            } else {
                tally.retained[k] += p;
                children.push((child, bits | sign << k));
            }
        }

        if k < PARALLEL_DEPTH && children.len() == 2 {
            let mut it = children.into_iter();
            let (lc, lb) = it.next().expect("two children");
            let (rc, rb) = it.next().expect("two children");
            let mut rprop = prop.clone();
            let (left, right) = rayon::join(
                || {
                    let mut t = self.new_tally();
                    self.descend(prop, lc, k + 1, lb, &mut t).map(|_| t)
                },
                || {
                    let mut t = self.new_tally();
                    self.descend(&mut rprop, rc, k + 1, rb, &mut t).map(|_| t)
                },
            );
            tally.merge(left?);
            tally.merge(right?);
        } else {
            for (child, b) in children {
                self.descend(prop, child, k + 1, b, tally)?;
            }
        }
        Ok(())
    }
}

/// Nonselective run. The branch tree is walked depth first, so memory stays
/// proportional to the number of measurements; sibling subtrees near the
/// root are processed in parallel and merged in a fixed order, making the
/// result independent of the thread count.
pub fn run_nonselective(
    params: &SimulationParams,
    schedule: &MeasurementSchedule,
    ctrl: StepControl,
    prune_eps: f64,
    opts: &RunOptions,
) -> Result<NonselectiveResult> {
    check_schedule(params, schedule)?;
    let n = schedule.len();
    if !(prune_eps.is_finite() && prune_eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("prune threshold must be >= 0, got {prune_eps}")));
    }
    if prune_eps == 0.0 && n > MAX_UNPRUNED_MEASUREMENTS {
        return Err(Error::BranchGuard {
            n,
            max: MAX_UNPRUNED_MEASUREMENTS,
        });
    }
    if n > 64 {
        return Err(Error::BranchGuard { n, max: 64 });
    }
    let (grid, mut prop, state) = setup(params, ctrl)?;
    let walker = Walker {
        schedule,
        levels: assign_samples(schedule, &opts.snapshots)?,
        prune_eps,
        keep_states: opts.keep_final_states,
        grid: grid.clone(),
        n_samples: opts.snapshots.len(),
    };
    let mut tally = walker.new_tally();
    walker.descend(&mut prop, state, 0, 0, &mut tally)?;

    let mut generation_totals = Vec::with_capacity(n);
    let mut discarded = 0.0;
    for k in 0..n {
        discarded += tally.discarded[k];
        generation_totals.push(tally.retained[k] + discarded);
    }

    let mut p_n = 0.0;
    let mut transmitted = 0.0;
    let mut branches = Vec::with_capacity(tally.leaves.len());
    for leaf in &tally.leaves {
        let history = History::from_bits(leaf.bits, n);
        if history.last() == Some(Sign::Plus) {
            p_n += leaf.norm_sq;
        }
        transmitted += leaf.transmitted;
        branches.push(BranchSummary {
            history: history.to_string(),
            norm_sq: leaf.norm_sq,
            transmitted: leaf.transmitted,
        });
    }

    let final_ensemble = opts.keep_final_states.then(|| BranchEnsemble {
        branches: tally
            .kept
            .drain(..)
            .map(|(bits, state)| Branch {
                state,
                history: History::from_bits(bits, n),
            })
            .collect(),
        generation: n,
        discarded_probability: discarded,
    });

    let snapshots = opts
        .snapshots
        .iter()
        .zip(tally.snapshots)
        .map(|(&tau, density)| Snapshot {
            tau,
            norm_sq: density.iter().sum::<f64>() * grid.dxi(),
            density,
            state: None,
        })
        .collect();

    Ok(NonselectiveResult {
        p_n,
        branches,
        transmitted_probability: transmitted,
        discarded_probability: discarded,
        generation_totals,
        diagnostics: Diagnostics::from_density(params, &grid, &tally.final_density),
        final_density: tally.final_density,
        all_plus_state: tally.all_plus,
        final_ensemble,
        snapshots,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub p_s: Option<f64>,
    pub p_ns: Option<f64>,
}

/// Final direction probability for each number of measurements.
pub fn sweep_n(
    params: &SimulationParams,
    family: ScheduleFamily,
    ns: &[usize],
    engines: &[Engine],
    ctrl: StepControl,
    prune_eps: f64,
) -> Result<Vec<SweepRow>> {
    let opts = RunOptions::default();
    ns.iter()
        .map(|&n| {
            let schedule = family.schedule(n, params.tau_max)?;
            let mut row = SweepRow { n, p_s: None, p_ns: None };
            if engines.contains(&Engine::Selective) {
                row.p_s = Some(run_selective(params, &schedule, ctrl, &opts)?.p_n);
            }
            if engines.contains(&Engine::Nonselective) {
                row.p_ns = Some(run_nonselective(params, &schedule, ctrl, prune_eps, &opts)?.p_n);
            }
            Ok(row)
        })
        .collect()
}

/// Density rows over sample times.
#[derive(Debug, Clone)]
pub struct SpacetimeDensity {
    pub taus: Vec<f64>,
    pub xi: Vec<f64>,
    /// One row per sample time.
    pub rows: Vec<Vec<f64>>,
    /// Whether rows were normalized (selective and unmeasured runs).
    pub normalized: bool,
}

/// Density snapshots along a run: normalized state for selective and
/// unmeasured runs, branch-summed `⟨ξ|ρ|ξ⟩` for nonselective runs.
pub fn record_spacetime_density(
    params: &SimulationParams,
    schedule: &MeasurementSchedule,
    ctrl: StepControl,
    samples: &[f64],
    engine: Engine,
    prune_eps: f64,
) -> Result<SpacetimeDensity> {
    let opts = RunOptions {
        snapshots: samples.to_vec(),
        ..RunOptions::default()
    };
    let snapshots = match engine {
        Engine::Selective => run_selective(params, schedule, ctrl, &opts)?.snapshots,
        Engine::Nonselective => run_nonselective(params, schedule, ctrl, prune_eps, &opts)?.snapshots,
        Engine::None => run_unmeasured(params, ctrl, &opts)?.snapshots,
    };
    Ok(SpacetimeDensity {
        taus: samples.to_vec(),
        xi: params.grid.build()?.xi().to_vec(),
        rows: snapshots.into_iter().map(|s| s.density).collect(),
        normalized: engine != Engine::Nonselective,
    })
}
