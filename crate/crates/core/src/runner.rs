//! Executes a [`RunConfig`] and writes its output files.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{Artifact, RunConfig};
use crate::error::{Error, Result};
use crate::experiment::{
    run_nonselective, run_selective, run_unmeasured, sweep_n, Diagnostics, Engine, RunOptions, Snapshot,
    SpacetimeDensity, SweepRow, COMPLETION_TOLERANCE, LEAKAGE_TOLERANCE,
};
use crate::grid::WaveFunction;
use crate::measurement::BranchEnsemble;
use crate::output::{self, fmt_f64, meta, Meta};
use crate::potential::{barrier_profile, turning_points};
use crate::wigner::{wigner_of_ensemble_window, wigner_transform_window, WignerMap, WignerWindow};

/// Largest nonselective run whose final branches are kept for a Wigner map.
pub const MAX_WIGNER_BRANCH_MEASUREMENTS: usize = 12;

/// `|P_x>0 − P_direction|` expected once scattering has completed.
pub const COINCIDENCE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    #[serde(rename = "P_N_s", skip_serializing_if = "Option::is_none", default)]
    pub p_n_s: Option<f64>,
    #[serde(rename = "P_N_ns", skip_serializing_if = "Option::is_none", default)]
    pub p_n_ns: Option<f64>,
    /// Positive-momentum probability of the unmeasured state.
    #[serde(rename = "P_direction", skip_serializing_if = "Option::is_none", default)]
    pub p_direction: Option<f64>,
    #[serde(rename = "P_x_gt_0")]
    pub p_x_gt_0: f64,
    pub discarded_probability: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_branches: Option<usize>,
}

impl Results {
    /// The engine's direction probability.
    pub fn direction(&self) -> Option<f64> {
        self.p_n_s.or(self.p_n_ns).or(self.p_direction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub within: bool,
}

impl Tolerance {
    fn new(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            limit,
            within: value <= limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub program: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub schedule_times: Vec<f64>,
    pub dxi: f64,
    pub dkappa: f64,
    /// Carrier kinetic energy `κ0`.
    pub energy: f64,
    /// Peak potential `κ0 v0`.
    pub barrier_height: f64,
    pub turning_points: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub results: Option<Results>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sweep: Option<Vec<SweepRow>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wigner: Option<WignerSummary>,
    pub tolerances: Vec<Tolerance>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerSummary {
    pub tau: f64,
    pub max: f64,
    pub min: f64,
    /// `ΣΣ W dξ dκ` over the written window.
    pub total: f64,
}

impl Manifest {
    fn new(cfg: &RunConfig, command: &str) -> Result<Self> {
        let params = cfg.params();
        let grid = params.grid.build()?;
        let schedule = cfg.measurement_schedule()?;
        Ok(Self {
            program: "zeno".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: cfg.clone(),
            schedule_times: schedule.times().to_vec(),
            dxi: grid.dxi(),
            dkappa: grid.dkappa(),
            energy: params.kappa0,
            barrier_height: params.kappa0 * params.barrier.v0,
            turning_points: turning_points(&params).ok().map(|(a, b)| [a, b]),
            results: None,
            sweep: None,
            wigner: None,
            tolerances: Vec::new(),
            files: Vec::new(),
        })
    }

    fn diagnostics(&mut self, d: &Diagnostics) {
        self.tolerances.push(Tolerance::new("completion_residual", d.completion_residual, COMPLETION_TOLERANCE));
        self.tolerances.push(Tolerance::new("boundary_leakage", d.boundary_leakage, LEAKAGE_TOLERANCE));
    }
}

struct Sink<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Sink<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

/// Runs the configured engine and writes the manifest plus the requested
/// artifacts into `cfg.out_dir`.
pub fn execute(cfg: &RunConfig, command: &str) -> Result<Manifest> {
    cfg.validate()?;
    if cfg.wants(Artifact::Wigner) && cfg.engine == Engine::Nonselective && cfg.n_measurements > MAX_WIGNER_BRANCH_MEASUREMENTS
    {
        return Err(Error::Config(format!(
            "a nonselective Wigner map keeps every branch; use at most {MAX_WIGNER_BRANCH_MEASUREMENTS} measurements"
        )));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut sink = Sink {
        dir: &cfg.out_dir,
        files: Vec::new(),
    };
    let mut manifest = Manifest::new(cfg, command)?;
    let params = cfg.params();
    let grid = params.grid.build()?;
    let schedule = cfg.measurement_schedule()?;
    let ctrl = cfg.step_control();
    let base = base_meta(cfg, &manifest);

    let wigner_tau = cfg.wants(Artifact::Wigner).then(|| cfg.wigner_tau.unwrap_or(cfg.tau_max));
    let spacetime_taus: Vec<f64> = if cfg.wants(Artifact::Spacetime) {
        let m = cfg.spacetime_samples - 1;
        (0..=m).map(|k| if k == m { cfg.tau_max } else { k as f64 * cfg.tau_max / m as f64 }).collect()
    } else {
        Vec::new()
    };
    let mut samples: Vec<f64> = cfg.snapshots.iter().chain(&spacetime_taus).copied().collect();
    if let Some(t) = wigner_tau {
        if cfg.engine != Engine::Nonselective {
            samples.push(t);
        }
    }
    samples.sort_by(f64::total_cmp);
    samples.dedup();
    let opts = RunOptions {
        snapshots: samples.clone(),
        keep_snapshot_states: wigner_tau.is_some(),
        keep_final_states: wigner_tau.is_some() && cfg.engine == Engine::Nonselective,
    };
    let sample = |snaps: &[Snapshot], tau: f64| -> usize {
        snaps.iter().position(|s| s.tau == tau).expect("sample was requested")
    };

    info!("running {:?} engine with {} measurements", cfg.engine, schedule.len());
    let (snapshots, final_density, wigner_source) = match cfg.engine {
        Engine::Selective => {
            let r = run_selective(&params, &schedule, ctrl, &opts)?;
            manifest.results = Some(Results {
                p_n_s: Some(r.p_n),
                p_n_ns: None,
                p_direction: None,
                p_x_gt_0: r.transmitted_probability,
                discarded_probability: 0.0,
                n_branches: None,
            });
            manifest.diagnostics(&r.diagnostics);
            if cfg.wants(Artifact::Staircase) {
                let path = sink.path("staircase.csv");
                output::write_staircase(&path, &base, schedule.times(), &r.survival_staircase)?;
            }
            let source = wigner_tau.map(|t| WignerSource::State(r.snapshots[sample(&r.snapshots, t)].state.clone()));
            (r.snapshots, r.final_state.position_density(), source)
        }
        Engine::None => {
            let r = run_unmeasured(&params, ctrl, &opts)?;
            manifest.results = Some(Results {
                p_n_s: None,
                p_n_ns: None,
                p_direction: Some(r.direction_probability),
                p_x_gt_0: r.transmitted_probability,
                discarded_probability: 0.0,
                n_branches: None,
            });
            manifest.diagnostics(&r.diagnostics);
            let source = wigner_tau.map(|t| WignerSource::State(r.snapshots[sample(&r.snapshots, t)].state.clone()));
            (r.snapshots, r.final_state.position_density(), source)
        }
        Engine::Nonselective => {
            let r = run_nonselective(&params, &schedule, ctrl, cfg.prune, &opts)?;
            manifest.results = Some(Results {
                p_n_s: None,
                p_n_ns: Some(r.p_n),
                p_direction: None,
                p_x_gt_0: r.transmitted_probability,
                discarded_probability: r.discarded_probability,
                n_branches: Some(r.branches.len()),
            });
            manifest.diagnostics(&r.diagnostics);
            let completeness = r.generation_totals.iter().fold(0.0f64, |m, t| m.max((t - 1.0).abs()));
            manifest.tolerances.push(Tolerance::new("generation_completeness", completeness, 1e-10));
            if cfg.wants(Artifact::Branches) {
                let mut m = base.clone();
                m.push(("discarded_probability".into(), fmt_f64(r.discarded_probability)));
                let path = sink.path("branches.csv");
                output::write_branches(&path, &m, &r.branches)?;
            }
            (r.snapshots, r.final_density, r.final_ensemble.map(WignerSource::Ensemble))
        }
    };

    if let Some(res) = &manifest.results {
        let dir = res.direction().expect("engine result present");
        let gap = (res.p_x_gt_0 - dir).abs();
        manifest.tolerances.push(Tolerance::new("transmission_direction_gap", gap, COINCIDENCE_TOLERANCE));
    }
    for t in manifest.tolerances.iter().filter(|t| !t.within) {
        warn!("{} = {:.3e} exceeds {:.0e}", t.name, t.value, t.limit);
    }

    if cfg.wants(Artifact::Density) {
        let mut columns = vec![("barrier".to_string(), barrier_profile(&params.barrier, &grid))];
        let mut norms = Vec::new();
        for &tau in &cfg.snapshots {
            let s = &snapshots[sample(&snapshots, tau)];
            columns.push((format!("tau={}", fmt_f64(tau)), raw_density(s, cfg.engine)));
            norms.push(fmt_f64(s.norm_sq));
        }
        columns.push(("final".to_string(), final_density));
        let mut m = base.clone();
        m.extend(meta(&[
            ("normalization", "unnormalized; column sum times dxi is the state norm".into()),
            ("snapshot_norm_sq", norms.join(" ")),
            ("barrier", "shape v(xi) in [0, 1]".into()),
        ]));
        let path = sink.path("density.csv");
        output::write_density(&path, &m, grid.xi(), &columns)?;
    }

    if cfg.wants(Artifact::Spacetime) {
        let st = SpacetimeDensity {
            rows: spacetime_taus
                .iter()
                .map(|&t| snapshots[sample(&snapshots, t)].density.clone())
                .collect(),
            taus: spacetime_taus,
            xi: grid.xi().to_vec(),
            normalized: cfg.engine != Engine::Nonselective,
        };
        let mut m = base.clone();
        m.push(("normalized".into(), st.normalized.to_string()));
        let path = sink.path("spacetime.csv");
        output::write_spacetime(&path, &m, &st)?;
    }

    if let (Some(tau), Some(source)) = (wigner_tau, wigner_source) {
        let window = wigner_window(cfg);
        let map = match source {
            WignerSource::State(Some(state)) => wigner_transform_window(&state, &window)?,
            WignerSource::State(None) => unreachable!("snapshot states are kept when a Wigner map is requested"),
            WignerSource::Ensemble(ens) => wigner_of_ensemble_window(&ens, &window)?,
        };
        report_wigner(&mut manifest, tau, &map);
        let mut m = base.clone();
        m.push(("tau".into(), fmt_f64(tau)));
        m.push(("state".into(), if cfg.engine == Engine::Nonselective { "ensemble" } else { "normalized" }.into()));
        let path = sink.path("wigner.csv");
        output::write_wigner(&path, &m, &map)?;
    }

    if cfg.wants(Artifact::Sweep) {
        let rows = run_sweep(cfg)?;
        let path = sink.path("sweep.csv");
        output::write_sweep(&path, &base, &rows)?;
        manifest.sweep = Some(rows);
    }

    finish(manifest, sink)
}

/// Writes `sweep.csv` and the manifest only.
pub fn execute_sweep(cfg: &RunConfig, command: &str) -> Result<Manifest> {
    let mut cfg = cfg.clone();
    cfg.artifacts = vec![Artifact::Sweep];
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut manifest = Manifest::new(&cfg, command)?;
    let base = base_meta(&cfg, &manifest);
    let mut sink = Sink {
        dir: &cfg.out_dir,
        files: Vec::new(),
    };
    let rows = run_sweep(&cfg)?;
    let path = sink.path("sweep.csv");
    output::write_sweep(&path, &base, &rows)?;
    manifest.sweep = Some(rows);
    finish(manifest, sink)
}

enum WignerSource {
    State(Option<WaveFunction>),
    Ensemble(BranchEnsemble),
}

fn run_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    info!("sweeping N over {:?}", cfg.sweep_n);
    sweep_n(&cfg.params(), cfg.schedule, &cfg.sweep_n, &cfg.sweep_engines, cfg.step_control(), cfg.prune)
}

fn finish(mut manifest: Manifest, sink: Sink<'_>) -> Result<Manifest> {
    manifest.files = sink.files;
    manifest.files.push("manifest.json".into());
    output::write_json(&sink.dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn raw_density(s: &Snapshot, engine: Engine) -> Vec<f64> {
    match engine {
        Engine::Nonselective => s.density.clone(),
        _ => s.density.iter().map(|d| d * s.norm_sq).collect(),
    }
}

fn wigner_window(cfg: &RunConfig) -> WignerWindow {
    let mut w = WignerWindow::full();
    if let Some([lo, hi]) = cfg.wigner_xi_range {
        w.xi_min = lo;
        w.xi_max = hi;
    }
    if let Some([lo, hi]) = cfg.wigner_kappa_range {
        w.kappa_min = lo;
        w.kappa_max = hi;
    }
    w
}

fn report_wigner(manifest: &mut Manifest, tau: f64, map: &WignerMap) {
    manifest.tolerances.push(Tolerance::new("wigner_imag_residue", map.imag_residue, 1e-10));
    manifest.wigner = Some(WignerSummary {
        tau,
        max: map.max(),
        min: map.min(),
        total: map.total(),
    });
}

fn base_meta(cfg: &RunConfig, manifest: &Manifest) -> Meta {
    meta(&[
        ("program", format!("{} {}", manifest.program, manifest.version)),
        ("engine", format!("{:?}", cfg.engine).to_lowercase()),
        ("n_measurements", cfg.n_measurements.to_string()),
        ("schedule", cfg.schedule.to_string()),
        ("kappa0", fmt_f64(cfg.kappa0)),
        ("v0", fmt_f64(cfg.v0)),
        ("xi_b", fmt_f64(cfg.xi_b)),
        ("alpha", fmt_f64(cfg.alpha)),
        ("xi0", fmt_f64(cfg.xi0)),
        ("tau_max", fmt_f64(cfg.tau_max)),
        ("half_width", fmt_f64(cfg.half_width)),
        ("n_points", cfg.n_points.to_string()),
        ("dxi", fmt_f64(manifest.dxi)),
        ("dkappa", fmt_f64(manifest.dkappa)),
    ])
}
