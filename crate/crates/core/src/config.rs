//! Run configuration: TOML documents, named presets and validation.
//!
//! Every key is optional; missing keys take the `fig1` values. Unknown keys
//! are rejected and the error lists the accepted ones.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::experiment::{Engine, MeasurementSchedule, ScheduleFamily, MAX_UNPRUNED_MEASUREMENTS};
use crate::potential::{BarrierSpec, GridSpec, SimulationParams};
use crate::propagator::{StepControl, DEFAULT_MAX_SUBSTEP};

pub const PRESETS: [&str; 2] = ["fig1", "fig5"];

/// Optional output files beyond the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    Staircase,
    Density,
    Branches,
    Sweep,
    Spacetime,
    Wigner,
}

impl Artifact {
    pub const ALL: [Artifact; 6] = [
        Artifact::Staircase,
        Artifact::Density,
        Artifact::Branches,
        Artifact::Sweep,
        Artifact::Spacetime,
        Artifact::Wigner,
    ];
}

impl FromStr for ScheduleFamily {
    type Err = Error;

    /// `equispaced` or `concentrated:τ1:τ2`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["equispaced"] => Ok(ScheduleFamily::Equispaced),
            ["concentrated", a, b] => {
                let parse = |t: &str| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad time {t:?} in schedule {s:?}")))
                };
                Ok(ScheduleFamily::Concentrated {
                    tau1: parse(a)?,
                    tau2: parse(b)?,
                })
            }
            _ => Err(Error::Config(format!(
                "schedule must be `equispaced` or `concentrated:TAU1:TAU2`, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for ScheduleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleFamily::Equispaced => write!(f, "equispaced"),
            ScheduleFamily::Concentrated { tau1, tau2 } => write!(f, "concentrated:{tau1:?}:{tau2:?}"),
        }
    }
}

mod schedule_string {
    use super::*;

    pub fn serialize<S: Serializer>(v: &ScheduleFamily, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ScheduleFamily, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kappa0: f64,
    pub v0: f64,
    pub xi_b: f64,
    pub alpha: f64,
    pub xi0: f64,
    pub tau_max: f64,
    pub half_width: f64,
    pub n_points: usize,
    pub engine: Engine,
    /// Number of measurements `N`.
    pub n_measurements: usize,
    #[serde(with = "schedule_string")]
    pub schedule: ScheduleFamily,
    /// Largest split-step substep.
    pub substep: f64,
    /// Fixed substep count per measurement interval; overrides `substep`.
    pub substeps_per_interval: Option<usize>,
    pub prune: f64,
    pub out_dir: PathBuf,
    /// Density sample times.
    pub snapshots: Vec<f64>,
    pub artifacts: Vec<Artifact>,
    /// Measurement counts for the sweep artifact.
    pub sweep_n: Vec<usize>,
    /// Engines used by the sweep artifact.
    pub sweep_engines: Vec<Engine>,
    /// Number of evenly spaced rows in `spacetime.csv`, `τ = 0` and `τ_max` included.
    pub spacetime_samples: usize,
    /// Time of the Wigner map; defaults to `τ_max`.
    pub wigner_tau: Option<f64>,
    /// Window of the written Wigner map; `None` keeps the whole lattice.
    /// The defaults keep |ξ|, |κ| ≤ 10.
    pub wigner_xi_range: Option<[f64; 2]>,
    pub wigner_kappa_range: Option<[f64; 2]>,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = GridSpec::default();
        Self {
            kappa0: 4.0,
            v0: 1.5,
            xi_b: 1.0,
            alpha: 6.0,
            xi0: -4.0,
            tau_max: 6.24,
            half_width: grid.half_width,
            n_points: grid.n_points,
            engine: Engine::Selective,
            n_measurements: 1,
            schedule: ScheduleFamily::Equispaced,
            substep: DEFAULT_MAX_SUBSTEP,
            substeps_per_interval: None,
            prune: 0.0,
            out_dir: PathBuf::from("out"),
            snapshots: Vec::new(),
            artifacts: vec![Artifact::Staircase, Artifact::Density, Artifact::Branches],
            sweep_n: vec![1, 16, 64, 256, 1024],
            sweep_engines: vec![Engine::Selective],
            spacetime_samples: 101,
            wigner_tau: None,
            wigner_xi_range: Some([-10.0, 10.0]),
            wigner_kappa_range: Some([-10.0, 10.0]),
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn fig1() -> Self {
        Self::default()
    }

    /// Concentrated nonselective configuration with a 1024-point grid.
    pub fn fig5() -> Self {
        Self {
            xi0: -2.67,
            tau_max: 3.56,
            n_points: 1024,
            engine: Engine::Nonselective,
            n_measurements: 16,
            schedule: ScheduleFamily::Concentrated { tau1: 0.88, tau2: 3.0 },
            sweep_n: vec![1, 2, 4, 8, 16],
            sweep_engines: vec![Engine::Selective, Engine::Nonselective],
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "fig1" => Ok(Self::fig1()),
            "fig5" => Ok(Self::fig5()),
            _ => Err(Error::Config(format!("unknown preset {name:?}, expected one of {PRESETS:?}"))),
        }
    }

    /// Parses a TOML document on top of `base`: keys present in the document
    /// replace the base values.
    pub fn parse_over(base: &RunConfig, text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        merged.extend(doc);
        let cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Parses and validates a TOML document over the `fig1` defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg = Self::parse_over(&Self::default(), text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn params(&self) -> SimulationParams {
        SimulationParams {
            kappa0: self.kappa0,
            barrier: BarrierSpec {
                v0: self.v0,
                xi_b: self.xi_b,
                alpha: self.alpha,
            },
            xi0: self.xi0,
            tau_max: self.tau_max,
            grid: GridSpec {
                half_width: self.half_width,
                n_points: self.n_points,
            },
        }
    }

    pub fn step_control(&self) -> StepControl {
        match self.substeps_per_interval {
            Some(n) => StepControl::Substeps(n),
            None => StepControl::MaxSubstep(self.substep),
        }
    }

    pub fn measurement_schedule(&self) -> Result<MeasurementSchedule> {
        self.schedule.schedule(self.n_measurements, self.tau_max)
    }

    pub fn wants(&self, artifact: Artifact) -> bool {
        self.artifacts.contains(&artifact)
    }

    /// Checks every module precondition that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let params = self.params();
        params.validate()?;
        params.grid.build()?;
        self.step_control().validate()?;
        if !(self.prune.is_finite() && self.prune >= 0.0) {
            return Err(Error::Config(format!("prune must be >= 0, got {}", self.prune)));
        }
        self.measurement_schedule()?;
        if self.engine == Engine::Nonselective {
            check_branch_count(self.n_measurements, self.prune)?;
        }
        if self.wants(Artifact::Sweep) {
            if self.sweep_n.is_empty() {
                return Err(Error::Config("sweep_n must not be empty".into()));
            }
            for &n in &self.sweep_n {
                self.schedule.schedule(n, self.tau_max)?;
                if self.sweep_engines.contains(&Engine::Nonselective) {
                    check_branch_count(n, self.prune)?;
                }
            }
        }
        check_times("snapshots", &self.snapshots, self.tau_max)?;
        if self.wants(Artifact::Spacetime) && self.spacetime_samples < 2 {
            return Err(Error::Config("spacetime_samples must be >= 2".into()));
        }
        if let Some(t) = self.wigner_tau {
            check_times("wigner_tau", &[t], self.tau_max)?;
            if self.engine == Engine::Nonselective && t != self.tau_max {
                return Err(Error::Config("nonselective Wigner maps are only available at tau_max".into()));
            }
        }
        for (name, range) in [("wigner_xi_range", self.wigner_xi_range), ("wigner_kappa_range", self.wigner_kappa_range)] {
            if let Some([lo, hi]) = range {
                if !(lo < hi) {
                    return Err(Error::Config(format!("{name} must be increasing, got [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }
}

fn check_branch_count(n: usize, prune: f64) -> Result<()> {
    if prune == 0.0 && n > MAX_UNPRUNED_MEASUREMENTS {
        return Err(Error::BranchGuard {
            n,
            max: MAX_UNPRUNED_MEASUREMENTS,
        });
    }
    Ok(())
}

fn check_times(name: &str, times: &[f64], tau_max: f64) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for &t in times {
        if !(0.0..=tau_max).contains(&t) || t < prev {
            return Err(Error::Config(format!("{name} must be sorted and within [0, {tau_max}], got {times:?}")));
        }
        prev = t;
    }
    Ok(())
}
