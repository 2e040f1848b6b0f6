use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use zeno_core::config::{Artifact, RunConfig, PRESETS};
use zeno_core::experiment::{Engine, ScheduleFamily};
use zeno_core::runner::{execute, execute_sweep, Manifest};
use zeno_core::validation::{validate, Suite};

#[derive(Parser, Debug)]
#[command(name = "zeno", version, about = "Wave-packet tunneling under repeated momentum-direction measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and write the manifest and CSV files.
    Run(RunArgs),
    /// Final direction probability over a list of measurement counts.
    Sweep(SweepArgs),
    /// Wigner map at one time.
    Wigner(WignerArgs),
    /// Numerical self-checks; exits with status 1 on any failure.
    Validate(ValidateArgs),
    /// Print the built-in presets as TOML.
    Presets {
        name: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EngineArg {
    Selective,
    Nonselective,
    None,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Selective => Engine::Selective,
            EngineArg::Nonselective => Engine::Nonselective,
            EngineArg::None => Engine::None,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteArg {
    Propagator,
    Measurement,
    Wigner,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Propagator => Suite::Propagator,
            SuiteArg::Measurement => Suite::Measurement,
            SuiteArg::Wigner => Suite::Wigner,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration, applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = PRESETS)]
    preset: Option<String>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Number of measurements.
    #[arg(long = "N", value_name = "INT")]
    n: Option<usize>,
    /// `equispaced` or `concentrated:TAU1:TAU2`.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    half_width: Option<f64>,
    /// Largest split-step substep.
    #[arg(long)]
    substep: Option<f64>,
    /// Fixed substep count per measurement interval.
    #[arg(long)]
    substeps: Option<usize>,
    /// Drop branches whose probability falls below this value.
    #[arg(long)]
    prune: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Density sample times, comma separated.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Files to write besides the manifest, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_artifact)]
    artifacts: Option<Vec<Artifact>>,
    /// Rows in spacetime.csv.
    #[arg(long)]
    spacetime_samples: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Measurement counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Engines to sweep, comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    engines: Option<Vec<EngineArg>>,
}

#[derive(Args, Debug)]
struct WignerArgs {
    #[command(flatten)]
    common: Common,
    /// Time of the map; defaults to tau_max.
    #[arg(long)]
    tau: Option<f64>,
    /// `MIN:MAX` window in position.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    xi_range: Option<[f64; 2]>,
    /// `MIN:MAX` window in momentum.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    kappa_range: Option<[f64; 2]>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: SuiteArg,
    /// Also write the JSON report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_artifact(s: &str) -> std::result::Result<Artifact, String> {
    Artifact::ALL
        .into_iter()
        .find(|a| serde_json::to_value(a).ok().and_then(|v| v.as_str().map(|n| n == s)).unwrap_or(false))
        .ok_or_else(|| format!("unknown artifact {s:?}"))
}

fn parse_range(s: &str) -> std::result::Result<[f64; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected MIN:MAX, got {s:?}"))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok([p(a)?, p(b)?])
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let base = match &common.preset {
        Some(name) => RunConfig::preset(name)?,
        None => RunConfig::default(),
    };
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::parse_over(&base, &text).with_context(|| format!("in {}", path.display()))?
        }
        None => base,
    };
    if let Some(e) = common.engine {
        cfg.engine = e.into();
    }
    if let Some(n) = common.n {
        cfg.n_measurements = n;
    }
    if let Some(s) = &common.schedule {
        cfg.schedule = s.parse::<ScheduleFamily>()?;
    }
    if let Some(n) = common.grid_points {
        cfg.n_points = n;
    }
    if let Some(h) = common.half_width {
        cfg.half_width = h;
    }
    if let Some(s) = common.substep {
        cfg.substep = s;
        cfg.substeps_per_interval = None;
    }
    if let Some(n) = common.substeps {
        cfg.substeps_per_interval = Some(n);
    }
    if let Some(p) = common.prune {
        cfg.prune = p;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = &common.snapshots {
        cfg.snapshots = s.clone();
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn init_threads(cfg: &RunConfig) -> Result<()> {
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global()?;
    }
    Ok(())
}

fn summarize(m: &Manifest) {
    if let Some(r) = &m.results {
        if let Some(p) = r.p_n_s {
            println!("P_N_s = {p:.6}");
        }
        if let Some(p) = r.p_n_ns {
            println!("P_N_ns = {p:.6}");
        }
        if let Some(p) = r.p_direction {
            println!("P_direction = {p:.6}");
        }
        println!("P_x>0 = {:.6}", r.p_x_gt_0);
        if r.discarded_probability > 0.0 {
            println!("discarded = {:.3e}", r.discarded_probability);
        }
    }
    if let Some(rows) = &m.sweep {
        println!("{:>6} {:>10} {:>10}", "N", "P_s", "P_ns");
        let cell = |v: Option<f64>| v.map(|p| format!("{p:.6}")).unwrap_or_else(|| "-".into());
        for r in rows {
            println!("{:>6} {:>10} {:>10}", r.n, cell(r.p_s), cell(r.p_ns));
        }
    }
    println!("wrote {} to {}", m.files.join(", "), m.config.out_dir.display());
}

fn run(cli: Cli) -> Result<ExitCode> {
    let line = std::env::args().collect::<Vec<_>>().join(" ");
    match cli.command {
        Command::Run(args) => {
            let mut cfg = resolve(&args.common)?;
            if let Some(a) = args.artifacts {
                cfg.artifacts = a;
            }
            if let Some(s) = args.spacetime_samples {
                cfg.spacetime_samples = s;
            }
            init_threads(&cfg)?;
            summarize(&execute(&cfg, &line)?);
        }
        Command::Sweep(args) => {
            let mut cfg = resolve(&args.common)?;
            if let Some(ns) = args.n_list {
                cfg.sweep_n = ns;
            }
            if let Some(e) = args.engines {
                cfg.sweep_engines = e.into_iter().map(Engine::from).collect();
            }
            init_threads(&cfg)?;
            summarize(&execute_sweep(&cfg, &line)?);
        }
        Command::Wigner(args) => {
            let mut cfg = resolve(&args.common)?;
            cfg.artifacts = vec![Artifact::Wigner];
            cfg.wigner_tau = args.tau.or(cfg.wigner_tau);
            cfg.wigner_xi_range = args.xi_range.or(cfg.wigner_xi_range);
            cfg.wigner_kappa_range = args.kappa_range.or(cfg.wigner_kappa_range);
            init_threads(&cfg)?;
            let m = execute(&cfg, &line)?;
            if let Some(w) = &m.wigner {
                println!("W at tau = {}: max {:.6e}, min {:.6e}, integral {:.6}", w.tau, w.max, w.min, w.total);
            }
            summarize(&m);
        }
        Command::Validate(args) => {
            let report = validate(args.suite.into())?;
            for c in &report.checks {
                info!("{c}");
            }
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            if let Some(path) = args.out {
                std::fs::write(&path, format!("{json}\n")).with_context(|| format!("writing {}", path.display()))?;
            }
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Presets { name } => {
            let names: Vec<&str> = match &name {
                Some(n) => vec![n.as_str()],
                None => PRESETS.to_vec(),
            };
            for n in names {
                println!("# preset {n}\n{}", RunConfig::preset(n)?.to_toml()?);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
