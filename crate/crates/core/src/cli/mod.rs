//! Command line front end: argument parsing, configuration merging,
//! artifact writing and exit codes.

pub mod config;
mod commands;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use commands::run_command;
pub use config::{check_config, ApproxSection, Diagnostic, ExperimentConfig, FieldConfig};

use crate::spectra::SpectrumConfig;
use crate::tensor_spectrum::CardinalityBackend;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "STDINFO_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "stdinfo-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stdinfo", version, about = "Random field approximation experiments from point values")]
pub struct Cli {
    /// Worker threads for Monte Carlo replications.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (default: $STDINFO_OUT_DIR, then ./stdinfo-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral moments of the univariate spectrum.
    Spectrum(RunArgs),
    /// The N largest eigenvalues of the field.
    Topk(RunArgs),
    /// Number of terms reaching relative error eps.
    Cardinality(RunArgs),
    /// Per-layer masses of an additive field.
    AdditiveSpectrum(RunArgs),
    /// Split of N terms across the layers of an additive field.
    Allocation(RunArgs),
    /// One realization of the field.
    Simulate(RunArgs),
    /// Monte Carlo run of the iterated algorithm.
    Approximate(RunArgs),
    /// Error against total point count over a grid of n.
    RateSweep(RunArgs),
    /// Point budget for P(error > eps) <= gamma, with verification.
    Prob(RunArgs),
    /// Explosion coefficient V over a grid of f.
    Explosion(RunArgs),
    /// Checks a configuration file and lists all problems.
    Validate { path: PathBuf },
    /// Re-runs the experiment recorded in a manifest.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Spectrum,
    Topk,
    Cardinality,
    AdditiveSpectrum,
    Allocation,
    Simulate,
    Approximate,
    RateSweep,
    Prob,
    Explosion,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Spectrum => "spectrum",
            CommandKind::Topk => "topk",
            CommandKind::Cardinality => "cardinality",
            CommandKind::AdditiveSpectrum => "additive-spectrum",
            CommandKind::Allocation => "allocation",
            CommandKind::Simulate => "simulate",
            CommandKind::Approximate => "approximate",
            CommandKind::RateSweep => "rate-sweep",
            CommandKind::Prob => "prob",
            CommandKind::Explosion => "explosion",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Heap,
    Convolution,
    Auto,
}

impl From<BackendArg> for CardinalityBackend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Heap => CardinalityBackend::Heap,
            BackendArg::Convolution => CardinalityBackend::Convolution,
            BackendArg::Auto => CardinalityBackend::Auto,
        }
    }
}

/// Flags shared by all experiment commands. Flags override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Spectrum as inline JSON, e.g. '{"kind":"power_log","mu":1,"r":1,"q":0}'.
    #[arg(long)]
    pub spectrum: Option<String>,
    /// Dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Order of an additive field; selects the additive model.
    #[arg(long)]
    pub b: Option<usize>,
    /// Number of terms.
    #[arg(long = "N")]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Monte Carlo replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated f values.
    #[arg(long, value_delimiter = ',')]
    pub f: Option<Vec<f64>>,
    /// Comma-separated per-pass point counts.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    /// Points per pass.
    #[arg(long)]
    pub n: Option<usize>,
    /// Span size.
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of passes.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub z: Option<f64>,
    #[arg(long)]
    pub candidates: Option<usize>,
    #[arg(long)]
    pub r_cal: Option<usize>,
    /// Retained modes of simulated fields.
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Config(Vec<Diagnostic>),
    Budget(String),
    Other(anyhow::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![Diagnostic {
            path: String::new(),
            line: None,
            message: msg.into(),
        }])
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Budget(_) => EXIT_BUDGET,
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(ds) => {
                for (i, d) in ds.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "config error: {d}")?;
                }
                Ok(())
            }
            CliError::Budget(m) => write!(f, "budget error: {m}"),
            CliError::Other(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            crate::Error::NoConvergence(_) => CliError::Other(e.into()),
            _ => CliError::config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.into())
    }
}

/// Record of one run, sufficient to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: CommandKind,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub outputs: Vec<String>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Other(anyhow::anyhow!("cannot read {}: {e}", path.display())))?;
    match check_config(&text) {
        (Some(cfg), _) => Ok(cfg),
        (None, diags) => Err(CliError::Config(diags)),
    }
}

/// Applies command line flags on top of an optional config file and
/// re-checks the result.
pub fn merge_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => {
            let Some(s) = &args.spectrum else {
                return Err(CliError::Config(vec![Diagnostic {
                    path: "spectrum".into(),
                    line: None,
                    message: "no spectrum given: pass --config or --spectrum".into(),
                }]));
            };
            let spec: SpectrumConfig = serde_json::from_str(s).map_err(|e| {
                CliError::Config(vec![Diagnostic {
                    path: "spectrum".into(),
                    line: None,
                    message: e.to_string(),
                }])
            })?;
            ExperimentConfig::new(spec)
        }
    };
    if args.config.is_some() {
        if let Some(s) = &args.spectrum {
            cfg.spectrum = serde_json::from_str(s).map_err(|e| {
                CliError::Config(vec![Diagnostic {
                    path: "spectrum".into(),
                    line: None,
                    message: e.to_string(),
                }])
            })?;
        }
    }
    let d = args.d.unwrap_or(cfg.field.d());
    cfg.field = match (cfg.field, args.b) {
        (_, Some(b)) => FieldConfig::Additive { d, b },
        (FieldConfig::Additive { b, .. }, None) => FieldConfig::Additive { d, b },
        (FieldConfig::Tensor { .. }, None) => FieldConfig::Tensor { d },
    };
    let a = &mut cfg.approx;
    a.n = args.n.or(a.n);
    a.m = args.m.or(a.m);
    a.k = args.k.or(a.k);
    a.z = args.z.or(a.z);
    a.candidates = args.candidates.or(a.candidates);
    a.r_cal = args.r_cal.or(a.r_cal);
    cfg.top_n = args.top_n.or(cfg.top_n);
    cfg.eps = args.eps.or(cfg.eps);
    cfg.gamma = args.gamma.or(cfg.gamma);
    cfg.reps = args.reps.or(cfg.reps);
    cfg.f_grid = args.f.clone().or(cfg.f_grid);
    cfg.n_grid = args.n_grid.clone().or(cfg.n_grid);
    cfg.truncation = args.truncation.or(cfg.truncation);
    cfg.backend = args.backend.map(Into::into).or(cfg.backend);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    let text = serde_json::to_string_pretty(&cfg)?;
    match check_config(&text) {
        (Some(c), _) => Ok(c),
        (None, mut diags) => {
            // Lines refer to the merged document, which the user never saw.
            for d in &mut diags {
                d.line = None;
            }
            Err(CliError::Config(diags))
        }
    }
}

pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Runs one experiment command and writes its artifacts and manifest.
pub fn execute(
    kind: CommandKind,
    cfg: &ExperimentConfig,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(out_dir)?;
    let run = || run_command(kind, cfg, out_dir);
    let mut outputs = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| CliError::Other(e.into()))?
            .install(run)?,
        None => run()?,
    };
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        tool: "stdinfo".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: kind,
        config: cfg.clone(),
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        threads,
        outputs,
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

fn kind_of(cmd: &Command) -> Option<(CommandKind, &RunArgs)> {
    Some(match cmd {
        Command::Spectrum(a) => (CommandKind::Spectrum, a),
        Command::Topk(a) => (CommandKind::Topk, a),
        Command::Cardinality(a) => (CommandKind::Cardinality, a),
        Command::AdditiveSpectrum(a) => (CommandKind::AdditiveSpectrum, a),
        Command::Allocation(a) => (CommandKind::Allocation, a),
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::Approximate(a) => (CommandKind::Approximate, a),
        Command::RateSweep(a) => (CommandKind::RateSweep, a),
        Command::Prob(a) => (CommandKind::Prob, a),
        Command::Explosion(a) => (CommandKind::Explosion, a),
        Command::Validate { .. } | Command::Replay { .. } => return None,
    })
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Other(anyhow::anyhow!("cannot read {}: {e}", path.display()))
            })?;
            let (_, diags) = check_config(&text);
            if diags.is_empty() {
                println!("{}: ok", path.display());
                Ok(())
            } else {
                Err(CliError::Config(diags))
            }
        }
        Command::Replay { manifest } => {
            let text = std::fs::read_to_string(manifest).map_err(|e| {
                CliError::Other(anyhow::anyhow!("cannot read {}: {e}", manifest.display()))
            })?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| {
                CliError::config(format!("{}: not a manifest: {e}", manifest.display()))
            })?;
            let cfg_text = serde_json::to_string_pretty(&m.config)?;
            let cfg = match check_config(&cfg_text) {
                (Some(c), _) => c,
                (None, d) => return Err(CliError::Config(d)),
            };
            let out = resolve_out_dir(cli.out.as_deref(), &cfg);
            let rerun = execute(m.command, &cfg, &out, cli.threads.or(m.threads))?;
            println!("replayed {} into {}", m.command.name(), out.display());
            if rerun.config_sha256 != m.config_sha256 {
                return Err(CliError::Other(anyhow::anyhow!("config hash changed on replay")));
            }
            Ok(())
        }
        cmd => {
            let (kind, args) = kind_of(cmd).expect("experiment command");
            let cfg = merge_config(args)?;
            let out = resolve_out_dir(cli.out.as_deref(), &cfg);
            let manifest = execute(kind, &cfg, &out, cli.threads)?;
            println!(
                "{}: wrote {} to {}",
                kind.name(),
                manifest.outputs.join(", "),
                out.display()
            );
            Ok(())
        }
    }
}
