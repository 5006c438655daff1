//! `funcanova` command-line tool.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use funcanova::inference::TestMethod;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing input; exit code 2.
    Input(String),
    /// The numerics failed on valid input; exit code 1.
    Numeric(String),
}

impl From<funcanova::Error> for CliError {
    fn from(e: funcanova::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "funcanova", version, about = "Functional ANOVA and kernel-score classification of grouped curves")]
struct Cli {
    /// JSON or TOML run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "funcanova-out")]
    out: PathBuf,
    #[arg(long, global = true, value_parser = parse_method)]
    method: Option<TestMethod>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long = "n-perm", global = true)]
    n_perm: Option<usize>,
    #[arg(long = "basis-q", global = true)]
    basis_q: Option<usize>,
    #[arg(long, global = true)]
    ridge: Option<f64>,
    /// Shortest run of rejected grid points reported as a zone
    #[arg(long = "min-zone-points", global = true)]
    min_zone_points: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

fn parse_method(s: &str) -> Result<TestMethod, String> {
    s.parse().map_err(|e: funcanova::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load per-recording CSVs listed in a manifest and write the canonical dataset
    Ingest {
        manifest: PathBuf,
        /// Directory the manifest paths are relative to (default: the manifest's directory)
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        control: Option<String>,
        #[arg(long)]
        grid_len: Option<usize>,
    },
    /// Smooth, fit the FANOVA model and test every control-vs-group contrast
    Analyze {
        /// Canonical dataset directory or its manifest
        dataset: PathBuf,
        /// Ground truth from `generate simulation`, for recovery measurements
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Per-point permutation thresholds instead of the sup-F threshold
        #[arg(long)]
        pointwise: bool,
        /// Test the raw curves instead of their smoothed reconstructions
        #[arg(long)]
        raw: bool,
    },
    /// Train the kernel-score classifier and predict held-out units
    Classify {
        dataset: PathBuf,
        /// Separate labelled test dataset; all of `dataset` is then used for training
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        train_fraction: Option<f64>,
        /// Predict the training units themselves
        #[arg(long)]
        on_train: bool,
    },
    /// Run the noise-level sweep on simulated data
    Simulate {
        #[arg(long, value_delimiter = ',')]
        sd: Option<Vec<f64>>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<TestMethod>>,
    },
    /// Mean, coefficient of variation and normalized activation per group and variate
    Heatmap {
        dataset: PathBuf,
        #[arg(long)]
        neutral: Option<String>,
        /// Also write time-binned statistics with this many bins
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Write a synthetic dataset
    Generate {
        #[arg(value_enum)]
        kind: FixtureKind,
        /// Noise sd of the simulation
        #[arg(long)]
        sd: Option<f64>,
        /// Use basis-representable spline bumps
        #[arg(long)]
        spline: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FixtureKind {
    /// Ground-truth simulation in the canonical layout, plus truth.json
    Simulation,
    /// Emotion-corpus-shaped AU recordings in per-clip CSVs
    Ravdess,
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.analysis.seed = cfg.seed;
    cfg.simulation.seed = cfg.seed;
    cfg.fixture.seed = cfg.seed;
    for a in [&mut cfg.analysis, &mut cfg.simulation.analysis] {
        if let Some(m) = cli.method {
            a.method = m;
        }
        if let Some(v) = cli.alpha {
            a.alpha = v;
        }
        if let Some(v) = cli.n_perm {
            a.n_perm = v;
        }
        if let Some(v) = cli.basis_q {
            a.basis_q = v;
        }
        if let Some(v) = cli.ridge {
            a.ridge = v;
        }
        if let Some(v) = cli.min_zone_points {
            a.min_zone_points = v;
        }
    }
    match &cli.command {
        Command::Ingest { control, grid_len, .. } => {
            if control.is_some() {
                cfg.ingest.control_group = control.clone();
            }
            if grid_len.is_some() {
                cfg.ingest.grid_len = *grid_len;
            }
        }
        Command::Analyze { pointwise, raw, .. } => {
            if *pointwise {
                cfg.analysis.perm_mode = funcanova::inference::PermutationMode::Pointwise;
            }
            cfg.analysis.raw_tests |= *raw;
        }
        Command::Classify {
            train_fraction, on_train, ..
        } => {
            if let Some(f) = train_fraction {
                cfg.classify.train_fraction = *f;
            }
            cfg.classify.on_train |= *on_train;
        }
        Command::Simulate { sd, reps, methods } => {
            if let Some(v) = sd {
                cfg.sweep.sd_levels = v.clone();
            }
            if let Some(v) = reps {
                cfg.sweep.reps = *v;
            }
            if let Some(v) = methods {
                cfg.sweep.methods = v.clone();
            }
        }
        Command::Heatmap { neutral, bins, .. } => {
            if neutral.is_some() {
                cfg.heatmap.neutral = neutral.clone();
            }
            if bins.is_some() {
                cfg.heatmap.bins = *bins;
            }
        }
        Command::Generate { sd, spline, .. } => {
            if let Some(v) = sd {
                cfg.simulation.sd = *v;
            }
            if *spline {
                cfg.simulation.shape = funcanova::simulate::BumpShape::CubicSpline;
            }
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    commands::prepare_out(&cli.out, &cfg)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Ingest { manifest, data_dir, .. } => commands::ingest(&cfg, manifest, data_dir.as_deref(), out),
        Command::Analyze { dataset, truth, .. } => commands::analyze(&cfg, dataset, truth.as_deref(), out),
        Command::Classify { dataset, test, .. } => commands::classify(&cfg, dataset, test.as_deref(), out),
        Command::Simulate { .. } => commands::simulate(&cfg, out),
        Command::Heatmap { dataset, .. } => commands::heatmap(&cfg, dataset, out),
        Command::Generate { kind, .. } => match kind {
            FixtureKind::Simulation => commands::generate_simulation(&cfg, out),
            FixtureKind::Ravdess => commands::generate_ravdess(&cfg, out),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(1)
        }
    }
}
