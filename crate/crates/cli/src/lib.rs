//! Command-line front end: single runs, sweeps, analysis, figures and β
//! calibration.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cocoa_abm::{ConfigFile, ScenarioConfig};

pub mod commands;
pub mod render;

#[derive(Debug, Parser)]
#[command(
    name = "cocoa-abm",
    version,
    about = "Agent-based SEIR+D simulator with a contact-confirming app"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its day series as CSV.
    Simulate(SimulateArgs),
    /// Run every (scenario, seed) pair of a grid into a result directory.
    Sweep(SweepArgs),
    /// Aggregate a sweep: summary.csv, heatmap CSVs and w.csv.
    Analyze(AnalyzeArgs),
    /// Draw SVG heatmaps and w bar charts from an analysis directory.
    Render(RenderArgs),
    /// Find β so the no-app baseline infects a target share of people.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON config file; the built-in experiment config if omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override the infection probability per step, in percent.
    #[arg(long, value_name = "PERCENT")]
    pub beta: Option<f64>,
}

impl ConfigArgs {
    /// The config file with flag overrides applied.
    pub fn load_file(&self) -> Result<ConfigFile> {
        let mut file = match &self.config {
            Some(path) => ConfigFile::load(path).with_context(|| format!("loading config {}", path.display()))?,
            None => ConfigFile::default(),
        };
        if let Some(beta) = self.beta {
            file.beta = beta;
        }
        Ok(file)
    }

    pub fn load(&self) -> Result<ScenarioConfig> {
        Ok(self.load_file()?.to_config()?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// App parameters p1,p2,p3 in percent, e.g. "60,40,100".
    #[arg(long, value_name = "P1,P2,P3")]
    pub app: Option<String>,
    /// Output CSV; standard output if omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Also write contacts between app users to this CSV.
    #[arg(long, value_name = "PATH")]
    pub contact_log: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Inclusive seed range.
    #[arg(long, default_value = "1..30", value_name = "A..B")]
    pub seeds: String,
    /// Usage rates in percent.
    #[arg(long = "grid-p1", default_value = "0,20,40,60,80,100")]
    pub grid_p1: String,
    /// Outing reductions in percent.
    #[arg(long = "grid-p2", default_value = "0,20,40,60,80,100")]
    pub grid_p2: String,
    /// Registration rates in percent.
    #[arg(long = "grid-p3", default_value = "0,20,40,60,80,100")]
    pub grid_p3: String,
    #[arg(long, env = "COCOA_ABM_THREADS")]
    pub parallelism: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Sweep result directory.
    #[arg(long, value_name = "DIR")]
    pub results: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Seeds whose baseline run ends below this many infected are excluded.
    #[arg(long, default_value_t = cocoa_abm::analysis::DEFAULT_EXCLUSION_THRESHOLD)]
    pub threshold: u32,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    /// Directory holding summary.csv.
    #[arg(long, value_name = "DIR")]
    pub summary: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Target band of the mean infected share, in percent.
    #[arg(long, default_value = "5,10", value_name = "LO,HI")]
    pub band: String,
    #[arg(long, default_value = "1..30", value_name = "A..B")]
    pub seeds: String,
    /// β search interval in percent per step.
    #[arg(long, default_value = "0,0.1", value_name = "LO,HI")]
    pub range: String,
    #[arg(long, env = "COCOA_ABM_THREADS")]
    pub parallelism: Option<usize>,
    /// Exclude seeds ending below this many infected from the mean.
    #[arg(long)]
    pub exclude_below: Option<u32>,
    /// Write the config with the calibrated β to this path.
    #[arg(long, value_name = "PATH")]
    pub write_config: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Render(a) => commands::render(&a),
        Command::Calibrate(a) => commands::calibrate(&a),
    }
}

/// Parses an inclusive range `A..B` (or a single seed `A`).
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
        None => (s, s),
    };
    let a: u64 = a.trim().parse().with_context(|| format!("bad seed range {s:?}"))?;
    let b: u64 = b.trim().parse().with_context(|| format!("bad seed range {s:?}"))?;
    if a > b {
        bail!("empty seed range {s:?}");
    }
    Ok((a..=b).collect())
}

/// Parses comma-separated numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number {v:?} in {s:?}"))
        })
        .collect()
}

/// Parses a `LO,HI` pair.
pub fn parse_pair(s: &str) -> Result<(f64, f64)> {
    match parse_list(s)?.as_slice() {
        &[lo, hi] => Ok((lo, hi)),
        _ => bail!("expected two comma-separated numbers, got {s:?}"),
    }
}

/// Worker threads: the flag or `COCOA_ABM_THREADS`, else all cores.
pub fn resolve_parallelism(flag: Option<usize>) -> usize {
    flag.filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// A probability as a compact percent label: 0.2 -> "20", 0.125 -> "12.5".
pub fn percent_label(p: f64) -> String {
    let v = (p * 1e4).round() / 1e2;
    format!("{v}")
}
