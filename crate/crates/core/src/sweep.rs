//! Scenario grids, parallel sweeps with a resumable on-disk store, and β
//! calibration.
//!
//! A store directory holds `manifest.json` and one CSV per scenario under
//! `runs/`. A run counts as present when its seed has exactly `max_days`
//! rows, so an interrupted sweep picks up where it stopped. Each run's master
//! seed is the seed number itself, whatever the scenario.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{validate_config, AppParams, ConfigError, ScenarioConfig, ValidConfig};
use crate::engine::{read_rows, run_simulation, write_rows, RunRow};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNS_DIR: &str = "runs";

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("i/o error on {path}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad CSV in {path}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("bad JSON in {path}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("store was written with config hash {found}, current config hashes to {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("could not build thread pool")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
    #[error("{} of {total} runs missing, first: {}", missing.len(), describe_missing(missing))]
    Incomplete {
        missing: Vec<(AppParams, u64)>,
        total: usize,
    },
    #[error(
        "band [{lo}, {hi}] unreachable: beta {beta_lo} gives {fraction_lo:.4}, beta {beta_hi} gives {fraction_hi:.4}"
    )]
    Unreachable {
        lo: f64,
        hi: f64,
        beta_lo: f64,
        fraction_lo: f64,
        beta_hi: f64,
        fraction_hi: f64,
    },
}

fn describe_missing(missing: &[(AppParams, u64)]) -> String {
    missing
        .iter()
        .take(5)
        .map(|(a, s)| {
            format!(
                "({}, {}, {}) seed {s}",
                a.usage_rate, a.outing_reduction, a.registration_rate
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SweepError + '_ {
    move |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// App parameter values to sweep, as probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub p3: Vec<f64>,
}

impl Default for Grid {
    /// 0, 20, ..., 100 percent on every axis.
    fn default() -> Self {
        let axis = percents(&[0.0, 20.0, 40.0, 60.0, 80.0, 100.0]);
        Grid {
            p1: axis.clone(),
            p2: axis.clone(),
            p3: axis,
        }
    }
}

/// Converts percentages to probabilities.
pub fn percents(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub grid: Grid,
    pub seeds: Vec<u64>,
    /// Every scenario runs this config with its own app parameters.
    pub base: ScenarioConfig,
}

impl SweepPlan {
    /// Default grid and seeds 1..=30.
    pub fn new(base: ScenarioConfig) -> Self {
        SweepPlan {
            grid: Grid::default(),
            seeds: (1..=30).collect(),
            base,
        }
    }

    pub fn scenario_count(&self) -> usize {
        self.grid.p1.len() * self.grid.p2.len() * self.grid.p3.len()
    }

    pub fn run_count(&self) -> usize {
        self.scenario_count() * self.seeds.len()
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        for (name, axis) in [("p1", &self.grid.p1), ("p2", &self.grid.p2), ("p3", &self.grid.p3)] {
            if axis.is_empty() {
                return Err(SweepError::Plan(format!("{name} grid is empty")));
            }
            if let Some(v) = axis.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(SweepError::Plan(format!("{name} value {v} out of [0,1]")));
            }
            let distinct: BTreeSet<u64> = axis.iter().map(|v| v.to_bits()).collect();
            if distinct.len() != axis.len() {
                return Err(SweepError::Plan(format!("{name} grid has duplicates")));
            }
        }
        if self.seeds.is_empty() {
            return Err(SweepError::Plan("no seeds".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(SweepError::Plan("duplicate seeds".into()));
        }
        validate_config(self.base.clone())?;
        Ok(())
    }
}

/// Cartesian product of the grid in lexicographic (p1, p2, p3) order, each
/// axis in the order given.
pub fn enumerate_scenarios(plan: &SweepPlan) -> Vec<AppParams> {
    let g = &plan.grid;
    let mut out = Vec::with_capacity(plan.scenario_count());
    for &p1 in &g.p1 {
        for &p2 in &g.p2 {
            for &p3 in &g.p3 {
                out.push(AppParams::new(p1, p2, p3));
            }
        }
    }
    out
}

/// SHA-256 of the config's JSON form, with the app parameters cleared since
/// each scenario supplies its own.
pub fn config_hash(config: &ScenarioConfig) -> String {
    let normalized = config.clone().with_app(AppParams::default());
    let json = serde_json::to_vec(&normalized).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub grid: Grid,
    pub seeds: Vec<u64>,
}

impl Manifest {
    pub fn for_plan(plan: &SweepPlan) -> Self {
        Manifest {
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config_hash(&plan.base),
            config: plan.base.clone().with_app(AppParams::default()),
            grid: plan.grid.clone(),
            seeds: plan.seeds.clone(),
        }
    }

    pub fn plan(&self) -> SweepPlan {
        SweepPlan {
            grid: self.grid.clone(),
            seeds: self.seeds.clone(),
            base: self.config.clone(),
        }
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SweepError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Result directory: a manifest plus one CSV per scenario.
#[derive(Debug, Clone)]
pub struct ResultStore {
    root: PathBuf,
}

impl ResultStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResultStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn scenario_path(&self, app: &AppParams) -> PathBuf {
        self.root.join(RUNS_DIR).join(format!(
            "p1_{:.4}_p2_{:.4}_p3_{:.4}.csv",
            app.usage_rate, app.outing_reduction, app.registration_rate
        ))
    }

    pub fn read_manifest(&self) -> Result<Option<Manifest>, SweepError> {
        let path = self.manifest_path();
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|source| SweepError::Json { path, source }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), SweepError> {
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let mut json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        json.push('\n');
        write_atomic(&self.manifest_path(), json.as_bytes())
    }

    /// Rows stored for a scenario; empty if it has no file yet.
    pub fn load_scenario(&self, app: &AppParams) -> Result<Vec<RunRow>, SweepError> {
        let path = self.scenario_path(app);
        let file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&path)(e)),
        };
        read_rows(io::BufReader::new(file)).map_err(|source| SweepError::Csv { path, source })
    }

    /// Writes rows sorted by (seed, day).
    pub fn write_scenario(&self, app: &AppParams, mut rows: Vec<RunRow>) -> Result<(), SweepError> {
        let path = self.scenario_path(app);
        let dir = path.parent().expect("scenario path has a parent");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        rows.sort_by_key(|r| (r.seed, r.day));
        let mut buf = Vec::new();
        write_rows(rows, &mut buf).map_err(|source| SweepError::Csv {
            path: path.clone(),
            source,
        })?;
        write_atomic(&path, &buf)
    }

    /// Loads every run the manifest calls for, failing with the list of
    /// missing (scenario, seed) pairs if any is absent.
    pub fn load_complete(&self) -> Result<(Manifest, Vec<RunRow>), SweepError> {
        let manifest = self.read_manifest()?.ok_or_else(|| SweepError::Io {
            path: self.manifest_path(),
            source: io::Error::new(io::ErrorKind::NotFound, "no manifest; not a sweep directory"),
        })?;
        let plan = manifest.plan();
        let mut rows = Vec::new();
        let mut missing = Vec::new();
        for app in enumerate_scenarios(&plan) {
            let stored = self.load_scenario(&app)?;
            let present = complete_seeds(&stored, plan.base.max_days);
            for &seed in &plan.seeds {
                if !present.contains(&seed) {
                    missing.push((app, seed));
                }
            }
            rows.extend(stored.into_iter().filter(|r| plan.seeds.contains(&r.seed)));
        }
        if !missing.is_empty() {
            return Err(SweepError::Incomplete {
                missing,
                total: plan.run_count(),
            });
        }
        Ok((manifest, rows))
    }
}

/// Seeds with exactly one row for each day `1..=max_days`.
pub fn complete_seeds(rows: &[RunRow], max_days: u32) -> BTreeSet<u64> {
    let mut days: std::collections::BTreeMap<u64, Vec<u32>> = std::collections::BTreeMap::new();
    for r in rows {
        days.entry(r.seed).or_default().push(r.day);
    }
    days.into_iter()
        .filter_map(|(seed, mut d)| {
            d.sort_unstable();
            (d.len() == max_days as usize && d.iter().copied().eq(1..=max_days)).then_some(seed)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub scenarios: usize,
    pub runs_executed: usize,
    pub runs_skipped: usize,
    /// Scenarios whose results could not be read or written.
    pub failures: Vec<(AppParams, String)>,
}

/// Runs executed and skipped for one scenario.
type ScenarioOutcome = Result<(usize, usize), SweepError>;

fn sweep_scenario(
    store: &ResultStore,
    base: &ValidConfig,
    app: AppParams,
    seeds: &[u64],
) -> ScenarioOutcome {
    let stored = store.load_scenario(&app)?;
    let present = complete_seeds(&stored, base.max_days);
    let todo: Vec<u64> = seeds.iter().copied().filter(|s| !present.contains(s)).collect();
    if todo.is_empty() {
        return Ok((0, seeds.len()));
    }
    let config = base.with_app(app)?;
    let fresh: Vec<Vec<RunRow>> = todo
        .par_iter()
        .map(|&seed| run_simulation(&config, seed).rows().collect())
        .collect();
    let mut rows: Vec<RunRow> = stored.into_iter().filter(|r| present.contains(&r.seed)).collect();
    rows.extend(fresh.into_iter().flatten());
    store.write_scenario(&app, rows)?;
    Ok((todo.len(), seeds.len() - todo.len()))
}

/// Runs every (scenario, seed) pair of `plan` not already in the store at
/// `dir`, using `parallelism` worker threads. Stored bytes do not depend on
/// the degree of parallelism.
pub fn run_sweep(plan: &SweepPlan, parallelism: usize, dir: impl Into<PathBuf>) -> Result<SweepReport, SweepError> {
    plan.validate()?;
    let store = ResultStore::new(dir);
    let manifest = Manifest::for_plan(plan);
    if let Some(existing) = store.read_manifest()? {
        if existing.config_hash != manifest.config_hash {
            return Err(SweepError::ConfigMismatch {
                expected: manifest.config_hash,
                found: existing.config_hash,
            });
        }
    }
    store.write_manifest(&manifest)?;

    let base = validate_config(plan.base.clone())?;
    let scenarios = enumerate_scenarios(plan);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()?;
    let outcomes: Vec<(AppParams, ScenarioOutcome)> = pool.install(|| {
        scenarios
            .par_iter()
            .map(|&app| (app, sweep_scenario(&store, &base, app, &plan.seeds)))
            .collect()
    });

    let mut report = SweepReport {
        scenarios: scenarios.len(),
        ..SweepReport::default()
    };
    for (app, outcome) in outcomes {
        match outcome {
            Ok((executed, skipped)) => {
                report.runs_executed += executed;
                report.runs_skipped += skipped;
            }
            Err(e) => report.failures.push((app, e.to_string())),
        }
    }
    Ok(report)
}

/// Outcome of [`calibrate_beta`].
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub beta: f64,
    pub mean_final_n_ip: f64,
    pub fraction: f64,
    /// False if the iteration limit was hit before landing in the band;
    /// `beta` is then the closest candidate seen.
    pub converged: bool,
    /// Every `(beta, fraction)` evaluated, in order.
    pub probes: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub parallelism: usize,
    pub max_iterations: usize,
    /// Leave out seeds whose run ends below this many ever-infected agents.
    pub exclude_below: Option<u32>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            parallelism: 1,
            max_iterations: 20,
            exclude_below: None,
        }
    }
}

/// Default β search interval (per-step probability).
pub const DEFAULT_BETA_RANGE: (f64, f64) = (0.0, 0.001);

/// Bisects β (app disabled) until the mean final infected fraction over
/// `seeds` lies in `band`. Assumes the fraction grows with β.
pub fn calibrate_beta(
    config: &ScenarioConfig,
    band: (f64, f64),
    seeds: &[u64],
    search_range: (f64, f64),
    options: CalibrationOptions,
) -> Result<Calibration, SweepError> {
    let (lo_band, hi_band) = band;
    if !(0.0..=1.0).contains(&lo_band) || !(0.0..=1.0).contains(&hi_band) || lo_band > hi_band {
        return Err(SweepError::Plan(format!(
            "band [{lo_band}, {hi_band}] is not a sub-interval of [0,1]"
        )));
    }
    let (mut lo, mut hi) = search_range;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(SweepError::Plan(format!(
            "search range [{lo}, {hi}] is not a sub-interval of [0,1]"
        )));
    }
    if seeds.is_empty() {
        return Err(SweepError::Plan("no seeds".into()));
    }
    let base = config.clone().with_app(AppParams::default());
    validate_config(base.clone())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism.max(1))
        .build()?;

    let mut probes: Vec<(f64, f64)> = Vec::new();
    let mut evaluate = |beta: f64| -> Result<(f64, f64), SweepError> {
        let cfg = validate_config(base.clone().with_beta(beta))?;
        let finals: Vec<u32> = pool.install(|| {
            seeds
                .par_iter()
                .map(|&s| run_simulation(&cfg, s).final_n_ip())
                .collect()
        });
        let kept: Vec<f64> = finals
            .iter()
            .filter(|&&f| options.exclude_below.is_none_or(|t| f >= t))
            .map(|&f| f64::from(f))
            .collect();
        let mean = if kept.is_empty() {
            0.0
        } else {
            kept.iter().sum::<f64>() / kept.len() as f64
        };
        let fraction = mean / cfg.population() as f64;
        probes.push((beta, fraction));
        Ok((mean, fraction))
    };
    let in_band = |f: f64| lo_band <= f && f <= hi_band;
    let done = |beta, (mean, fraction): (f64, f64), converged, probes: Vec<(f64, f64)>| Calibration {
        beta,
        mean_final_n_ip: mean,
        fraction,
        converged,
        probes,
    };

    let at_lo = evaluate(lo)?;
    if in_band(at_lo.1) {
        return Ok(done(lo, at_lo, true, probes));
    }
    let at_hi = evaluate(hi)?;
    if in_band(at_hi.1) {
        return Ok(done(hi, at_hi, true, probes));
    }
    if at_lo.1 > hi_band || at_hi.1 < lo_band {
        return Err(SweepError::Unreachable {
            lo: lo_band,
            hi: hi_band,
            beta_lo: lo,
            fraction_lo: at_lo.1,
            beta_hi: hi,
            fraction_hi: at_hi.1,
        });
    }

    let distance = |f: f64| if f < lo_band { lo_band - f } else { f - hi_band };
    let mut best = if distance(at_lo.1) <= distance(at_hi.1) {
        (lo, at_lo)
    } else {
        (hi, at_hi)
    };
    for _ in 0..options.max_iterations {
        let mid = 0.5 * (lo + hi);
        let at_mid = evaluate(mid)?;
        if in_band(at_mid.1) {
            return Ok(done(mid, at_mid, true, probes));
        }
        if distance(at_mid.1) < distance(best.1 .1) {
            best = (mid, at_mid);
        }
        if at_mid.1 < lo_band {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(done(best.0, best.1, false, probes))
}
