use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use cocoa_abm::analysis::{
    aggregate, baseline_exclusions, read_summary_csv, write_summary_csv, write_w_csv, HeatmapGrid, RunSeries,
};
use cocoa_abm::app::write_contact_log_csv;
use cocoa_abm::engine::{run_simulation_with, RunOptions};
use cocoa_abm::sweep::{
    calibrate_beta, run_sweep, write_atomic, CalibrationOptions, Grid, ResultStore, SweepPlan, TOOL_VERSION,
};
use cocoa_abm::{validate_config, AppParams};
use serde::Serialize;

use crate::{
    parse_list, parse_pair, parse_seeds, percent_label, render as draw, resolve_parallelism, AnalyzeArgs,
    CalibrateArgs, RenderArgs, SimulateArgs, SweepArgs,
};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const W_FILE: &str = "w.csv";
pub const ANALYSIS_MANIFEST: &str = "manifest.json";

pub fn heatmap_csv_name(p3: f64) -> String {
    format!("heatmap_p3_{}.csv", percent_label(p3))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes)?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut file = args.config.load_file()?;
    if let Some(app) = &args.app {
        match parse_list(app)?.as_slice() {
            &[p1, p2, p3] => file.app = AppParams::new(p1, p2, p3),
            _ => bail!("--app expects three percentages p1,p2,p3, got {app:?}"),
        }
    }
    let config = validate_config(file.to_config()?)?;
    let options = RunOptions {
        record_contacts: args.contact_log.is_some(),
        ..RunOptions::default()
    };
    let output = run_simulation_with(&config, args.seed, options);
    match &args.out {
        Some(path) => {
            let mut buf = Vec::new();
            output.result.write_csv(&mut buf)?;
            write_file(path, &buf)?;
        }
        None => output.result.write_csv(io::stdout().lock())?,
    }
    if let Some(path) = &args.contact_log {
        let mut buf = Vec::new();
        write_contact_log_csv(&output.contact_log, &mut buf)?;
        write_file(path, &buf)?;
    }
    let last = output.result.days.last().expect("at least one day");
    eprintln!(
        "seed {}: {} of {} ever infected after {} days",
        args.seed,
        last.n_ip,
        config.population(),
        last.day
    );
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let base = args.config.load()?;
    let grid = Grid {
        p1: cocoa_abm::sweep::percents(&parse_list(&args.grid_p1)?),
        p2: cocoa_abm::sweep::percents(&parse_list(&args.grid_p2)?),
        p3: cocoa_abm::sweep::percents(&parse_list(&args.grid_p3)?),
    };
    let plan = SweepPlan {
        grid,
        seeds: parse_seeds(&args.seeds)?,
        base,
    };
    let threads = resolve_parallelism(args.parallelism);
    eprintln!(
        "sweeping {} scenarios x {} seeds on {threads} threads into {}",
        plan.scenario_count(),
        plan.seeds.len(),
        args.out.display()
    );
    let report = run_sweep(&plan, threads, &args.out)?;
    eprintln!(
        "{} runs executed, {} already present",
        report.runs_executed, report.runs_skipped
    );
    if let Some((app, err)) = report.failures.first() {
        bail!(
            "{} scenarios failed, first ({}, {}, {}): {err}",
            report.failures.len(),
            app.usage_rate,
            app.outing_reduction,
            app.registration_rate
        );
    }
    Ok(())
}

/// Written next to the analysis outputs.
#[derive(Debug, Serialize)]
struct AnalysisManifest<'a> {
    tool_version: &'a str,
    results: String,
    config_hash: &'a str,
    slope_epsilon: f64,
    exclusion_threshold: u32,
    excluded_seeds: &'a [u64],
    n_seeds: usize,
    n_seeds_included: usize,
    n_scenarios: usize,
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let store = ResultStore::new(&args.results);
    let (manifest, rows) = store.load_complete()?;
    let runs = RunSeries::from_rows(&rows);
    let excluded = baseline_exclusions(&runs, args.threshold)?;
    let epsilon = manifest.config.slope_epsilon;
    let summary = aggregate(&runs, &excluded, epsilon)?;

    create_dir(&args.out)?;
    let mut buf = Vec::new();
    write_summary_csv(&summary.scenarios, &mut buf)?;
    write_file(&args.out.join(SUMMARY_FILE), &buf)?;

    let rows = read_summary_csv(buf.as_slice())?;
    for p3 in HeatmapGrid::p3_values(&rows) {
        let mut buf = Vec::new();
        HeatmapGrid::from_summary(&rows, p3).write_csv(&mut buf)?;
        write_file(&args.out.join(heatmap_csv_name(p3)), &buf)?;
    }

    let mut buf = Vec::new();
    write_w_csv(&summary.runs, &mut buf)?;
    write_file(&args.out.join(W_FILE), &buf)?;

    let info = AnalysisManifest {
        tool_version: TOOL_VERSION,
        results: args.results.display().to_string(),
        config_hash: &manifest.config_hash,
        slope_epsilon: epsilon,
        exclusion_threshold: args.threshold,
        excluded_seeds: &summary.excluded_seeds,
        n_seeds: manifest.seeds.len(),
        n_seeds_included: manifest.seeds.len() - summary.excluded_seeds.len(),
        n_scenarios: summary.scenarios.len(),
    };
    let mut json = serde_json::to_string_pretty(&info)?;
    json.push('\n');
    write_file(&args.out.join(ANALYSIS_MANIFEST), json.as_bytes())?;

    eprintln!(
        "{} scenarios, {} of {} seeds excluded (baseline below {} infected): {:?}",
        summary.scenarios.len(),
        summary.excluded_seeds.len(),
        manifest.seeds.len(),
        args.threshold,
        summary.excluded_seeds
    );
    Ok(())
}

pub fn render(args: &RenderArgs) -> Result<()> {
    let path = args.summary.join(SUMMARY_FILE);
    let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let rows = read_summary_csv(io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    if rows.is_empty() {
        bail!("{} has no scenarios", path.display());
    }
    create_dir(&args.out)?;
    let mut written = 0;
    for p3 in HeatmapGrid::p3_values(&rows) {
        let grid = HeatmapGrid::from_summary(&rows, p3);
        let name = format!("heatmap_p3_{}.svg", percent_label(p3));
        write_file(&args.out.join(name), draw::heatmap_svg(&grid).as_bytes())?;
        written += 1;
    }
    for chart in draw::w_charts(&rows) {
        let name = format!("w_p1_{}.svg", percent_label(chart.p1));
        write_file(&args.out.join(name), draw::w_chart_svg(&chart).as_bytes())?;
        written += 1;
    }
    eprintln!("wrote {written} figures to {}", args.out.display());
    Ok(())
}

pub fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let mut file = args.config.load_file()?;
    let config = file.to_config()?;
    let (lo, hi) = parse_pair(&args.band)?;
    let (beta_lo, beta_hi) = parse_pair(&args.range)?;
    let seeds = parse_seeds(&args.seeds)?;
    let options = CalibrationOptions {
        parallelism: resolve_parallelism(args.parallelism),
        exclude_below: args.exclude_below,
        ..CalibrationOptions::default()
    };
    let cal = calibrate_beta(
        &config,
        (lo / 100.0, hi / 100.0),
        &seeds,
        (beta_lo / 100.0, beta_hi / 100.0),
        options,
    )?;
    let mut out = io::stdout().lock();
    for (beta, fraction) in &cal.probes {
        writeln!(out, "probe beta={beta} fraction={fraction:.4}")?;
    }
    writeln!(out, "beta={}", cal.beta)?;
    writeln!(out, "beta_percent={}", cal.beta * 100.0)?;
    writeln!(out, "mean_final_n_ip={}", cal.mean_final_n_ip)?;
    writeln!(out, "fraction={}", cal.fraction)?;
    writeln!(out, "converged={}", cal.converged)?;
    if let Some(path) = &args.write_config {
        file.beta = cal.beta * 100.0;
        let mut json = file.to_json_pretty();
        json.push('\n');
        write_file(path, json.as_bytes())?;
    }
    if !cal.converged {
        bail!(
            "no beta in [{beta_lo}, {beta_hi}] % reached the band [{lo}, {hi}] %; closest {} gives {:.4}",
            cal.beta,
            cal.fraction
        );
    }
    Ok(())
}
