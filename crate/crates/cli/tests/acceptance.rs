//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs the full calibrated sweep twice, so it takes a while.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use cocoa_abm::analysis::{fit_slope, read_summary_csv, spearman, SummaryRow};
use cocoa_abm::contact::contacts_for_step;
use cocoa_abm::domain::{build_population, Agent, Point};
use cocoa_abm::engine::{read_rows, RunOptions, Simulation};
use cocoa_abm::epidemic::{kernel_distribution, sample_transition, KernelInputs, KernelParams};
use cocoa_abm::mobility::ClockTime;
use cocoa_abm::rng::{derive_stream, Domain, RngStream};
use cocoa_abm::{run_simulation, validate_config, AppParams, InfectionState, ScenarioConfig};

const BIN: &str = env!("CARGO_BIN_EXE_cocoa-abm");

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(
        elapsed <= limit,
        format!("{detail}; {:.1}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()),
    )
}

fn kernel_exactness() -> Outcome {
    let start = Instant::now();
    let params = KernelParams {
        beta: 0.00125,
        gamma0: 0.1,
        gamma1: 0.02,
        incubation_days: 5,
        infectious_days: 10,
    };
    let mut cells = 0;
    let mut sampled = 0;
    for state in InfectionState::ALL {
        for contact in [false, true] {
            for days_in_state in 0..=20 {
                for hospitalized in [false, true] {
                    let inputs = KernelInputs {
                        state,
                        contact,
                        days_in_state,
                        hospitalized,
                    };
                    let d = kernel_distribution(inputs, &params);
                    if d.total() != 1.0 {
                        return Err(format!("{inputs:?} sums to {}", d.total()));
                    }
                    let mut s = derive_stream(11, Domain::Epidemic, cells);
                    let n = 100_000u32;
                    let mut counts = [0u32; 5];
                    for _ in 0..n {
                        counts[sample_transition(inputs, &params, &mut s).index()] += 1;
                    }
                    for (to, p) in d.iter() {
                        let expect = f64::from(n) * p;
                        let sigma = (f64::from(n) * p * (1.0 - p)).sqrt();
                        if (f64::from(counts[to.index()]) - expect).abs() > 3.0 * sigma {
                            return Err(format!("{inputs:?} -> {to:?}: {} vs {expect}", counts[to.index()]));
                        }
                    }
                    cells += 1;
                    sampled += n as usize;
                }
            }
        }
    }
    within(
        start.elapsed(),
        Duration::from_secs(10),
        format!("{cells} cells sum to 1, {sampled} draws within 3 sigma"),
    )
}

fn random_config(r: &mut RngStream) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.n_houses = 20 + r.next_index(300).unwrap();
    c.n_initial_infected = 1 + r.next_index(20).unwrap();
    c.beta = r.next_range(0.0, 0.01);
    c.ward_capacity = r.next_index(8).unwrap();
    c.hospital_prob = r.next_uniform();
    c.app = AppParams::new(r.next_uniform(), r.next_uniform(), r.next_uniform());
    c.max_days = 10 + r.next_index(36).unwrap() as u32;
    c
}

fn conservation() -> Outcome {
    let start = Instant::now();
    let mut r = derive_stream(2024, Domain::Init, 0);
    let mut days = 0;
    for run in 0..20u64 {
        let cfg = validate_config(random_config(&mut r)).map_err(|e| e.to_string())?;
        let population = cfg.population() as u32;
        let mut sim = Simulation::new(&cfg, run + 1, RunOptions::default());
        let mut prev: Option<cocoa_abm::DailyRecord> = None;
        while !sim.is_finished() {
            let rec = sim.run_day().clone();
            let c = rec.counts;
            let bad = |what: &str| Err(format!("run {run} day {}: {what}", rec.day));
            if c.total() != population {
                return bad("counts do not sum to the population");
            }
            if rec.hospitalized as usize > cfg.ward_capacity {
                return bad("wards over capacity");
            }
            if let Some(p) = &prev {
                if rec.n_ip < p.n_ip
                    || c.get(InfectionState::R) < p.counts.get(InfectionState::R)
                    || c.get(InfectionState::D) < p.counts.get(InfectionState::D)
                    || c.get(InfectionState::S) > p.counts.get(InfectionState::S)
                {
                    return bad("monotonicity violated");
                }
            }
            prev = Some(rec);
            days += 1;
        }
    }
    within(
        start.elapsed(),
        Duration::from_secs(60),
        format!("20 runs, {days} days checked"),
    )
}

fn series_bytes(cfg: &cocoa_abm::ValidConfig, seed: u64) -> Vec<u8> {
    let mut rows: Vec<cocoa_abm::engine::RunRow> = run_simulation(cfg, seed).rows().collect();
    for r in &mut rows {
        // Columns that describe the scenario or the app's own activity.
        r.p1 = 0.0;
        r.p2 = 0.0;
        r.p3 = 0.0;
        r.notifications_issued = 0;
    }
    let mut out = Vec::new();
    cocoa_abm::engine::write_rows(rows, &mut out).unwrap();
    out
}

fn baseline_equivalence(beta: f64) -> Outcome {
    let start = Instant::now();
    let base = ScenarioConfig::default().with_beta(beta);
    let baseline = validate_config(base.clone()).map_err(|e| e.to_string())?;
    for seed in 1..=5 {
        let reference = series_bytes(&baseline, seed);
        for app in [
            AppParams::new(0.0, 0.6, 1.0),
            AppParams::new(0.6, 0.0, 1.0),
            AppParams::new(0.6, 0.6, 0.0),
        ] {
            let cfg = validate_config(base.clone().with_app(app)).map_err(|e| e.to_string())?;
            if series_bytes(&cfg, seed) != reference {
                return Err(format!("seed {seed}, app {app:?} differs from baseline"));
            }
        }
    }
    within(
        start.elapsed(),
        Duration::from_secs(60),
        "5 seeds x 3 scenarios identical to (0,0,0)".into(),
    )
}

fn contact_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = validate_config(ScenarioConfig::default()).unwrap();
    let template = build_population(&cfg, 1).agents[0].clone();
    let mut r = derive_stream(404, Domain::Init, 0);
    let mut events = 0;
    for case in 0..500 {
        let n = r.next_index(201).unwrap();
        let side = r.next_range(0.5, 40.0);
        let radius = if case % 2 == 0 { 1.0 } else { r.next_range(0.1, 3.0) };
        let agents: Vec<Agent> = (0..n)
            .map(|id| {
                let state = InfectionState::ALL[r.next_index(5).unwrap()];
                let hospitalized = state == InfectionState::I && r.next_uniform() < 0.1;
                Agent {
                    id,
                    state,
                    hospitalized,
                    position: Point::new(100.0 + r.next_range(0.0, side), 100.0 + r.next_range(0.0, side)),
                    ..template.clone()
                }
            })
            .collect();
        let step = ClockTime::new(3).unwrap();
        let mut brute = Vec::new();
        for o in &agents {
            for i in &agents {
                let (dx, dy) = (i.position.x - o.position.x, i.position.y - o.position.y);
                if i.id != o.id
                    && i.state == InfectionState::I
                    && !i.hospitalized
                    && o.state != InfectionState::D
                    && !o.hospitalized
                    && (dx * dx + dy * dy).sqrt() <= radius
                {
                    brute.push((o.id, i.id));
                }
            }
        }
        let got: Vec<(usize, usize)> = contacts_for_step(&agents, radius, 1, step)
            .iter()
            .map(|e| (e.other_id, e.infector_id))
            .collect();
        if got != brute {
            return Err(format!(
                "case {case}: {} events vs {} brute force",
                got.len(),
                brute.len()
            ));
        }
        events += brute.len();
    }
    within(
        start.elapsed(),
        Duration::from_secs(30),
        format!("500 configurations, {events} events"),
    )
}

fn ols_oracle() -> Outcome {
    let mut r = derive_stream(505, Domain::Init, 0);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = 2 + r.next_index(60).unwrap();
        let ys: Vec<i64> = (0..n).map(|_| r.next_index(1001).unwrap() as i64 - 500).collect();
        let (mut st, mut stt, mut sy, mut sty) = (0i128, 0i128, 0i128, 0i128);
        for (k, &y) in ys.iter().enumerate() {
            let t = k as i128 + 2;
            st += t;
            stt += t * t;
            sy += y as i128;
            sty += t * y as i128;
        }
        let det = n as i128 * stt - st * st;
        let ow = (n as i128 * sty - st * sy) as f64 / det as f64;
        let ob = (stt * sy - st * sty) as f64 / det as f64;
        let xs: Vec<f64> = ys.iter().map(|&y| y as f64).collect();
        let (w, b) = fit_slope(&xs).map_err(|e| e.to_string())?;
        let rel = ((w - ow).abs() / ow.abs().max(1.0)).max((b - ob).abs() / ob.abs().max(1.0));
        worst = worst.max(rel);
        if rel > 1e-9 {
            return Err(format!("case {case}: ({w}, {b}) vs ({ow}, {ob})"));
        }
    }
    let examples = fit_slope(&[2.0, 2.0, 2.0, 2.0]).ok() == Some((0.0, 2.0))
        && fit_slope(&[2.0, 3.0, 4.0, 5.0]).ok() == Some((1.0, 0.0))
        && fit_slope(&[5.0, 4.0, 3.0, 2.0, 1.0]).ok().map(|f| f.0) == Some(-1.0);
    check(
        examples,
        format!("1000 series, worst relative error {worst:.1e}; worked examples exact: {examples}"),
    )
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(BIN)
        .args(args)
        .output()
        .map_err(|e| format!("cannot start {BIN}: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "{} failed: {}",
            args[0],
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn key_value(text: &str, key: &str) -> Option<f64> {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
        .and_then(|v| v.trim().parse().ok())
}

struct Calibrated {
    beta: f64,
    config: PathBuf,
}

fn calibration(dir: &Path, threads: &str) -> (Outcome, Option<Calibrated>) {
    let start = Instant::now();
    let config = dir.join("calibrated.json");
    let out = match cli(&[
        "calibrate",
        "--band",
        "5,10",
        "--seeds",
        "1..30",
        "--parallelism",
        threads,
        "--write-config",
        config.to_str().unwrap(),
    ]) {
        Ok(out) => out,
        Err(e) => return (Err(e), None),
    };
    let (Some(beta), Some(mean)) = (key_value(&out, "beta"), key_value(&out, "mean_final_n_ip")) else {
        return (Err(format!("unparseable output: {out}")), None);
    };
    let outcome = check(
        (50.0..=100.0).contains(&mean),
        format!(
            "beta = {beta} per step, mean baseline final n_ip = {mean:.2} of 999 over 30 seeds; {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    );
    (outcome, Some(Calibrated { beta, config }))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = fs::read_dir(&d) else { continue };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(bytes) = fs::read(&path) {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), bytes);
            }
        }
    }
    out
}

fn sweep(config: &Path, out: &Path, threads: &str) -> Result<Duration, String> {
    let start = Instant::now();
    cli(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--seeds",
        "1..30",
        "--parallelism",
        threads,
        "--out",
        out.to_str().unwrap(),
    ])?;
    Ok(start.elapsed())
}

fn determinism(a: &Path, b: &Path, ta: Duration, tb: Duration) -> Outcome {
    let (sa, sb) = (snapshot(a), snapshot(b));
    let runs = sa.keys().filter(|p| p.starts_with("runs")).count();
    if runs != 216 {
        return Err(format!("expected 216 scenario files, found {runs}"));
    }
    if sa != sb {
        let differing = sa.keys().filter(|k| sa.get(*k) != sb.get(*k)).count();
        return Err(format!("{differing} files differ between the two sweeps"));
    }
    within(
        ta.max(tb),
        Duration::from_secs(30 * 60),
        format!(
            "216 x 30 runs byte-identical twice ({} files); sweeps took {:.0}s and {:.0}s",
            sa.len(),
            ta.as_secs_f64(),
            tb.as_secs_f64()
        ),
    )
}

fn find(rows: &[SummaryRow], p1: f64, p2: f64, p3: f64) -> Option<&SummaryRow> {
    rows.iter()
        .find(|r| (r.p1 - p1).abs() < 1e-9 && (r.p2 - p2).abs() < 1e-9 && (r.p3 - p3).abs() < 1e-9)
}

fn trend_direction(rows: &[SummaryRow]) -> Outcome {
    let base = find(rows, 0.0, 0.0, 0.0).ok_or("no baseline row")?.mean_total_infected;
    let mut worst: Option<(f64, f64, f64)> = None;
    let mut cells = 0;
    for r in rows
        .iter()
        .filter(|r| r.p1 >= 0.4 - 1e-9 && r.p2 >= 0.4 - 1e-9 && r.p3 == 1.0)
    {
        cells += 1;
        if worst.is_none_or(|w| r.mean_total_infected > w.2) {
            worst = Some((r.p1, r.p2, r.mean_total_infected));
        }
    }
    let (p1, p2, highest) = worst.ok_or("no scenarios with p1, p2 >= 0.4 at p3 = 1")?;
    let line: Vec<&SummaryRow> = {
        let mut v: Vec<&SummaryRow> = rows.iter().filter(|r| r.p2 == 1.0 && r.p3 == 1.0).collect();
        v.sort_by(|a, b| a.p1.total_cmp(&b.p1));
        v
    };
    let xs: Vec<f64> = line.iter().map(|r| r.p1).collect();
    let ys: Vec<f64> = line.iter().map(|r| r.mean_total_infected).collect();
    let rho = spearman(&xs, &ys).map_err(|e| e.to_string())?;
    let curve: Vec<String> = ys.iter().map(|y| format!("{y:.1}")).collect();
    check(
        highest < base && rho <= -0.8,
        format!(
            "baseline {base:.2}; highest of {cells} cells with p1,p2 >= 0.4 at p3 = 1 is {highest:.2} at ({p1}, {p2}); \
             spearman along p1 at p2 = p3 = 1 is {rho:.3} [{}]",
            curve.join(", ")
        ),
    )
}

fn convergence(rows: &[SummaryRow]) -> Outcome {
    let picked: Vec<&SummaryRow> = rows
        .iter()
        .filter(|r| r.p1 >= 0.6 - 1e-9 && r.p2 >= 0.4 - 1e-9 && r.p3 >= 0.4 - 1e-9)
        .collect();
    println!("  p1    p2    p3    mean_w      mean_total_infected  label");
    for r in &picked {
        println!(
            "  {:<5} {:<5} {:<5} {:>+10.5}  {:>19.2}  {}",
            r.p1, r.p2, r.p3, r.mean_w, r.mean_total_infected, r.label
        );
    }
    let negative = picked.iter().filter(|r| r.mean_w < 0.0).count();
    if picked.is_empty() {
        return Err("no scenarios selected".into());
    }
    let share = negative as f64 / picked.len() as f64;
    check(
        share >= 0.75,
        format!(
            "{negative} of {} scenarios have mean w < 0 ({:.0}%)",
            picked.len(),
            share * 100.0
        ),
    )
}

fn exclusion_rule(results: &Path, analysis: &Path, rows: &[SummaryRow]) -> Outcome {
    let path = results.join("runs").join("p1_0.0000_p2_0.0000_p3_0.0000.csv");
    let file = fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let baseline = read_rows(file).map_err(|e| e.to_string())?;
    let mut finals: BTreeMap<u64, u32> = BTreeMap::new();
    for r in &baseline {
        finals.insert(r.seed, r.n_ip);
    }
    let expected: Vec<u64> = finals.iter().filter(|(_, &n)| n < 30).map(|(&s, _)| s).collect();

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(analysis.join("manifest.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let listed: Vec<u64> = serde_json::from_value(manifest["excluded_seeds"].clone()).map_err(|e| e.to_string())?;
    if listed != expected {
        return Err(format!("manifest lists {listed:?}, baseline finals give {expected:?}"));
    }
    let included = finals.len() - expected.len();
    if let Some(r) = rows.iter().find(|r| r.n_seeds != included) {
        return Err(format!(
            "scenario ({}, {}, {}) uses {} seeds, expected {included}",
            r.p1, r.p2, r.p3, r.n_seeds
        ));
    }

    // w.csv flags every run of an excluded seed, in every scenario.
    let w = fs::read_to_string(analysis.join("w.csv")).map_err(|e| e.to_string())?;
    let mut flagged = 0;
    for line in w.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let seed: u64 = cols[3].parse().map_err(|_| format!("bad w.csv line {line}"))?;
        let included_flag = cols[8] == "1";
        if included_flag == expected.contains(&seed) {
            return Err(format!("w.csv marks seed {seed} wrongly: {line}"));
        }
        flagged += usize::from(!included_flag);
    }
    let finals_of: Vec<String> = expected.iter().map(|s| format!("{s}:{}", finals[s])).collect();
    check(
        flagged == expected.len() * rows.len(),
        format!(
            "{} of {} seeds excluded [{}]; every scenario aggregates {included} seeds",
            expected.len(),
            finals.len(),
            finals_of.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let threads = std::env::var("COCOA_ABM_THREADS")
        .unwrap_or_else(|_| std::thread::available_parallelism().map_or(1, |n| n.get()).to_string());
    let work = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    let mut report = |n: u32, name: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL {n:>2} {name}: {detail}");
        }
    };

    report(1, "kernel exactness", kernel_exactness());
    report(2, "conservation and monotonicity", conservation());
    report(4, "contact oracle", contact_oracle());
    report(5, "OLS oracle", ols_oracle());

    let (outcome, calibrated) = calibration(work.path(), &threads);
    report(6, "calibration band", outcome);
    let Some(cal) = calibrated else {
        for (n, name) in [
            (3, "baseline bit-equivalence"),
            (7, "trend direction"),
            (8, "high-adoption convergence"),
            (9, "exclusion rule"),
            (10, "determinism and scale"),
        ] {
            report(n, name, Err("needs a calibrated beta".into()));
        }
        return ExitCode::FAILURE;
    };
    report(3, "baseline bit-equivalence", baseline_equivalence(cal.beta));

    let (a, b) = (work.path().join("sweep-a"), work.path().join("sweep-b"));
    let sweeps = sweep(&cal.config, &a, &threads).and_then(|ta| Ok((ta, sweep(&cal.config, &b, &threads)?)));
    let analysis = work.path().join("analysis");
    let rows = sweeps.clone().and_then(|_| {
        cli(&[
            "analyze",
            "--results",
            a.to_str().unwrap(),
            "--out",
            analysis.to_str().unwrap(),
        ])?;
        let text = fs::read(analysis.join("summary.csv")).map_err(|e| e.to_string())?;
        read_summary_csv(text.as_slice()).map_err(|e| e.to_string())
    });
    match &rows {
        Ok(rows) => {
            report(7, "trend direction", trend_direction(rows));
            report(8, "high-adoption convergence", convergence(rows));
            report(9, "exclusion rule", exclusion_rule(&a, &analysis, rows));
        }
        Err(e) => {
            for (n, name) in [
                (7, "trend direction"),
                (8, "high-adoption convergence"),
                (9, "exclusion rule"),
            ] {
                report(n, name, Err(e.clone()));
            }
        }
    }
    report(
        10,
        "determinism and scale",
        sweeps.and_then(|(ta, tb)| determinism(&a, &b, ta, tb)),
    );

    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
