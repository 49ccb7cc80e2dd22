//! Trend analysis of cumulative infection counts and aggregation over seeds.
//!
//! A run's N_IP series gives daily increments Δ(t) = N_IP(t) − N_IP(t−1) for
//! t = 2..T. A least-squares line Δ ≈ w·t + b is fit per run; the sign of `w`
//! (outside a dead-band of ±ε) labels growth as exponential, linear or
//! logarithmic. Scenario summaries average the final N_IP and `w` over the
//! seeds not excluded by the baseline rule.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

use crate::domain::AppParams;
use crate::engine::{RunResult, RunRow};

/// Baseline runs ending below this many ever-infected agents are excluded.
pub const DEFAULT_EXCLUSION_THRESHOLD: u32 = 30;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("series needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("abscissae and ordinates differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("all abscissae are equal")]
    Degenerate,
    #[error("scenario ({p1}, {p2}, {p3}) has no included seeds")]
    NoIncludedSeeds { p1: f64, p2: f64, p3: f64 },
    #[error("scenario ({p1}, {p2}, {p3}) has seeds {found:?}, expected {expected:?}")]
    SeedMismatch {
        p1: f64,
        p2: f64,
        p3: f64,
        found: Vec<u64>,
        expected: Vec<u64>,
    },
    #[error("seed {seed} of scenario ({p1}, {p2}, {p3}) appears twice")]
    DuplicateRun { p1: f64, p2: f64, p3: f64, seed: u64 },
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("no baseline runs: the grid must include p1 = p2 = p3 = 0")]
    NoBaseline,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GrowthLabel {
    Exponential,
    Linear,
    Logarithmic,
}

impl GrowthLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            GrowthLabel::Exponential => "exponential",
            GrowthLabel::Linear => "linear",
            GrowthLabel::Logarithmic => "logarithmic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exponential" => Some(GrowthLabel::Exponential),
            "linear" => Some(GrowthLabel::Linear),
            "logarithmic" => Some(GrowthLabel::Logarithmic),
            _ => None,
        }
    }
}

impl fmt::Display for GrowthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendFit {
    pub w: f64,
    pub b: f64,
    pub label: GrowthLabel,
}

/// Δ(t) = N_IP(t) − N_IP(t−1); the output is one shorter than the input.
pub fn daily_increments(series: &[u32]) -> Result<Vec<i64>, AnalysisError> {
    if series.len() < 2 {
        return Err(AnalysisError::TooShort(series.len()));
    }
    Ok(series.windows(2).map(|w| i64::from(w[1]) - i64::from(w[0])).collect())
}

/// Ordinary least squares `y ≈ w·x + b`, returned as `(w, b)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::TooShort(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(AnalysisError::Degenerate);
    }
    let w = sxy / sxx;
    Ok((w, my - w * mx))
}

/// Fits `Δ(t) ≈ w·t + b` where `increments[k]` is Δ at day `t = k + 2`.
pub fn fit_slope(increments: &[f64]) -> Result<(f64, f64), AnalysisError> {
    let ts: Vec<f64> = (0..increments.len()).map(|k| (k + 2) as f64).collect();
    fit_line(&ts, increments)
}

pub fn classify_growth(w: f64, epsilon: f64) -> GrowthLabel {
    if w > epsilon {
        GrowthLabel::Exponential
    } else if w < -epsilon {
        GrowthLabel::Logarithmic
    } else {
        GrowthLabel::Linear
    }
}

/// Increments, slope fit and label for one N_IP series.
pub fn trend_fit(n_ip: &[u32], epsilon: f64) -> Result<TrendFit, AnalysisError> {
    let inc: Vec<f64> = daily_increments(n_ip)?.into_iter().map(|d| d as f64).collect();
    let (w, b) = fit_slope(&inc)?;
    Ok(TrendFit {
        w,
        b,
        label: classify_growth(w, epsilon),
    })
}

/// The part of a run that analysis needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub app: AppParams,
    pub seed: u64,
    pub n_ip: Vec<u32>,
}

impl RunSeries {
    pub fn final_n_ip(&self) -> u32 {
        self.n_ip.last().copied().unwrap_or(0)
    }

    /// Groups CSV rows into runs, ordered by scenario then seed, with days in
    /// ascending order.
    pub fn from_rows(rows: &[RunRow]) -> Vec<RunSeries> {
        let mut runs: BTreeMap<(ScenarioKey, u64), Vec<(u32, u32)>> = BTreeMap::new();
        for r in rows {
            let app = AppParams::new(r.p1, r.p2, r.p3);
            runs.entry((ScenarioKey(app), r.seed))
                .or_default()
                .push((r.day, r.n_ip));
        }
        runs.into_iter()
            .map(|((key, seed), mut days)| {
                days.sort_unstable();
                RunSeries {
                    app: key.0,
                    seed,
                    n_ip: days.into_iter().map(|(_, n)| n).collect(),
                }
            })
            .collect()
    }
}

impl From<&RunResult> for RunSeries {
    fn from(r: &RunResult) -> Self {
        RunSeries {
            app: r.app,
            seed: r.seed,
            n_ip: r.n_ip_series(),
        }
    }
}

/// Orders scenarios lexicographically by (p1, p2, p3).
#[derive(Debug, Clone, Copy)]
pub struct ScenarioKey(pub AppParams);

impl ScenarioKey {
    fn tuple(&self) -> [f64; 3] {
        [self.0.usage_rate, self.0.outing_reduction, self.0.registration_rate]
    }
}

impl PartialEq for ScenarioKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ScenarioKey {}

impl PartialOrd for ScenarioKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScenarioKey {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.tuple(), other.tuple());
        a.iter()
            .zip(&b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

/// Seeds whose baseline run ends with final N_IP strictly below `threshold`,
/// ascending.
pub fn exclusion_set<'a>(baseline_runs: impl IntoIterator<Item = &'a RunSeries>, threshold: u32) -> Vec<u64> {
    let mut seeds: Vec<u64> = baseline_runs
        .into_iter()
        .filter(|r| r.final_n_ip() < threshold)
        .map(|r| r.seed)
        .collect();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
}

/// Applies [`exclusion_set`] to the `app = (0,0,0)` runs among `runs`.
pub fn baseline_exclusions(runs: &[RunSeries], threshold: u32) -> Result<Vec<u64>, AnalysisError> {
    let baseline: Vec<&RunSeries> = runs.iter().filter(|r| r.app.is_baseline()).collect();
    if baseline.is_empty() {
        return Err(AnalysisError::NoBaseline);
    }
    Ok(exclusion_set(baseline, threshold))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub app: AppParams,
    pub mean_total_infected: f64,
    /// Population standard deviation over included seeds.
    pub std_total_infected: f64,
    pub mean_w: f64,
    pub label: GrowthLabel,
    pub n_seeds_included: usize,
    pub excluded_seeds: Vec<u64>,
}

/// Per-run slope, kept for the full `w` table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrend {
    pub app: AppParams,
    pub seed: u64,
    pub final_n_ip: u32,
    pub fit: TrendFit,
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub scenarios: Vec<ScenarioSummary>,
    pub runs: Vec<RunTrend>,
    pub excluded_seeds: Vec<u64>,
}

/// Aggregates runs per scenario over seeds not in `excluded`. Scenarios come
/// out in lexicographic (p1, p2, p3) order; the result does not depend on the
/// order of `results`.
pub fn aggregate(results: &[RunSeries], excluded: &[u64], epsilon: f64) -> Result<SweepSummary, AnalysisError> {
    let mut by_scenario: BTreeMap<ScenarioKey, Vec<&RunSeries>> = BTreeMap::new();
    for r in results {
        by_scenario.entry(ScenarioKey(r.app)).or_default().push(r);
    }
    if by_scenario.is_empty() {
        return Err(AnalysisError::NoRuns);
    }
    let mut excluded = excluded.to_vec();
    excluded.sort_unstable();
    excluded.dedup();

    let mut expected_seeds: Option<Vec<u64>> = None;
    let mut scenarios = Vec::with_capacity(by_scenario.len());
    let mut trends = Vec::with_capacity(results.len());
    for (key, mut runs) in by_scenario {
        let [p1, p2, p3] = key.tuple();
        runs.sort_by_key(|r| r.seed);
        let seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
        if let Some(w) = seeds.windows(2).find(|w| w[0] == w[1]) {
            return Err(AnalysisError::DuplicateRun { p1, p2, p3, seed: w[0] });
        }
        match &expected_seeds {
            None => expected_seeds = Some(seeds.clone()),
            Some(expected) if *expected != seeds => {
                return Err(AnalysisError::SeedMismatch {
                    p1,
                    p2,
                    p3,
                    found: seeds,
                    expected: expected.clone(),
                })
            }
            Some(_) => {}
        }

        let mut finals = Vec::new();
        let mut ws = Vec::new();
        let mut scenario_excluded = Vec::new();
        for r in runs {
            let fit = trend_fit(&r.n_ip, epsilon)?;
            let included = excluded.binary_search(&r.seed).is_err();
            if included {
                finals.push(f64::from(r.final_n_ip()));
                ws.push(fit.w);
            } else {
                scenario_excluded.push(r.seed);
            }
            trends.push(RunTrend {
                app: r.app,
                seed: r.seed,
                final_n_ip: r.final_n_ip(),
                fit,
                included,
            });
        }
        if finals.is_empty() {
            return Err(AnalysisError::NoIncludedSeeds { p1, p2, p3 });
        }
        let mean = mean(&finals);
        let mean_w = self::mean(&ws);
        scenarios.push(ScenarioSummary {
            app: key.0,
            mean_total_infected: mean,
            std_total_infected: population_std(&finals, mean),
            mean_w,
            label: classify_growth(mean_w, epsilon),
            n_seeds_included: finals.len(),
            excluded_seeds: scenario_excluded,
        });
    }
    Ok(SweepSummary {
        scenarios,
        runs: trends,
        excluded_seeds: excluded,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64], mean: f64) -> f64 {
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks). `NaN`
/// if either input is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::TooShort(xs.len()));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, my) = (mean(&rx), mean(&ry));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub mean_total_infected: f64,
    pub std_total_infected: f64,
    pub mean_w: f64,
    pub label: GrowthLabel,
    pub n_seeds: usize,
}

impl From<&ScenarioSummary> for SummaryRow {
    fn from(s: &ScenarioSummary) -> Self {
        SummaryRow {
            p1: s.app.usage_rate,
            p2: s.app.outing_reduction,
            p3: s.app.registration_rate,
            mean_total_infected: s.mean_total_infected,
            std_total_infected: s.std_total_infected,
            mean_w: s.mean_w,
            label: s.label,
            n_seeds: s.n_seeds_included,
        }
    }
}

impl SummaryRow {
    pub fn app(&self) -> AppParams {
        AppParams::new(self.p1, self.p2, self.p3)
    }
}

impl Serialize for GrowthLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for GrowthLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        GrowthLabel::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown growth label {s:?}")))
    }
}

pub fn write_summary_csv<W: io::Write>(scenarios: &[ScenarioSummary], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in scenarios {
        w.serialize(SummaryRow::from(s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: io::Read>(input: R) -> csv::Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Per-run slopes: `p1,p2,p3,seed,final_n_ip,w,b,label,included`.
pub fn write_w_csv<W: io::Write>(runs: &[RunTrend], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p1", "p2", "p3", "seed", "final_n_ip", "w", "b", "label", "included"])?;
    for r in runs {
        w.write_record([
            r.app.usage_rate.to_string(),
            r.app.outing_reduction.to_string(),
            r.app.registration_rate.to_string(),
            r.seed.to_string(),
            r.final_n_ip.to_string(),
            r.fit.w.to_string(),
            r.fit.b.to_string(),
            r.fit.label.to_string(),
            u8::from(r.included).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean total infected over the (p1, p2) plane at one p3: columns are p1
/// ascending, rows p2 descending.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub p3: f64,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    /// `values[row][col]`; `None` where the summary has no such scenario.
    pub values: Vec<Vec<Option<f64>>>,
}

impl HeatmapGrid {
    pub fn from_summary(rows: &[SummaryRow], p3: f64) -> Self {
        let at: Vec<&SummaryRow> = rows.iter().filter(|r| r.p3 == p3).collect();
        let mut p1: Vec<f64> = at.iter().map(|r| r.p1).collect();
        p1.sort_by(f64::total_cmp);
        p1.dedup();
        let mut p2: Vec<f64> = at.iter().map(|r| r.p2).collect();
        p2.sort_by(|a, b| b.total_cmp(a));
        p2.dedup();
        let values = p2
            .iter()
            .map(|&y| {
                p1.iter()
                    .map(|&x| {
                        at.iter()
                            .find(|r| r.p1 == x && r.p2 == y)
                            .map(|r| r.mean_total_infected)
                    })
                    .collect()
            })
            .collect();
        HeatmapGrid { p3, p1, p2, values }
    }

    /// Distinct p3 values present in `rows`, ascending.
    pub fn p3_values(rows: &[SummaryRow]) -> Vec<f64> {
        let mut v: Vec<f64> = rows.iter().map(|r| r.p3).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        let mut it = self.values.iter().flatten().flatten().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["p2\\p1".to_string()];
        header.extend(self.p1.iter().map(f64::to_string));
        w.write_record(&header)?;
        for (y, row) in self.p2.iter().zip(&self.values) {
            let mut rec = vec![y.to_string()];
            rec.extend(row.iter().map(|v| v.map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
