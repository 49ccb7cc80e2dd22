//! SVG figures. Output depends only on the input rows, so re-rendering the
//! same summary gives identical bytes.

use std::fmt::Write;

use cocoa_abm::analysis::{HeatmapGrid, SummaryRow};

use crate::percent_label;

const CELL: f64 = 64.0;
const LEFT: f64 = 80.0;
const TOP: f64 = 56.0;
const BOTTOM: f64 = 64.0;
const RIGHT: f64 = 24.0;

/// White at `lo`, red at `hi`.
pub fn heat_color(v: f64, lo: f64, hi: f64) -> String {
    let t = if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let g = (255.0 * (1.0 - t)).round() as u8;
    format!("#ff{g:02x}{g:02x}")
}

/// Cell text: the value rounded to an integer.
pub fn cell_label(v: f64) -> String {
    let r = v.round();
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r:.0}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, width: f64, height: f64) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#).unwrap();
}

fn text(out: &mut String, x: f64, y: f64, anchor: &str, extra: &str, body: &str) {
    writeln!(
        out,
        r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}"{extra}>{}</text>"#,
        escape(body)
    )
    .unwrap();
}

/// Mean total infected over (p1, p2) at one p3. p1 runs left to right
/// ascending, p2 top to bottom descending.
pub fn heatmap_svg(grid: &HeatmapGrid) -> String {
    let cols = grid.p1.len() as f64;
    let rows = grid.p2.len() as f64;
    let width = LEFT + cols * CELL + RIGHT;
    let height = TOP + rows * CELL + BOTTOM;
    let (lo, hi) = grid.range().unwrap_or((0.0, 0.0));
    let mut out = String::new();
    header(&mut out, width, height);
    text(
        &mut out,
        width / 2.0,
        24.0,
        "middle",
        r#" font-size="14""#,
        &format!("Mean total infected, p3 = {}%", percent_label(grid.p3)),
    );
    for (r, row) in grid.values.iter().enumerate() {
        let y = TOP + r as f64 * CELL;
        for (c, v) in row.iter().enumerate() {
            let x = LEFT + c as f64 * CELL;
            let fill = v.map_or_else(|| "#dddddd".to_string(), |v| heat_color(v, lo, hi));
            writeln!(
                out,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{CELL:.1}" height="{CELL:.1}" fill="{fill}" stroke="#999999"/>"##
            )
            .unwrap();
            if let Some(v) = v {
                let dark = hi > lo && (v - lo) / (hi - lo) > 0.6;
                let fg = if dark { r#" fill="white""# } else { "" };
                text(
                    &mut out,
                    x + CELL / 2.0,
                    y + CELL / 2.0 + 4.0,
                    "middle",
                    fg,
                    &cell_label(*v),
                );
            }
        }
    }
    for (c, p1) in grid.p1.iter().enumerate() {
        let x = LEFT + (c as f64 + 0.5) * CELL;
        text(&mut out, x, TOP + rows * CELL + 18.0, "middle", "", &percent_label(*p1));
    }
    for (r, p2) in grid.p2.iter().enumerate() {
        let y = TOP + (r as f64 + 0.5) * CELL + 4.0;
        text(&mut out, LEFT - 8.0, y, "end", "", &percent_label(*p2));
    }
    text(
        &mut out,
        LEFT + cols * CELL / 2.0,
        height - 16.0,
        "middle",
        "",
        "p1: app usage rate (%)",
    );
    let cy = TOP + rows * CELL / 2.0;
    text(
        &mut out,
        20.0,
        cy,
        "middle",
        &format!(r#" transform="rotate(-90 20 {cy:.1})""#),
        "p2: outing reduction (%)",
    );
    out.push_str("</svg>\n");
    out
}

/// Mean w of every scenario sharing one p1, grouped by p2.
#[derive(Debug, Clone, PartialEq)]
pub struct WChart {
    pub p1: f64,
    /// p2 values, ascending.
    pub p2: Vec<f64>,
    /// p3 values, ascending.
    pub p3: Vec<f64>,
    /// `bars[i][j]` is the mean w at (p2[i], p3[j]).
    pub bars: Vec<Vec<Option<f64>>>,
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn w_charts(rows: &[SummaryRow]) -> Vec<WChart> {
    distinct(rows.iter().map(|r| r.p1).collect())
        .into_iter()
        .map(|p1| {
            let at: Vec<&SummaryRow> = rows.iter().filter(|r| r.p1 == p1).collect();
            let p2 = distinct(at.iter().map(|r| r.p2).collect());
            let p3 = distinct(at.iter().map(|r| r.p3).collect());
            let bars = p2
                .iter()
                .map(|&y| {
                    p3.iter()
                        .map(|&z| at.iter().find(|r| r.p2 == y && r.p3 == z).map(|r| r.mean_w))
                        .collect()
                })
                .collect();
            WChart { p1, p2, p3, bars }
        })
        .collect()
}

fn shade(j: usize, n: usize) -> String {
    let t = if n > 1 { j as f64 / (n - 1) as f64 } else { 1.0 };
    let r = (200.0 - 170.0 * t).round() as u8;
    let g = (220.0 - 140.0 * t).round() as u8;
    format!("#{r:02x}{g:02x}ff")
}

pub fn w_chart_svg(chart: &WChart) -> String {
    const BAR: f64 = 10.0;
    const GAP: f64 = 16.0;
    const PLOT_H: f64 = 260.0;
    let n3 = chart.p3.len().max(1) as f64;
    let group_w = n3 * BAR + GAP;
    let plot_w = chart.p2.len() as f64 * group_w;
    let legend_w = 110.0;
    let width = LEFT + plot_w + legend_w + RIGHT;
    let height = TOP + PLOT_H + BOTTOM;

    let values: Vec<f64> = chart.bars.iter().flatten().flatten().copied().collect();
    let lo = values.iter().copied().fold(0.0_f64, f64::min);
    let hi = values.iter().copied().fold(0.0_f64, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let y_of = |v: f64| TOP + (hi - v) / (hi - lo) * PLOT_H;

    let mut out = String::new();
    header(&mut out, width, height);
    text(
        &mut out,
        LEFT + plot_w / 2.0,
        24.0,
        "middle",
        r#" font-size="14""#,
        &format!("Mean trend slope w, p1 = {}%", percent_label(chart.p1)),
    );
    for (i, row) in chart.bars.iter().enumerate() {
        let gx = LEFT + i as f64 * group_w + GAP / 2.0;
        for (j, v) in row.iter().enumerate() {
            let Some(v) = v else { continue };
            let x = gx + j as f64 * BAR;
            let (top, bottom) = if *v >= 0.0 {
                (y_of(*v), y_of(0.0))
            } else {
                (y_of(0.0), y_of(*v))
            };
            writeln!(
                out,
                r#"<rect x="{x:.1}" y="{top:.2}" width="{BAR:.1}" height="{:.2}" fill="{}"/>"#,
                bottom - top,
                shade(j, chart.p3.len())
            )
            .unwrap();
        }
        text(
            &mut out,
            gx + n3 * BAR / 2.0,
            TOP + PLOT_H + 18.0,
            "middle",
            "",
            &percent_label(chart.p2[i]),
        );
    }
    let zero = y_of(0.0);
    writeln!(
        out,
        r##"<line x1="{LEFT:.1}" y1="{zero:.2}" x2="{:.1}" y2="{zero:.2}" stroke="#333333"/>"##,
        LEFT + plot_w
    )
    .unwrap();
    writeln!(
        out,
        r##"<line x1="{LEFT:.1}" y1="{TOP:.1}" x2="{LEFT:.1}" y2="{:.1}" stroke="#333333"/>"##,
        TOP + PLOT_H
    )
    .unwrap();
    for v in [lo, 0.0, hi] {
        text(&mut out, LEFT - 6.0, y_of(v) + 4.0, "end", "", &format!("{v:.3}"));
    }
    text(
        &mut out,
        LEFT + plot_w / 2.0,
        height - 16.0,
        "middle",
        "",
        "p2: outing reduction (%)",
    );
    let lx = LEFT + plot_w + 16.0;
    for (j, p3) in chart.p3.iter().enumerate() {
        let ly = TOP + j as f64 * 18.0;
        writeln!(
            out,
            r#"<rect x="{lx:.1}" y="{ly:.1}" width="12" height="12" fill="{}"/>"#,
            shade(j, chart.p3.len())
        )
        .unwrap();
        text(
            &mut out,
            lx + 18.0,
            ly + 10.0,
            "start",
            "",
            &format!("p3 = {}%", percent_label(*p3)),
        );
    }
    out.push_str("</svg>\n");
    out
}
