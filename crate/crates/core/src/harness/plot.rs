use std::fmt::Write as _;
use std::path::Path;

use super::summary::Series;
use super::HarnessError;
use crate::learner::ArchKind;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const LEFT: f64 = 50.0;
const RIGHT: f64 = 15.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 40.0;
const PLOT_W: f64 = PANEL_W - LEFT - RIGHT;
const PLOT_H: f64 = PANEL_H - TOP - BOTTOM;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Vertical position of accuracy `v` inside a panel; the axis spans `[0, 1]`.
fn y_of(v: f64) -> f64 {
    TOP + (1.0 - v.clamp(0.0, 1.0)) * PLOT_H
}

fn x_of(iter: u64, max_iter: u64) -> f64 {
    if max_iter == 0 {
        LEFT
    } else {
        LEFT + iter as f64 / max_iter as f64 * PLOT_W
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders one panel per architecture. Each series is drawn as its mean line
/// over a band of plus/minus two standard deviations.
pub fn render_svg(series: &[Series]) -> Result<String, HarnessError> {
    let series: Vec<&Series> = series.iter().filter(|s| !s.points.is_empty()).collect();
    if series.is_empty() {
        return Err(HarnessError::EmptyPlot);
    }
    let mut archs: Vec<ArchKind> = Vec::new();
    for s in &series {
        if !archs.contains(&s.arch) {
            archs.push(s.arch);
        }
    }
    archs.sort_by_key(|a| ArchKind::ALL.iter().position(|k| k == a));
    let mut labels: Vec<&str> = Vec::new();
    for s in &series {
        if !labels.contains(&s.label.as_str()) {
            labels.push(&s.label);
        }
    }
    let max_iter = series.iter().flat_map(|s| s.points.iter().map(|p| p.iter)).max().unwrap_or(0);
    let width = PANEL_W * archs.len() as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{PANEL_H}" fill="white"/>"#);
    for (p, arch) in archs.iter().enumerate() {
        let _ = writeln!(svg, r#"<g class="panel" data-arch="{arch}" transform="translate({},0)">"#, PANEL_W * p as f64);
        let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{arch}</text>"#, LEFT + PLOT_W / 2.0);
        let _ = writeln!(
            svg,
            r##"<rect x="{LEFT}" y="{TOP}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="#444"/>"##
        );
        for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let y = y_of(tick);
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{tick:.2}</text>"##,
                LEFT + PLOT_W,
                LEFT - 4.0,
                y + 4.0
            );
        }
        let base = TOP + PLOT_H;
        let _ = writeln!(svg, r#"<text x="{LEFT}" y="{}" text-anchor="middle">0</text>"#, base + 14.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{max_iter}</text>"#, LEFT + PLOT_W, base + 14.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#, LEFT + PLOT_W / 2.0, base + 30.0);

        for s in series.iter().filter(|s| s.arch == *arch) {
            let color = COLORS[labels.iter().position(|l| *l == s.label).unwrap_or(0) % COLORS.len()];
            let upper = s.points.iter().map(|q| (x_of(q.iter, max_iter), y_of(q.mean + 2.0 * q.std)));
            let lower = s.points.iter().rev().map(|q| (x_of(q.iter, max_iter), y_of(q.mean - 2.0 * q.std)));
            let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let mean: Vec<String> =
                s.points.iter().map(|q| format!("{:.2},{:.2}", x_of(q.iter, max_iter), y_of(q.mean))).collect();
            let label = escape(&s.label);
            let _ = writeln!(
                svg,
                r#"<polygon class="band" data-series="{label}" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.join(" ")
            );
            let _ = writeln!(
                svg,
                r#"<polyline class="mean" data-series="{label}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                mean.join(" ")
            );
            if s.points.len() == 1 {
                let q = s.points[0];
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    x_of(q.iter, max_iter),
                    y_of(q.mean)
                );
            }
        }
        if labels.len() > 1 {
            for (i, l) in labels.iter().enumerate() {
                let y = TOP + PLOT_H - 8.0 - 14.0 * (labels.len() - 1 - i) as f64;
                let _ = writeln!(
                    svg,
                    r#"<text x="{}" y="{y}" text-anchor="end" fill="{}">{}</text>"#,
                    LEFT + PLOT_W - 6.0,
                    COLORS[i % COLORS.len()],
                    escape(l)
                );
            }
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(series: &[Series], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let svg = render_svg(series)?;
    std::fs::write(path, svg).map_err(|e| HarnessError::io(path, e))
}
