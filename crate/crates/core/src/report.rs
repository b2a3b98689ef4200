//! SVG step plots of CMC and ROC curves.
//!
//! One panel per condition, one `<path class="curve">` per model inside it.
//! Coordinates print with fixed precision so identical curves give
//! byte-identical files.

use std::fmt::Write as _;

use crate::metrics::{condition_label, CmcCurve, RocCurve};

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 44.0;
const LEGEND_H: f64 = 28.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Curves of several models under one condition.
#[derive(Debug, Clone)]
pub struct Panel<C> {
    pub condition: String,
    pub curves: Vec<(String, C)>,
}

struct Axes {
    x_label: &'static str,
    y_label: &'static str,
    x_min: f64,
    x_max: f64,
}

pub fn cmc_svg(panels: &[Panel<CmcCurve>]) -> String {
    let x_max = panels
        .iter()
        .flat_map(|p| p.curves.iter().map(|(_, c)| c.hit_rates.len()))
        .max()
        .unwrap_or(1)
        .max(2) as f64;
    let series = panels
        .iter()
        .map(|p| {
            let curves = p
                .curves
                .iter()
                .map(|(m, c)| (m.clone(), cmc_steps(c)))
                .collect();
            (p.condition.clone(), curves)
        })
        .collect::<Vec<_>>();
    render(
        &series,
        &Axes {
            x_label: "Rank",
            y_label: "Identification Rate",
            x_min: 1.0,
            x_max,
        },
    )
}

pub fn roc_svg(panels: &[Panel<RocCurve>]) -> String {
    let series = panels
        .iter()
        .map(|p| {
            let curves = p
                .curves
                .iter()
                .map(|(m, c)| (m.clone(), roc_steps(c)))
                .collect();
            (p.condition.clone(), curves)
        })
        .collect::<Vec<_>>();
    render(
        &series,
        &Axes {
            x_label: "FAR",
            y_label: "TAR",
            x_min: 0.0,
            x_max: 1.0,
        },
    )
}

/// Corners of the CMC staircase: flat over `[r, r + 1)`, rising at each
/// integer rank.
fn cmc_steps(c: &CmcCurve) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(2 * c.hit_rates.len());
    for (i, &h) in c.hit_rates.iter().enumerate() {
        let r = (i + 1) as f64;
        if let Some(&(_, prev)) = pts.last() {
            pts.push((r, prev));
        }
        pts.push((r, h));
    }
    pts
}

/// ROC staircase from `(0, 0)` to `(1, 1)` in decreasing threshold order,
/// moving horizontally before vertically at each point.
fn roc_steps(c: &RocCurve) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(2 * c.points.len());
    for p in c.points.iter().rev() {
        if let Some(&(_, prev_tar)) = pts.last() {
            pts.push((p.far, prev_tar));
        }
        pts.push((p.far, p.tar));
    }
    pts
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn render(panels: &[(String, Vec<(String, Vec<(f64, f64)>)>)], axes: &Axes) -> String {
    let width = PANEL_W * panels.len().max(1) as f64;
    let height = PANEL_H + LEGEND_H;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#);

    let mut models: Vec<&str> = Vec::new();
    for (_, curves) in panels {
        for (m, _) in curves {
            if !models.contains(&m.as_str()) {
                models.push(m);
            }
        }
    }
    let color = |m: &str| PALETTE[models.iter().position(|x| *x == m).unwrap_or(0) % PALETTE.len()];

    let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    for (k, (condition, curves)) in panels.iter().enumerate() {
        let x0 = k as f64 * PANEL_W + MARGIN_L;
        let y0 = MARGIN_T;
        let sx = |x: f64| x0 + (x - axes.x_min) / (axes.x_max - axes.x_min) * plot_w;
        let sy = |y: f64| y0 + (1.0 - y) * plot_h;
        let _ = writeln!(out, r#"<g class="panel" data-condition="{}">"#, escape(condition));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-weight="bold">{}</text>"#,
            x0 + plot_w / 2.0,
            MARGIN_T - 10.0,
            escape(condition_label(condition))
        );
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let y = sy(t);
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{t:.2}</text>"#,
                x0 - 4.0,
                x0 - 6.0,
                y + 4.0
            );
            let xv = axes.x_min + t * (axes.x_max - axes.x_min);
            let x = sx(xv);
            let label = if axes.x_min >= 1.0 {
                format!("{:.0}", xv.round())
            } else {
                format!("{xv:.2}")
            };
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
                y0 + plot_h,
                y0 + plot_h + 4.0,
                y0 + plot_h + 16.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text class="axis-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x0 + plot_w / 2.0,
            y0 + plot_h + 34.0,
            axes.x_label
        );
        let (lx, ly) = (x0 - 42.0, y0 + plot_h / 2.0);
        let _ = writeln!(
            out,
            r#"<text class="axis-label" x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
            axes.y_label
        );
        for (model, pts) in curves {
            let mut d = String::new();
            for (i, &(x, y)) in pts.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.3},{:.3}",
                    if i == 0 { "M" } else { " L" },
                    sx(x.clamp(axes.x_min, axes.x_max)),
                    sy(y)
                );
            }
            let _ = writeln!(
                out,
                r#"<path class="curve" data-model="{}" data-condition="{}" d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                escape(model),
                escape(condition),
                color(model)
            );
        }
        out.push_str("</g>\n");
    }

    let _ = writeln!(out, r#"<g class="legend">"#);
    for (i, m) in models.iter().enumerate() {
        let x = MARGIN_L + i as f64 * 110.0;
        let y = PANEL_H + LEGEND_H / 2.0;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 20.0,
            color(m),
            x + 24.0,
            y + 4.0,
            escape(m)
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}
