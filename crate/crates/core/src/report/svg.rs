//! SVG rendering of a [`ChartSeries`] using only `rect`, `polyline` and `text`.

use std::fmt::Write;

use super::chart::ChartSeries;
use crate::fixed::Fixed;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 56.0;
const Y_TICKS: u32 = 5;

const STACK_COLORS: [&str; 9] =
    ["#4e79a7", "#a0cbe8", "#59a14f", "#8cd17d", "#b6992d", "#86bcb6", "#9d7660", "#d7b5a6", "#79706e"];

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Smallest 1/2/5 × 10^k at or above `v`.
fn nice_ceiling(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let magnitude = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * magnitude).find(|&c| c >= v).unwrap_or(10.0 * magnitude)
}

pub fn render_svg(chart: &ChartSeries) -> Vec<u8> {
    let n = chart.weeks.len().max(1);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let slot = plot_w / n as f64;

    let overlay_max =
        chart.overlays.lines().iter().flat_map(|(_, _, v)| v.iter()).map(|v| v.to_f64()).fold(0.0, f64::max);
    let total_max = chart.totals.iter().copied().max().unwrap_or(0) as f64;
    let y_max = nice_ceiling(overlay_max.max(total_max));
    let y = |v: f64| TOP + plot_h - (v / y_max) * plot_h;
    let x_center = |i: usize| LEFT + slot * (i as f64 + 0.5);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="22" font-size="14">{}</text>"#, escape(&chart.metric));

    // y axis with gridline ticks
    for t in 0..=Y_TICKS {
        let v = y_max * f64::from(t) / f64::from(Y_TICKS);
        let yy = y(v);
        let _ = writeln!(s, r##"<rect x="{LEFT:.2}" y="{yy:.2}" width="{plot_w:.2}" height="0.5" fill="#dddddd"/>"##);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, yy + 4.0, v);
    }
    let _ = writeln!(s, r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="1" height="{plot_h:.2}" fill="black"/>"#);
    let _ = writeln!(s, r#"<rect x="{LEFT:.2}" y="{:.2}" width="{plot_w:.2}" height="1" fill="black"/>"#, TOP + plot_h);

    // stacked weekly bars, one group per status with any non-zero count
    let bar_w = slot * 0.8;
    let mut base = vec![0u64; chart.weeks.len()];
    let mut legend: Vec<(String, &str)> = Vec::new();
    for (k, (status, counts)) in chart.stacks.iter().filter(|(_, c)| c.iter().any(|&v| v > 0)).enumerate() {
        let color = STACK_COLORS[k % STACK_COLORS.len()];
        let _ = writeln!(s, r#"<g class="stack" data-status="{}" fill="{color}">"#, escape(status));
        for (i, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let top = y((base[i] + count) as f64);
            let bottom = y(base[i] as f64);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{top:.2}" width="{bar_w:.2}" height="{:.2}"/>"#,
                x_center(i) - bar_w / 2.0,
                bottom - top
            );
            base[i] += count;
        }
        let _ = writeln!(s, "</g>");
        legend.push((status.clone(), color));
    }

    for (name, color, values) in chart.overlays.lines() {
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, v): (usize, &Fixed)| format!("{:.2},{:.2}", x_center(i), y(v.to_f64())))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="overlay" data-line="{name}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        legend.push((name.to_string(), color));
    }

    for (i, week) in chart.weeks.iter().enumerate() {
        if chart.x_labels.contains(week) {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">CW {:02}/{}</text>"#,
                x_center(i),
                TOP + plot_h + 18.0,
                week.week(),
                week.year()
            );
        }
    }

    let lx = WIDTH - RIGHT + 14.0;
    for (k, (label, color)) in legend.iter().enumerate() {
        let ly = TOP + 16.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{lx:.2}" y="{ly:.2}" width="10" height="10" fill="{color}"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 14.0, ly + 9.0, escape(label));
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}
