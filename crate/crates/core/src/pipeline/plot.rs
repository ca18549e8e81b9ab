//! Minimal self-contained SVG line charts.

use std::fmt::Write;

use crate::scalar::Real;
use crate::series::TimeSeries;

pub struct PlotSeries<'a, T: Real> {
    pub name: &'a str,
    pub series: &'a TimeSeries<T>,
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 72.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the series on a shared calendar axis. Non-finite values break the line.
pub fn line_chart_svg<T: Real>(title: &str, series: &[PlotSeries<'_, T>]) -> String {
    let spans: Vec<_> = series.iter().filter_map(|s| s.series.span()).collect();
    let first = spans.iter().map(|s| s.start).min();
    let last = spans.iter().map(|s| s.end).max();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for v in s.series.values.iter().map(|v| v.as_f64()).filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (Some(first), Some(last)) = (first, last) else {
        out.push_str("</svg>\n");
        return out;
    };
    if !(lo < hi) {
        lo -= 1.0;
        hi += 1.0;
    }
    let months = (last.months_since(first).max(1)) as f64;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let x_of = |offset: f64| LEFT + pw * offset / months;
    let y_of = |v: f64| TOP + ph * (hi - v) / (hi - lo);

    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            v
        );
    }
    let step = ((last.year() - first.year()) / 10).max(1);
    let mut year = first.year() + i32::from(first.month() != 1);
    while year <= last.year() {
        let m: crate::series::Month = format!("{year:04}-01").parse().expect("valid month");
        let x = x_of(m.months_since(first) as f64);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{:.1}" stroke="#eee"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{year}</text>"##,
            TOP + ph,
            TOP + ph + 16.0
        );
        year += step;
    }
    for (k, s) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let per = s.series.frequency.months_per_period() as f64;
        let base = s.series.start.months_since(first) as f64;
        let mut path = String::new();
        let mut pen_down = false;
        for (i, v) in s.series.values.iter().enumerate() {
            let v = v.as_f64();
            if !v.is_finite() {
                pen_down = false;
                continue;
            }
            let x = x_of(base + i as f64 * per + (per - 1.0) / 2.0);
            let _ = write!(path, "{}{x:.1},{:.1} ", if pen_down { "L" } else { "M" }, y_of(v));
            pen_down = true;
        }
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="1.6"/>"#,
            path.trim_end()
        );
        let lx = LEFT + 10.0 + 180.0 * k as f64;
        let ly = HEIGHT - 20.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}
