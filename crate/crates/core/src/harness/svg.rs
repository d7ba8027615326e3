//! Self-contained SVG line chart of a simulation result.

use std::fmt::Write;

use super::sim::SimResult;

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// MSE of each estimator and the two bound traces against `ν`, both axes logarithmic.
pub fn render(result: &SimResult) -> String {
    let mut series: Vec<Series> = Vec::new();
    for c in &result.cells {
        if !(c.mse > 0.0) || !c.mse.is_finite() {
            continue;
        }
        match series.iter_mut().find(|s| s.label == c.estimator) {
            Some(s) => s.points.push((c.nu, c.mse)),
            None => series.push(Series { label: c.estimator.clone(), points: vec![(c.nu, c.mse)], dashed: false }),
        }
    }
    series.push(Series {
        label: "SCRB".into(),
        points: result.bounds.iter().map(|b| (b.nu, b.scrb_trace)).collect(),
        dashed: true,
    });
    series.push(Series {
        label: "CRB (param.)".into(),
        points: result.bounds.iter().map(|b| (b.nu, b.crb_param_trace)).collect(),
        dashed: true,
    });

    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).filter(|p| p.1 > 0.0).collect();
    let (x0, x1) = bounds(all.iter().map(|p| p.0.log10()));
    let (y0, y1) = bounds(all.iter().map(|p| p.1.log10()));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x.log10() - x0) / (x1 - x0).max(1e-12) * pw;
    let sy = |y: f64| TOP + ph - (y.log10() - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Shape MSE, m = {}, n = {}, scale {} ({} trials)</text>"#,
        LEFT + pw / 2.0,
        result.m,
        result.n,
        result.scale_kind.name(),
        result.trials
    );
    let _ = writeln!(out, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    for d in (y0 as i32)..=(y1 as i32) {
        let y = sy(10f64.powi(d));
        let _ = writeln!(out, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{d}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let mut ticks: Vec<f64> = result.bounds.iter().map(|b| b.nu).collect();
    ticks.dedup();
    for nu in ticks {
        let x = sx(nu);
        let _ = writeln!(out, r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{:.1}" stroke="#eee"/>"##, TOP + ph);
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{nu}</text>"#, TOP + ph + 18.0);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">nu</text>"#, LEFT + pw / 2.0, H - 15.0);
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">MSE</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = if s.dashed { "#000" } else { PALETTE[i % PALETTE.len()] };
        let dash = if s.dashed { if s.label == "SCRB" { r#" stroke-dasharray="6 4""# } else { r#" stroke-dasharray="2 3""# } } else { "" };
        let pts: Vec<String> = s.points.iter().filter(|p| p.1 > 0.0).map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#, pts.join(" "));
        if !s.dashed {
            for p in s.points.iter().filter(|p| p.1 > 0.0) {
                let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(p.0), sy(p.1));
            }
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 14.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.8"{dash}/>"#, lx + 24.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}
