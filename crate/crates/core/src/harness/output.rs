//! `results.csv` and `plot.svg` writers.

use std::fmt::Write as _;
use std::path::Path;

use super::{ExperimentResult, SweepResult};
use crate::error::Result;

pub const CSV_HEADER: &str =
    "estimator,parameter,value,nmse,stderr,trials,excluded,mean_iters,mean_seconds,nmse_mean_of_ratios";

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".into()
    }
}

fn push_rows(out: &mut String, parameter: &str, value: Option<f64>, res: &ExperimentResult) {
    for e in &res.estimators {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            e.name,
            parameter,
            value.map_or_else(|| "NA".into(), num),
            num(e.nmse),
            num(e.stderr),
            e.trials,
            e.excluded,
            num(e.mean_iters),
            e.mean_seconds.map_or_else(|| "NA".into(), num),
            num(e.nmse_mean_of_ratios),
        );
    }
}

pub fn experiment_csv(res: &ExperimentResult) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    push_rows(&mut out, "none", None, res);
    out
}

pub fn sweep_csv(sw: &SweepResult) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for (v, res) in &sw.points {
        push_rows(&mut out, sw.param.as_str(), Some(*v), res);
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Line chart of NMSE (log scale) against the swept parameter.
pub fn sweep_svg(sw: &SweepResult) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 190.0, 30.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let xs: Vec<f64> = sw.points.iter().map(|(v, _)| *v).collect();
    let (mut x0, mut x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if x0 == x1 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let ys = sw
        .points
        .iter()
        .flat_map(|(_, r)| r.estimators.iter().map(|e| e.nmse))
        .filter(|v| v.is_finite() && *v > 0.0);
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (mut d0, mut d1) = if lo.is_finite() {
        (lo.log10().floor(), hi.log10().ceil())
    } else {
        (-1.0, 0.0)
    };
    if d0 == d1 {
        d0 -= 1.0;
        d1 += 1.0;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (d1 - y.log10()) / (d1 - d0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut d = d0;
    while d <= d1 {
        let y = py(10f64.powf(d));
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
        d += 1.0;
    }
    for &x in &xs {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            px(x),
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 10.0,
        sw.param.as_str()
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">NMSE</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    let names: Vec<&str> = sw
        .points
        .first()
        .map(|(_, r)| r.estimators.iter().map(|e| e.name.as_str()).collect())
        .unwrap_or_default();
    for (k, name) in names.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = sw
            .points
            .iter()
            .filter_map(|(x, r)| r.get(name).map(|e| (*x, e.nmse)))
            .filter(|(_, y)| y.is_finite() && *y > 0.0)
            .map(|(x, y)| (px(x), py(y)))
            .collect();
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for (x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 10.0 + 18.0 * k as f64;
        let lx = left + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{name}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_experiment(dir: &Path, res: &ExperimentResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), experiment_csv(res))?;
    Ok(())
}

pub fn write_sweep(dir: &Path, sw: &SweepResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), sweep_csv(sw))?;
    std::fs::write(dir.join("plot.svg"), sweep_svg(sw))?;
    Ok(())
}
