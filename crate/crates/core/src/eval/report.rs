//! `report.csv` and `comparison.svg` output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::protocol::{EvalReport, Method, ReportRow};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = ["method", "horizon_m", "n", "mean", "median", "p25", "p75"];

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.horizon_m.to_string(),
            r.n.to_string(),
            r.mean.to_string(),
            r.median.to_string(),
            r.p25.to_string(),
            r.p75.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        let bad = |m: &str| Error::Parse {
            line,
            message: m.to_string(),
        };
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(&format!("bad {}", CSV_HEADER[i])))
        };
        rows.push(ReportRow {
            method: rec
                .get(0)
                .and_then(Method::parse)
                .ok_or_else(|| bad("unknown method"))?,
            horizon_m: num(1)?,
            n: rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad n"))?,
            mean: num(3)?,
            median: num(4)?,
            p25: num(5)?,
            p75: num(6)?,
        });
    }
    Ok(rows)
}

const COLORS: [(Method, &str); 3] = [
    (Method::GraphTop1, "#1f77b4"),
    (Method::GraphExpected, "#2ca02c"),
    (Method::Cyra, "#d62728"),
];

/// Mean error against horizon per method, with the 25/75 percentile band shaded.
pub fn render_svg(rows: &[ReportRow]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let x_max = rows.iter().map(|r| r.horizon_m).fold(0.0, f64::max).max(1.0);
    let y_max = rows.iter().map(|r| r.p75.max(r.mean)).fold(0.0, f64::max).max(1e-6) * 1.1;
    let sx = |x: f64| pad + x / x_max * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - y / y_max * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{0}" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    for k in 0..=4 {
        let y = y_max * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y:.2}</text>"#,
            pad - 4.0,
            sy(y) + 4.0
        );
    }
    let mut xs: Vec<f64> = rows.iter().map(|r| r.horizon_m).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in &xs {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#,
            sx(*x),
            h - pad + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">horizon [m]</text>"#,
        w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">combined error [m]</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, (method, color)) in COLORS.iter().enumerate() {
        let mut mine: Vec<&ReportRow> = rows.iter().filter(|r| r.method == *method).collect();
        if mine.is_empty() {
            continue;
        }
        mine.sort_by(|a, b| a.horizon_m.total_cmp(&b.horizon_m));
        let upper = mine.iter().map(|r| format!("{:.1},{:.1}", sx(r.horizon_m), sy(r.p75)));
        let lower = mine
            .iter()
            .rev()
            .map(|r| format!("{:.1},{:.1}", sx(r.horizon_m), sy(r.p25)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = mine
            .iter()
            .map(|r| format!("{:.1},{:.1}", sx(r.horizon_m), sy(r.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = pad + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0:.1}" y1="{ly:.1}" x2="{1:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{2:.1}" y="{3:.1}">{method}</text>"#,
            pad + 10.0,
            pad + 30.0,
            pad + 36.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `report.csv` and `comparison.svg` into `out_dir`, creating it if needed.
pub fn emit_report(report: &EvalReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::Validation("report has no rows".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join("report.csv");
    write_report_csv(&csv_path, &report.rows)?;
    let svg_path = out_dir.join("comparison.svg");
    fs::write(&svg_path, render_svg(&report.rows)).map_err(|e| Error::io(&svg_path, e))?;
    Ok(vec![csv_path, svg_path])
}
