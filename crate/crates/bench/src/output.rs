//! CSV, SVG and JSON artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{ExperimentConfig, FAILURE_THRESHOLD_M};
use crate::error::BenchError;
use crate::harness::{MonteCarloTable, RunResult};

pub const CSV_HEADER: [&str; 12] = [
    "experiment",
    "filter",
    "variant",
    "delta_s",
    "deltaIll",
    "runs",
    "seed",
    "tol",
    "armse_p_m",
    "armse_v_mps",
    "failed",
    "cpu_s",
];

pub fn write_csv(results: &[RunResult], path: &Path) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| BenchError::io(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| BenchError::io(path, e))?;
    for r in results {
        w.serialize(r).map_err(|e| BenchError::io(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<RunResult>, BenchError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| BenchError::io(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<RunResult>, _>>()
        .map_err(|e| BenchError::io(path, e))
}

/// Horizontal axis of a sweep plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Sampling period Δ on a linear axis.
    SamplingPeriod,
    /// Conditioning parameter δ on a log axis, decreasing to the right.
    Conditioning,
}

const PALETTE: [&str; 7] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf",
];

/// ARMSE_p against the sweep variable, log-scaled, one polyline per filter;
/// failed cells are drawn as crosses along the top edge.
pub fn render_svg(results: &[RunResult], axis: SweepAxis) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 190.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let xval = |r: &RunResult| match axis {
        SweepAxis::SamplingPeriod => r.delta_s,
        SweepAxis::Conditioning => -r.delta_ill.unwrap_or(1.0).log10(),
    };
    let mut series: BTreeMap<String, Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        series.entry(r.label()).or_default().push(r);
    }

    let xs: Vec<f64> = results.iter().map(xval).collect();
    let (mut x0, mut x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    let ys: Vec<f64> = results
        .iter()
        .filter(|r| !r.failed && r.armse_p_m > 0.0 && r.armse_p_m.is_finite())
        .map(|r| r.armse_p_m.log10())
        .chain(std::iter::once(FAILURE_THRESHOLD_M.log10()))
        .collect();
    let y0 = ys.iter().cloned().fold(f64::INFINITY, f64::min).floor();
    let mut y1 = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil();
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>
<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for e in (y0 as i32)..=(y1 as i32) {
        let y = py(e as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    let mut ticks: Vec<f64> = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let label = match axis {
            SweepAxis::SamplingPeriod => format!("{x}"),
            SweepAxis::Conditioning => format!("1e{}", -(x.round() as i32)),
        };
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            px(x),
            top + ph + 16.0
        );
    }
    let xlabel = match axis {
        SweepAxis::SamplingPeriod => "sampling period (s)",
        SweepAxis::Conditioning => "conditioning parameter",
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>
<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">ARMSE position (m)</text>"#,
        left + pw / 2.0,
        h - 12.0,
        top + ph / 2.0,
        top + ph / 2.0
    );
    let thr = py(FAILURE_THRESHOLD_M.log10());
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{thr:.2}" x2="{:.2}" y2="{thr:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        left + pw
    );

    for (i, (label, rows)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut rows = rows.clone();
        rows.sort_by(|a, b| xval(a).total_cmp(&xval(b)));
        let pts: Vec<String> = rows
            .iter()
            .filter(|r| !r.failed && r.armse_p_m > 0.0 && r.armse_p_m.is_finite())
            .map(|r| format!("{:.2},{:.2}", px(xval(r)), py(r.armse_p_m.log10())))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-filter="{label}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        for r in rows.iter().filter(|r| r.failed) {
            let (cx, cy) = (px(xval(r)), top - 8.0 - 4.0 * (i % 4) as f64);
            let _ = writeln!(
                s,
                r#"<path class="breakdown" data-filter="{label}" d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{color}" stroke-width="1.5"/>"#,
                cx - 3.0, cy - 3.0, cx + 3.0, cy + 3.0, cx - 3.0, cy + 3.0, cx + 3.0, cy - 3.0
            );
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{label}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(results: &[RunResult], axis: SweepAxis, path: &Path) -> Result<(), BenchError> {
    fs::write(path, render_svg(results, axis)).map_err(|e| BenchError::io(path, e))
}

/// Config echo plus the per-run dataset digests of every cell.
pub fn write_manifest(
    cfg: &ExperimentConfig,
    table: &MonteCarloTable,
    extra: serde_json::Value,
    path: &Path,
) -> Result<(), BenchError> {
    let cells: Vec<serde_json::Value> = table
        .results
        .iter()
        .zip(&table.digests)
        .map(|(r, d)| {
            serde_json::json!({
                "filter": r.label(),
                "delta_s": r.delta_s,
                "deltaIll": r.delta_ill,
                "dataset_sha256": d,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "config": cfg.manifest(),
        "cells": cells,
        "summary": extra,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| BenchError::io(path, e))?;
    fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<RunResult> {
        let mk = |variant: &str, d: f64, p: f64, failed: bool| RunResult {
            experiment: "illcond".into(),
            filter: "ekf-ukf".into(),
            variant: variant.into(),
            delta_s: 1.0,
            delta_ill: Some(d),
            runs: 20,
            seed: 3,
            tol: 1e-4,
            armse_p_m: p,
            armse_v_mps: p * 2.0,
            failed,
            cpu_s: 0.123_456_789_012_345_67,
        };
        vec![
            mk("conventional", 1e-1, 71.234_567_890_123_45, false),
            mk("conventional", 1e-2, f64::INFINITY, true),
            mk("sr-joseph", 1e-1, 70.0, false),
            mk("sr-joseph", 1e-2, 612.5, true),
        ]
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rows = sample();
        write_csv(&rows, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    }

    #[test]
    fn empty_csv_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&[], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().trim_end(), CSV_HEADER.join(","));
    }

    #[test]
    fn svg_has_one_polyline_per_filter() {
        let svg = render_svg(&sample(), SweepAxis::Conditioning);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("class=\"breakdown\"").count(), 2);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn io_error_names_path() {
        let err = write_csv(&[], Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
