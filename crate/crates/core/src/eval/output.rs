//! Report files: JSON, CSV tables and unlabeled PNG charts.
//!
//! Charts carry no text (no font is bundled); every chart is written next to
//! a table with the same numbers.

use std::fmt::Write as _;
use std::path::Path;

use plotters::prelude::*;
use serde::Serialize;

use super::{AblationReport, PckPoint, SpreadBin};
use crate::error::{Error, Result};
use crate::graph::build_hand_skeleton;
use crate::{Image, Joints};

const CHART_SIZE: (u32, u32) = (640, 480);

const PALETTE: [RGBColor; 10] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
    RGBColor(188, 189, 34),
    RGBColor(23, 190, 207),
];

fn draw_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| draw_err(path, e))?;
    write_text(path, &(text + "\n"))
}

/// `tau,pck` table.
pub fn write_pck_csv(curve: &[PckPoint], path: &Path) -> Result<()> {
    let mut out = String::from("tau,pck\n");
    for p in curve {
        writeln!(out, "{},{}", p.tau, p.pck).expect("writing to a string");
    }
    write_text(path, &out)
}

/// One row per variant: parameters, final loss, mean error and the PCK curve.
pub fn write_ablation_csv(report: &AblationReport, path: &Path) -> Result<()> {
    let taus: Vec<f64> = report
        .entries
        .iter()
        .find_map(|e| e.report.as_ref())
        .map(|r| r.pck_curve.iter().map(|p| p.tau).collect())
        .unwrap_or_default();
    let mut out = String::from("variant,parameters,final_loss,mean_error_px");
    for t in &taus {
        write!(out, ",pck@{t}").expect("writing to a string");
    }
    out.push_str(",error\n");
    for e in &report.entries {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        write!(
            out,
            "{},{},{},{}",
            e.variant,
            e.parameter_count,
            opt(e.final_loss),
            opt(e.report.as_ref().map(|r| r.mean_error_px))
        )
        .expect("writing to a string");
        for i in 0..taus.len() {
            let v = e.report.as_ref().and_then(|r| r.pck_curve.get(i)).map(|p| p.pck);
            write!(out, ",{}", opt(v)).expect("writing to a string");
        }
        let error = e.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
        writeln!(out, ",{error}").expect("writing to a string");
    }
    write_text(path, &out)
}

/// PCK against threshold, one line per curve, on a `[0, max tau] x [0, 1]` grid.
pub fn plot_pck_curves(curves: &[(String, Vec<PckPoint>)], path: &Path) -> Result<()> {
    let max_tau = curves
        .iter()
        .flat_map(|(_, c)| c.iter().map(|p| p.tau))
        .fold(0.0f64, f64::max)
        .max(1e-3);
    let root = BitMapBackend::new(path, CHART_SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(24)
        .build_cartesian_2d(0.0..max_tau, 0.0..1.0)
        .map_err(|e| draw_err(path, e))?;
    chart.configure_mesh().draw().map_err(|e| draw_err(path, e))?;
    for (i, (_, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(
                curve.iter().map(|p| (p.tau, p.pck)),
                color.stroke_width(2),
            ))
            .map_err(|e| draw_err(path, e))?;
        chart
            .draw_series(curve.iter().map(|p| Circle::new((p.tau, p.pck), 3, color.filled())))
            .map_err(|e| draw_err(path, e))?;
    }
    root.present().map_err(|e| draw_err(path, e))
}

/// Bars of a score in `[0, 1]` against the number of fusion modules.
pub fn plot_msff_sweep(points: &[(usize, f64)], path: &Path) -> Result<()> {
    let max_n = points.iter().map(|p| p.0).max().unwrap_or(1);
    let root = BitMapBackend::new(path, CHART_SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(24)
        .build_cartesian_2d(0.5..max_n as f64 + 0.5, 0.0..1.0)
        .map_err(|e| draw_err(path, e))?;
    chart.configure_mesh().draw().map_err(|e| draw_err(path, e))?;
    chart
        .draw_series(points.iter().map(|&(n, v)| {
            let x = n as f64;
            Rectangle::new([(x - 0.3, 0.0), (x + 0.3, v.clamp(0.0, 1.0))], PALETTE[0].filled())
        }))
        .map_err(|e| draw_err(path, e))?;
    root.present().map_err(|e| draw_err(path, e))
}

/// Mean accuracy per spread bin as bars (empty bins left blank), with the
/// min-max range as a thin line.
pub fn plot_spread_bins(bins: &[SpreadBin], path: &Path) -> Result<()> {
    let root = BitMapBackend::new(path, CHART_SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(24)
        .build_cartesian_2d(-0.5..bins.len().max(1) as f64 - 0.5, 0.0..1.0)
        .map_err(|e| draw_err(path, e))?;
    chart.configure_mesh().draw().map_err(|e| draw_err(path, e))?;
    for (i, bin) in bins.iter().enumerate() {
        let Some(acc) = bin.accuracy else { continue };
        let x = i as f64;
        chart
            .draw_series([Rectangle::new(
                [(x - 0.35, 0.0), (x + 0.35, acc.mean)],
                PALETTE[1].filled(),
            )])
            .map_err(|e| draw_err(path, e))?;
        chart
            .draw_series([PathElement::new(
                vec![(x, acc.min), (x, acc.max)],
                BLACK.stroke_width(2),
            )])
            .map_err(|e| draw_err(path, e))?;
    }
    root.present().map_err(|e| draw_err(path, e))
}

/// Writes `image` with every hand's skeleton drawn on top.
pub fn draw_overlay(image: &Image, hands: &[Joints], path: &Path) -> Result<()> {
    let (w, h) = (image.width(), image.height());
    let mut buf = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                buf[(y * w + x) * 3 + c] = (image.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    {
        let root = BitMapBackend::with_buffer(&mut buf, (w as u32, h as u32)).into_drawing_area();
        let graph = build_hand_skeleton();
        let point = |p: [f64; 2]| (p[0].round() as i32, p[1].round() as i32);
        for (i, joints) in hands.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            for &(a, b) in graph.edges() {
                root.draw(&PathElement::new(
                    vec![point(joints[a]), point(joints[b])],
                    color.stroke_width(1),
                ))
                .map_err(|e| draw_err(path, e))?;
            }
            for &p in joints {
                root.draw(&Circle::new(point(p), 2, YELLOW.filled()))
                    .map_err(|e| draw_err(path, e))?;
            }
        }
        root.present().map_err(|e| draw_err(path, e))?;
    }
    image::save_buffer(path, &buf, w as u32, h as u32, image::ExtendedColorType::Rgb8).map_err(|e| draw_err(path, e))
}
