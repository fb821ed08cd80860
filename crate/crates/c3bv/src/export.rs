//! Writes sweep outputs to a directory: raw cells, aggregates, optima,
//! per-mode plot data, and a welfare-versus-lambda chart.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::data::{csv_err, io_err};
use crate::dynamics::TraceStep;
use crate::error::Result;
use crate::sweep::{Aggregate, CellResult, Objective, Optimum, SweepResult};

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

/// Writes `cells.csv`, `aggregates.csv`, `optima.json`, one
/// `plot_<mode>.csv` per evaluated mode, and `welfare_vs_lambda.svg`
/// into `out_dir` (created if absent).
pub fn export_results(result: &SweepResult, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    write_cells_csv(&out_dir.join("cells.csv"), &result.cells)?;
    write_aggregates_csv(&out_dir.join("aggregates.csv"), &result.aggregates)?;
    write_optima_json(&out_dir.join("optima.json"), &result.optima)?;
    for (mode, series) in mode_series(&result.aggregates, result.spec.objective) {
        let name = format!("plot_{}.csv", sanitize_mode(&mode));
        write_plot_csv(&out_dir.join(name), &series)?;
    }
    let svg = render_svg(&result.aggregates, result.spec.objective);
    let svg_path = out_dir.join("welfare_vs_lambda.svg");
    fs::write(&svg_path, svg).map_err(|e| io_err(&svg_path, e))?;
    Ok(())
}

pub fn write_cells_csv(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for cell in cells {
        w.serialize(cell).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a file produced by [`write_cells_csv`]; aggregates and optima can
/// be recomputed from the result.
pub fn read_cells_csv(path: &Path) -> Result<Vec<CellResult>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

fn write_aggregates_csv(path: &Path, aggregates: &[Aggregate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for agg in aggregates {
        w.serialize(agg).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_optima_json(path: &Path, optima: &BTreeMap<String, Optimum>) -> Result<()> {
    let mut body = serde_json::to_string_pretty(optima)
        .map_err(|e| io_err(path, std::io::Error::other(e)))?;
    body.push('\n');
    fs::write(path, body).map_err(|e| io_err(path, e))
}

fn write_plot_csv(path: &Path, series: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["lambda", "mean", "stderr"])
        .map_err(|e| csv_err(path, e))?;
    for &(lambda, mean, stderr) in series {
        w.write_record([
            format!("{lambda}"),
            format!("{mean}"),
            format!("{stderr}"),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One row per creator per recorded step.
pub fn write_trace_csv(path: &Path, trace: &[TraceStep]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["step", "creator", "utility", "welfare"])
        .map_err(|e| csv_err(path, e))?;
    for step in trace {
        for (creator, &utility) in step.utilities.iter().enumerate() {
            w.write_record([
                step.step.to_string(),
                creator.to_string(),
                format!("{utility}"),
                format!("{}", step.welfare),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn sanitize_mode(mode: &str) -> String {
    mode.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn objective_value(agg: &Aggregate, objective: Objective) -> (f64, f64) {
    match objective {
        Objective::UserWelfare => (agg.welfare_mean, agg.welfare_stderr),
        Objective::NashSocialWelfare => (agg.nsw_mean, agg.nsw_stderr),
    }
}

/// (mode label, [(lambda, mean, stderr)]) in first-appearance order.
fn mode_series(aggregates: &[Aggregate], objective: Objective) -> Vec<(String, Vec<(f64, f64, f64)>)> {
    let mut series: Vec<(String, Vec<(f64, f64, f64)>)> = Vec::new();
    for agg in aggregates {
        let label = agg.mode.to_string();
        let (mean, stderr) = objective_value(agg, objective);
        match series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, points)) => points.push((agg.lambda, mean, stderr)),
            None => series.push((label, vec![(agg.lambda, mean, stderr)])),
        }
    }
    series
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

/// Line chart of the objective mean per mode. Grid points are spaced by
/// index (the grid usually spans decades), with stderr whiskers at each
/// point and a legend on the right.
fn render_svg(aggregates: &[Aggregate], objective: Objective) -> String {
    let series = mode_series(aggregates, objective);
    let (width, height) = (760.0, 480.0);
    let (left, right, top, bottom) = (80.0, 590.0, 40.0, 420.0);

    let mut lambdas: Vec<f64> = Vec::new();
    for (_, points) in &series {
        for &(l, _, _) in points {
            if !lambdas.contains(&l) {
                lambdas.push(l);
            }
        }
    }
    lambdas.sort_by(f64::total_cmp);

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, points) in &series {
        for &(_, mean, stderr) in points {
            lo = lo.min(mean - stderr);
            hi = hi.max(mean + stderr);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        let pad = hi.abs().max(1.0) * 0.1;
        lo -= pad;
        hi += pad;
    }

    let x_at = |lambda: f64| -> f64 {
        let idx = lambdas
            .iter()
            .position(|l| l.to_bits() == lambda.to_bits())
            .unwrap_or(0);
        if lambdas.len() == 1 {
            (left + right) / 2.0
        } else {
            left + (right - left) * idx as f64 / (lambdas.len() - 1) as f64
        }
    };
    let y_at = |v: f64| -> f64 { bottom - (bottom - top) * (v - lo) / (hi - lo) };

    let objective_label = match objective {
        Objective::UserWelfare => "user welfare",
        Objective::NashSocialWelfare => "nash social welfare",
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{bottom}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">lambda</text>\n",
        (left + right) / 2.0,
        height - 10.0
    ));
    svg.push_str(&format!(
        "  <text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{objective_label}</text>\n",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    ));
    for &lambda in &lambdas {
        let x = x_at(lambda);
        svg.push_str(&format!(
            "  <line x1=\"{x}\" y1=\"{bottom}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            bottom + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            bottom + 20.0,
            fmt_tick(lambda)
        ));
    }
    for frac in [0.0, 0.5, 1.0] {
        let v = lo + (hi - lo) * frac;
        let y = y_at(v);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"black\"/>\n",
            left - 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            left - 9.0,
            y + 4.0,
            fmt_tick(v)
        ));
    }
    for (si, (label, points)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        for &(lambda, mean, stderr) in points {
            if stderr > 0.0 {
                let x = x_at(lambda);
                svg.push_str(&format!(
                    "  <line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"{color}\"/>\n",
                    y_at(mean - stderr),
                    y_at(mean + stderr)
                ));
            }
        }
        let pts: Vec<String> = points
            .iter()
            .map(|&(lambda, mean, _)| format!("{:.2},{:.2}", x_at(lambda), y_at(mean)))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        for &(lambda, mean, _) in points {
            svg.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n",
                x_at(lambda),
                y_at(mean)
            ));
        }
        let ly = top + 16.0 * si as f64;
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            right + 10.0,
            right + 34.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{label}</text>\n",
            right + 40.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DynamicsConfig;
    use crate::envgen::build_prent;
    use crate::mechanisms::MechanismId;
    use crate::prent::PreNtParams;
    use crate::sweep::{aggregate_cells, run_cell, run_sweep, Mode, SweepSpec};
    use crate::welfare::AttentionWeights;

    fn small_sweep() -> (SweepSpec, crate::game::GameInstance) {
        let p = PreNtParams::new(9, 1, 0.8, 0.6, 0.2).unwrap();
        let base = build_prent(
            &p,
            MechanismId::ExposureTopK,
            AttentionWeights::log_discount(1).unwrap(),
            3,
        )
        .unwrap();
        let spec = SweepSpec {
            lambda_grid: vec![0.0, 0.5, 2.0],
            mechanisms: vec![
                MechanismId::ExposureTopK,
                MechanismId::SoftmaxShare { beta: 2.5 },
            ],
            replicates: 3,
            dynamics: DynamicsConfig {
                horizon: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        (spec, base)
    }

    #[test]
    fn exported_cells_reproduce_aggregates_exactly() {
        let (spec, base) = small_sweep();
        let result = run_sweep(&spec, &base).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_results(&result, dir.path()).unwrap();

        for name in [
            "cells.csv",
            "aggregates.csv",
            "optima.json",
            "welfare_vs_lambda.svg",
            "plot_nonstrategic.csv",
            "plot_exposure_topk.csv",
            "plot_softmax_share_2_5.csv",
        ] {
            assert!(dir.path().join(name).is_file(), "missing {name}");
        }

        let cells = read_cells_csv(&dir.path().join("cells.csv")).unwrap();
        assert_eq!(cells, result.cells);
        let recomputed = aggregate_cells(&cells).unwrap();
        assert_eq!(recomputed, result.aggregates);

        let optima_text = std::fs::read_to_string(dir.path().join("optima.json")).unwrap();
        let optima: BTreeMap<String, Optimum> = serde_json::from_str(&optima_text).unwrap();
        assert_eq!(optima, result.optima);
    }

    #[test]
    fn svg_draws_one_polyline_per_mode() {
        let (spec, base) = small_sweep();
        let result = run_sweep(&spec, &base).unwrap();
        let svg = render_svg(&result.aggregates, spec.objective);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("</svg>"));
        assert!(svg.contains("softmax_share:2.5"));
    }

    #[test]
    fn svg_handles_single_point_and_flat_series() {
        let flat = vec![
            Aggregate {
                mode: Mode::NonStrategic,
                lambda: 1.0,
                replicates: 2,
                welfare_mean: 5.0,
                welfare_stderr: 0.0,
                nsw_mean: 5.0,
                nsw_stderr: 0.0,
            },
        ];
        let svg = render_svg(&flat, Objective::UserWelfare);
        assert!(svg.contains("<polyline"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn trace_csv_rows_cover_every_creator_step() {
        let (_, base) = small_sweep();
        let dynamics = DynamicsConfig {
            horizon: 4,
            ..Default::default()
        };
        let out = run_cell(
            &base,
            0.5,
            &Mode::Strategic(MechanismId::ExposureTopK),
            7,
            11,
            &dynamics,
            false,
            true,
        )
        .unwrap();
        let trace = out.trace.unwrap();
        assert!(!trace.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&path, &trace).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let rows = body.lines().count();
        let expected: usize = trace.iter().map(|t| t.utilities.len()).sum();
        assert_eq!(rows, expected + 1);
        assert!(body.starts_with("step,creator,utility,welfare"));
    }

    #[test]
    fn mode_labels_sanitize_to_file_safe_names() {
        assert_eq!(sanitize_mode("nonstrategic"), "nonstrategic");
        assert_eq!(sanitize_mode("softmax_share:2.5"), "softmax_share_2_5");
    }
}
