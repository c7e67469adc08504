//! CSV reports. Each file opens with `#` lines carrying the command, seed
//! and the resolved config, so a report alone is enough to rerun it.

use std::fmt::Write as _;

use radcal_core::geometry::Extrinsics;
use radcal_core::losses::LossBreakdown;
use radcal_core::optimizer::CalibrationResult;
use radcal_core::pipeline::{AblationTable, BoundaryReport, Histogram, MonteCarloReport, ReprojectionReport};

use crate::config_io::ResolvedConfig;

pub const PARAMETER_COLUMNS: [&str; 6] = ["theta_x_deg", "theta_y_deg", "theta_z_deg", "t_x_m", "t_y_m", "t_z_m"];

pub fn header(command: &str, config: &ResolvedConfig) -> String {
    let mut out = format!("# radcal {command}\n# seed = {}\n# config:\n", config.doc.seed);
    for line in config.to_toml().lines() {
        let _ = writeln!(out, "#   {line}");
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn row(values: &[f64; 6]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn loss_cells(l: &LossBreakdown) -> String {
    format!("{},{},{},{}", l.total, opt(l.rep), opt(l.mlp), opt(l.ray))
}

/// Per-step trajectory followed by a `final` row at the returned parameters.
pub fn calibration_csv(config: &ResolvedConfig, result: &CalibrationResult) -> String {
    let mut out = header("calibrate", config);
    let _ = writeln!(out, "# stop = {:?}", result.stop);
    let _ = writeln!(out, "step,total,rep,mlp,ray,{}", PARAMETER_COLUMNS.join(","));
    for r in &result.trajectory {
        let _ = writeln!(out, "{},{},{}", r.step, loss_cells(&r.loss), row(&r.extrinsics.parameter_row()));
    }
    let _ = writeln!(out, "final,{},{}", loss_cells(&result.final_loss), row(&result.parameter_row()));
    out
}

pub fn ablation_csv(config: &ResolvedConfig, table: &AblationTable) -> String {
    let mut out = header("ablate", config);
    let _ = writeln!(out, "config,{},loss_initial,loss_final", PARAMETER_COLUMNS.join(","));
    for r in &table.rows {
        let (start, end) = r.loss.map_or((String::new(), String::new()), |(a, b)| (a.total.to_string(), b.total.to_string()));
        let _ = writeln!(out, "{},{},{start},{end}", r.label, row(&r.parameters));
    }
    out
}

/// One row per run, then `q1`, `median`, `q3` and `iqr` rows.
pub fn monte_carlo_csv(config: &ResolvedConfig, runs: usize, frac: f64, report: &MonteCarloReport) -> String {
    let mut out = header("montecarlo", config);
    let _ = writeln!(out, "# runs = {runs}\n# fraction = {frac}");
    let _ = writeln!(out, "run,observations,status,{}", PARAMETER_COLUMNS.join(","));
    for r in &report.runs {
        match (&r.parameters, &r.skipped) {
            (Some(p), _) => {
                let _ = writeln!(out, "{},{},ok,{}", r.index, r.observations, row(p));
            }
            (None, reason) => {
                let reason = reason.as_deref().unwrap_or("skipped").replace(',', ";");
                let _ = writeln!(out, "{},{},skipped: {reason},,,,,,", r.index, r.observations);
            }
        }
    }
    let stats: [(&str, fn(&radcal_core::pipeline::Quantiles) -> f64); 4] =
        [("q1", |q| q.q1), ("median", |q| q.median), ("q3", |q| q.q3), ("iqr", |q| q.iqr())];
    for (name, f) in stats {
        let cells: Vec<String> = report.quantiles.iter().map(|q| opt(q.as_ref().map(f))).collect();
        let _ = writeln!(out, "{name},,,{}", cells.join(","));
    }
    out
}

/// Per-observation reprojection errors and elevation-boundary status.
pub fn evaluation_csv(
    config: &ResolvedConfig,
    extrinsics: &Extrinsics,
    loss: &LossBreakdown,
    reprojection: &ReprojectionReport,
    boundary: &BoundaryReport,
) -> String {
    let mut out = header("evaluate", config);
    let _ = writeln!(out, "# extrinsics = {}", row(&extrinsics.parameter_row()));
    let _ = writeln!(out, "# loss total,rep,mlp,ray = {}", loss_cells(loss));
    let _ = writeln!(out, "# boundary violation fraction = {}", boundary.violation_fraction);
    let _ = writeln!(out, "frame,target,range_error_m,azimuth_error_rad,radial_distance_m,elevation_rad,limit_rad,violation");
    for (err, b) in reprojection.errors.iter().zip(&boundary.records) {
        let (dr, da) = err.map_or((String::new(), String::new()), |(r, a)| (r.to_string(), a.to_string()));
        let _ = writeln!(
            out,
            "{},{},{dr},{da},{},{},{},{}",
            b.frame,
            b.target,
            b.radial_distance,
            b.elevation,
            opt(b.limit),
            u8::from(b.violation)
        );
    }
    out
}

/// Text histogram, one `[lo, hi) count` line per bin.
pub fn histogram_text(title: &str, unit_scale: f64, unit: &str, h: &Histogram) -> String {
    let mut out = format!("{title} ({} values)\n", h.total());
    for (lo, hi, n) in h.bins() {
        let _ = writeln!(out, "  [{:.3}, {:.3}) {unit}  {n}", lo * unit_scale, hi * unit_scale);
    }
    out
}
