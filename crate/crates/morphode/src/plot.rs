//! Minimal SVG overlay plots: observed data in blue, generated trajectories
//! in red, one panel per state dimension, optional log-scale vertical axis.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const BLUE: &str = "#1f77b4";
const RED: &str = "#d62728";
const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PlotConfig {
    pub title: String,
    /// Plot `log10(max(|v|, 1e-12))` on the vertical axis.
    pub log_y: bool,
    pub width: usize,
    pub panel_height: usize,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig {
            title: String::new(),
            log_y: false,
            width: 640,
            panel_height: 160,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlotInfo {
    /// Vertical range per dimension, in plotted (possibly log) coordinates.
    pub y_ranges: Vec<(f64, f64)>,
    pub polylines: usize,
}

fn transform(v: f64, log_y: bool) -> f64 {
    if log_y {
        v.abs().max(LOG_FLOOR).log10()
    } else {
        v
    }
}

/// Overlay `data` (blue) and `generated` (red) trajectories, each a `[T, d]`
/// tensor over its own time grid, as `d` stacked panels in one SVG file.
pub fn plot_overlay(
    path: &Path,
    data_times: &[f64],
    data: &[Tensor],
    gen_times: &[f64],
    generated: &[Tensor],
    cfg: &PlotConfig,
) -> Result<PlotInfo> {
    let dims = data
        .first()
        .or(generated.first())
        .map(|t| t.last_dim())
        .ok_or_else(|| Error::InvalidConfig("nothing to plot".into()))?;
    for (label, series, times) in [("data", data, data_times), ("generated", generated, gen_times)]
    {
        for t in series {
            if t.last_dim() != dims || t.leading() != times.len() {
                return Err(Error::ShapeMismatch {
                    op: "plot_overlay",
                    detail: format!(
                        "{label} trajectory {:?} does not match {} times x {dims} dims",
                        t.shape(),
                        times.len()
                    ),
                });
            }
        }
    }

    let t_min = data_times
        .iter()
        .chain(gen_times)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let t_max = data_times
        .iter()
        .chain(gen_times)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);

    let mut y_ranges = Vec::with_capacity(dims);
    for dim in 0..dims {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in data.iter().chain(generated) {
            for r in 0..t.leading() {
                let v = transform(t.at(r, dim), cfg.log_y);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !(hi > lo) {
            hi = lo + 1.0;
        }
        y_ranges.push((lo, hi));
    }

    let margin = 40.0;
    let w = cfg.width as f64;
    let ph = cfg.panel_height as f64;
    let total_h = ph * dims as f64 + margin;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        cfg.width,
        total_h as usize,
        cfg.width,
        total_h as usize
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if !cfg.title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="16" font-size="13" text-anchor="middle">{}</text>"#,
            w / 2.0,
            cfg.title
        );
    }

    let mut polylines = 0;
    for dim in 0..dims {
        let (lo, hi) = y_ranges[dim];
        let top = margin / 2.0 + dim as f64 * ph + 10.0;
        let bottom = top + ph - 30.0;
        let x_of = |t: f64| margin + (t - t_min) / (t_max - t_min).max(1e-300) * (w - margin - 10.0);
        let y_of = |v: f64| bottom - (transform(v, cfg.log_y) - lo) / (hi - lo) * (bottom - top);

        // frame and range labels
        let _ = writeln!(
            svg,
            r#"<rect x="{margin}" y="{top}" width="{}" height="{}" fill="none" stroke="#999"/>"#,
            w - margin - 10.0,
            bottom - top
        );
        let unit = if cfg.log_y { "log10 " } else { "" };
        let _ = writeln!(
            svg,
            r#"<text x="4" y="{top}" font-size="10">{unit}x{} [{:.3}, {:.3}]</text>"#,
            dim + 1,
            lo,
            hi
        );

        let mut draw = |times: &[f64], series: &[Tensor], color: &str| {
            for t in series {
                let mut pts = String::new();
                for r in 0..t.leading() {
                    let _ = write!(pts, "{:.2},{:.2} ", x_of(times[r]), y_of(t.at(r, dim)));
                }
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                    pts.trim_end()
                );
                polylines += 1;
            }
        };
        draw(data_times, data, BLUE);
        draw(gen_times, generated, RED);
    }
    let _ = writeln!(svg, "</svg>");
    fs::write(path, svg).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(PlotInfo { y_ranges, polylines })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{generate, SystemName, SystemSpec};

    #[test]
    fn two_trajectories_give_two_polylines_per_dim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        let times = vec![0.0, 0.5, 1.0];
        let a = Tensor::matrix(3, 2, vec![0.0, 1.0, 0.5, 1.5, 1.0, 2.0]).unwrap();
        let b = Tensor::matrix(3, 2, vec![1.0, 0.0, 1.5, 0.5, 2.0, 1.0]).unwrap();
        let info = plot_overlay(
            &path,
            &times,
            &[a, b],
            &[],
            &[],
            &PlotConfig::default(),
        )
        .unwrap();
        assert_eq!(info.polylines, 4);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<polyline").count(), 4);
        assert!(text.contains(BLUE));
    }

    #[test]
    fn log_scale_rober_spans_many_decades() {
        let mut spec = SystemSpec::defaults(SystemName::Rober);
        spec.samples = 40;
        let ds = generate(&spec).unwrap();
        let obs = ds.observed_matrix(0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rober.svg");
        let cfg = PlotConfig {
            log_y: true,
            ..PlotConfig::default()
        };
        let info = plot_overlay(&path, &ds.times, &[obs], &[], &[], &cfg).unwrap();
        // the slow dimensions start at zero, so the floor pins the bottom of
        // the range many decades below the O(1) states
        let span: f64 = info
            .y_ranges
            .iter()
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max);
        assert!(span >= 8.0, "expected many decades, got {span:.1}");
    }
}
