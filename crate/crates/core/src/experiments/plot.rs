use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::{SweepParameter, SweepRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub width: u32,
    pub height: u32,
    /// Defaults to the swept parameter.
    pub title: Option<String>,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self { width: 800, height: 500, title: None }
    }
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = lo.abs().max(1.0) * 0.05;
        (lo - pad, hi + pad)
    }
}

/// Line chart of mean hybrid rate (Mbit/s) against the swept value, one
/// series per scheme in order of first appearance. Cells without feasible
/// trials are skipped.
pub fn render_svg(rows: &[SweepRow], style: &PlotStyle) -> Result<String> {
    let first = rows.first().ok_or_else(|| Error::Plot("empty results table".into()))?;
    if rows.iter().any(|r| r.parameter != first.parameter) {
        return Err(Error::Plot("results mix several sweeps".into()));
    }
    let axis = SweepParameter::parse(&first.parameter).map_or(first.parameter.as_str(), |p| p.axis());
    let mut schemes: Vec<&str> = Vec::new();
    for r in rows {
        if !schemes.contains(&r.scheme.as_str()) {
            schemes.push(&r.scheme);
        }
    }
    let series: Vec<Vec<(f64, f64)>> = schemes
        .iter()
        .map(|s| {
            rows.iter()
                .filter(|r| r.scheme == *s && r.mean_rate.is_finite())
                .map(|r| (r.sweep_value, r.mean_rate / 1e6))
                .collect()
        })
        .collect();
    let pts = series.iter().flatten();
    let (x0, x1) = pts.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = pts.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if !x0.is_finite() {
        return Err(Error::Plot("no feasible cell to plot".into()));
    }
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);
    let title = style.title.clone().unwrap_or_else(|| format!("hybrid rate vs {}", first.parameter));

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (style.width, style.height)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(axis)
            .y_desc("mean hybrid rate (Mbit/s)")
            .draw()
            .map_err(plot_err)?;
        for (i, (name, pts)) in schemes.iter().zip(&series).enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(plot_err)?
                .label(*name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
            chart
                .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Writes one SVG per sweep found in `rows` into `dir`, named after the
/// swept parameter. Returns the written paths in order.
pub fn emit_plots(rows: &[SweepRow], dir: &Path, style: &PlotStyle) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Plot("empty results table".into()));
    }
    let mut params: Vec<&str> = Vec::new();
    for r in rows {
        if !params.contains(&r.parameter.as_str()) {
            params.push(&r.parameter);
        }
    }
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::with_capacity(params.len());
    for p in params {
        let subset: Vec<SweepRow> = rows.iter().filter(|r| r.parameter == p).cloned().collect();
        let path = dir.join(format!("{p}.svg"));
        std::fs::write(&path, render_svg(&subset, style)?)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(x: f64, scheme: &str, rate: f64) -> SweepRow {
        SweepRow {
            sweep_value: x,
            scheme: scheme.into(),
            mean_rate: rate,
            std_err: 0.0,
            mean_iters: 3.0,
            parameter: "num_elements".into(),
            mean_rate_noma: 0.0,
            mean_rate_airfl: 0.0,
            trials: 1,
            feasible: 1,
            infeasible: 0,
            realization_hash: "0".into(),
        }
    }

    fn table() -> Vec<SweepRow> {
        (0..5)
            .flat_map(|i| {
                let x = 5.0 * (i + 1) as f64;
                [row(x, "discrete-ris", 5e6 + 1e5 * x), row(x, "random-ris", 4e6 + 5e4 * x)]
            })
            .collect()
    }

    #[test]
    fn two_series_in_one_image() {
        let svg = render_svg(&table(), &PlotStyle::default()).unwrap();
        assert!(svg.starts_with("<svg"));
        // series and their legend marks are the only 2-px strokes
        assert_eq!(svg.matches(r#"stroke-width="2""#).count(), 2 + 2);
        assert_eq!(svg.matches("<circle").count(), 10);
        assert!(svg.contains("discrete-ris") && svg.contains("random-ris"));
    }

    #[test]
    fn deterministic_and_one_file_per_sweep() {
        let a = render_svg(&table(), &PlotStyle::default()).unwrap();
        let b = render_svg(&table(), &PlotStyle::default()).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_plots(&table(), dir.path(), &PlotStyle::default()).unwrap();
        assert_eq!(paths, vec![dir.path().join("num_elements.svg")]);
        assert_eq!(std::fs::read_to_string(&paths[0]).unwrap(), a);
    }

    #[test]
    fn empty_table_is_rejected() {
        assert!(matches!(render_svg(&[], &PlotStyle::default()), Err(Error::Plot(_))));
        assert!(emit_plots(&[], Path::new("."), &PlotStyle::default()).is_err());
    }
}
