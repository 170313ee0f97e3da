//! SVG figures.

use std::path::Path;

use funclearn::eval::ResultTable;
use plotters::prelude::*;

use crate::error::{CliError, CliResult};

/// One named polyline.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

/// A prompt with its true continuation and two forecasts.
pub struct CompletionPanel {
    pub title: String,
    pub x: Vec<f64>,
    /// The whole true curve.
    pub truth: Vec<f64>,
    pub prompt_len: usize,
    pub model: Vec<f64>,
    pub gpio: Vec<f64>,
}

fn plot_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Plot(e.to_string())
}

fn color(i: usize) -> RGBColor {
    const COLORS: [RGBColor; 6] = [
        RGBColor(31, 119, 180),
        RGBColor(255, 127, 14),
        RGBColor(44, 160, 44),
        RGBColor(214, 39, 40),
        RGBColor(148, 103, 189),
        RGBColor(140, 86, 75),
    ];
    COLORS[i % COLORS.len()]
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

/// Mean against budget (evenly spaced) with 95% intervals, one line per model.
pub fn table_chart(table: &ResultTable, path: &Path) -> CliResult<()> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let lo = table.rows.iter().flat_map(|(_, c)| c.iter().map(|s| s.mean - s.ci95)).fold(f64::INFINITY, f64::min);
    let hi = table.rows.iter().flat_map(|(_, c)| c.iter().map(|s| s.mean + s.ci95)).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = padded(lo, hi);
    let n = table.budgets.len();
    let budgets = table.budgets.clone();
    let mut chart = ChartBuilder::on(&root)
        .caption(&table.title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(-0.3..n as f64 - 0.7, lo..hi)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| budgets.get(x.round() as usize).map_or(String::new(), usize::to_string))
        .x_desc("examples per class")
        .draw()
        .map_err(plot_err)?;
    for (i, (model, cells)) in table.rows.iter().enumerate() {
        let c = color(i);
        let points: Vec<(f64, f64)> = cells.iter().enumerate().map(|(k, s)| (k as f64, s.mean)).collect();
        chart
            .draw_series(LineSeries::new(points.clone(), c.stroke_width(2)))
            .map_err(plot_err)?
            .label(model.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], c.stroke_width(2)));
        chart.draw_series(points.iter().map(|&p| Circle::new(p, 3, c.filled()))).map_err(plot_err)?;
        chart
            .draw_series(
                cells
                    .iter()
                    .enumerate()
                    .map(|(k, s)| PathElement::new(vec![(k as f64, s.mean - s.ci95), (k as f64, s.mean + s.ci95)], c)),
            )
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Overlaid polylines on one panel.
pub fn line_chart(title: &str, series: &[Series<'_>], path: &Path) -> CliResult<()> {
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let (y_lo, y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (y_lo, y_hi) = padded(y_lo, y_hi);
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(32)
        .y_label_area_size(48)
        .build_cartesian_2d(x_lo..x_hi, y_lo..y_hi)
        .map_err(plot_err)?;
    chart.configure_mesh().draw().map_err(plot_err)?;
    for (i, s) in series.iter().enumerate() {
        let c = color(i);
        let style = c.stroke_width(2);
        let drawn = if s.dashed {
            chart.draw_series(DashedLineSeries::new(s.points.clone(), 6, 4, style)).map_err(plot_err)?
        } else {
            chart.draw_series(LineSeries::new(s.points.clone(), style)).map_err(plot_err)?
        };
        drawn.label(s.name).legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], c.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// A grid of completion panels, two per row.
pub fn completion_chart(panels: &[CompletionPanel], path: &Path) -> CliResult<()> {
    let rows = panels.len().div_ceil(2).max(1);
    let root = SVGBackend::new(path, (960, 300 * rows as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let areas = root.split_evenly((rows, 2));
    for (panel, area) in panels.iter().zip(&areas) {
        let k = panel.prompt_len;
        let all = panel.truth.iter().chain(&panel.model).chain(&panel.gpio);
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (lo, hi) = padded(lo, hi);
        let x0 = panel.x[0];
        let x1 = *panel.x.last().expect("non-empty grid");
        let mut chart = ChartBuilder::on(area)
            .caption(&panel.title, ("sans-serif", 16))
            .margin(8)
            .x_label_area_size(24)
            .y_label_area_size(40)
            .build_cartesian_2d(x0..x1, lo..hi)
            .map_err(plot_err)?;
        chart.configure_mesh().disable_mesh().draw().map_err(plot_err)?;
        let zip = |ys: &[f64], from: usize| -> Vec<(f64, f64)> { panel.x[from..].iter().copied().zip(ys.iter().copied()).collect() };
        let lines = [
            ("prompt", zip(&panel.truth[..k], 0), BLACK, false),
            ("model", zip(&panel.model, k), color(0), false),
            ("GPIO", zip(&panel.gpio, k), color(1), false),
            ("truth", zip(&panel.truth[k - 1..], k - 1), BLACK, true),
        ];
        for (name, pts, c, dashed) in lines {
            let drawn = if dashed {
                chart.draw_series(DashedLineSeries::new(pts, 5, 3, c.stroke_width(2))).map_err(plot_err)?
            } else {
                chart.draw_series(LineSeries::new(pts, c.stroke_width(2))).map_err(plot_err)?
            };
            drawn.label(name).legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 14, y)], c.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .label_font(("sans-serif", 11))
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .position(SeriesLabelPosition::UpperLeft)
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}
