use std::path::Path;

use fpm_selfcal::experiment::{SweepAxis, SweepRow};
use plotters::prelude::*;

use crate::CliError;

fn plot_error(e: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("plot: {e}"))
}

/// Cost per iteration on a log axis.
pub fn cost(path: &Path, costs: &[f64]) -> Result<(), CliError> {
    let finite: Vec<(f64, f64)> = costs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_finite() && **c > 0.0)
        .map(|(i, c)| ((i + 1) as f64, *c))
        .collect();
    if finite.is_empty() {
        return Ok(());
    }
    let lo = finite.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = finite.iter().map(|p| p.1).fold(0.0, f64::max);
    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("data-fidelity cost", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(1.0..finite.len().max(2) as f64, (lo * 0.8..hi * 1.25).log_scale())
        .map_err(plot_error)?;
    chart.configure_mesh().x_desc("iteration").y_desc("cost").draw().map_err(plot_error)?;
    chart.draw_series(LineSeries::new(finite, &BLUE)).map_err(plot_error)?;
    root.present().map_err(plot_error)
}

/// Mean angle error before calibration, after brightfield and after SC.
pub fn sweep(path: &Path, axis: SweepAxis, rows: &[&SweepRow]) -> Result<(), CliError> {
    if rows.is_empty() {
        return Ok(());
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let (x0, x1) =
        (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let pad = if x1 > x0 { 0.02 * (x1 - x0) } else { 1.0 };
    let series = |f: fn(&SweepRow) -> f64| -> Vec<(f64, f64)> {
        rows.iter().filter(|r| f(r).is_finite()).map(|r| (r.value, f(r).max(1e-5))).collect()
    };
    let uncal = series(|r| r.error_uncal);
    let bf = series(|r| r.error_bf);
    let sc = series(|r| r.error_bf_sc);
    let hi = uncal.iter().chain(&bf).chain(&sc).map(|p| p.1).fold(0.01, f64::max);
    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("angle error vs {}", axis.name()), ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(x0 - pad..x1 + pad, (1e-4..hi * 1.5).log_scale())
        .map_err(plot_error)?;
    chart.configure_mesh().x_desc(axis.name()).y_desc("mean error (NA)").draw().map_err(plot_error)?;
    for (data, color, label) in [(uncal, RED, "uncalibrated"), (bf, GREEN, "bf"), (sc, BLUE, "bf+sc")] {
        chart
            .draw_series(LineSeries::new(data, color))
            .map_err(plot_error)?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart
        .draw_series(LineSeries::new(vec![(x0 - pad, 0.005), (x1 + pad, 0.005)], BLACK.mix(0.4)))
        .map_err(plot_error)?
        .label("0.005 NA")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLACK.mix(0.4)));
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_error)?;
    root.present().map_err(plot_error)
}
