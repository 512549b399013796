use std::path::Path;

use anyhow::{anyhow, Result};
use plotters::prelude::*;
use primplan::sim::CellSummary;

const COLORS: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

fn plot_err<E: std::fmt::Display>(e: E) -> anyhow::Error {
    anyhow!("plotting failed: {e}")
}

/// Mean check time against library size, one line per obstacle count.
pub fn timing_svg(cells: &[CellSummary], out: &Path) -> Result<()> {
    let mut densities: Vec<usize> = cells.iter().map(|c| c.n_obs).collect();
    densities.sort_unstable();
    densities.dedup();
    let max_paths = cells.iter().map(|c| c.n_paths).max().unwrap_or(1) as f64;
    let max_us = cells.iter().map(|c| c.p99_check_us).fold(1.0, f64::max);

    let root = SVGBackend::new(out, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("collision check time vs library size", ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..max_paths * 1.1, 0.0..max_us * 1.2)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("paths in library")
        .y_desc("check time (us)")
        .draw()
        .map_err(plot_err)?;
    for (i, n_obs) in densities.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> =
            cells.iter().filter(|c| c.n_obs == *n_obs).filter(|c| c.mean_check_us.is_finite())
            .map(|c| (c.n_paths as f64, c.mean_check_us))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = COLORS[i % COLORS.len()];
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(format!("{n_obs} obstacles"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        chart.draw_series(pts.into_iter().map(|p| Circle::new(p, 4, color.filled()))).map_err(plot_err)?;
    }
    chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Speed against time for one episode.
pub fn speed_svg(trace: &[(f64, f64)], v_max: f64, title: &str, out: &Path) -> Result<()> {
    let t_end = trace.last().map_or(1.0, |p| p.0).max(1e-3);
    let root = SVGBackend::new(out, (800, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..t_end, 0.0..(v_max * 1.15).max(0.1))
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("time (s)").y_desc("speed (m/s)").draw().map_err(plot_err)?;
    chart.draw_series(LineSeries::new(trace.iter().copied(), BLUE.stroke_width(2))).map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(vec![(0.0, v_max), (t_end, v_max)], RED.stroke_width(1)))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}
