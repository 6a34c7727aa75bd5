//! Test accuracy over refinement steps, as SVG.

use std::path::Path;

use plotters::prelude::*;
use plr_core::formats::MetricsLog;

use crate::error::{CliError, Result};

/// Mean and population standard deviation of the test accuracy at each step
/// shared by every log.
pub fn accuracy_band(logs: &[MetricsLog]) -> Vec<(u64, f64, f64)> {
    let Some(first) = logs.first() else {
        return Vec::new();
    };
    first
        .rows
        .iter()
        .filter_map(|row| {
            let values: Vec<f64> = logs
                .iter()
                .filter_map(|l| l.rows.iter().find(|r| r.step == row.step).map(|r| r.test_acc))
                .collect();
            (values.len() == logs.len()).then(|| {
                let (mean, std) = crate::aggregate::mean_std(&values);
                (row.step, mean, std)
            })
        })
        .collect()
}

/// Draws the mean accuracy with a one-standard-deviation band across seeds.
pub fn accuracy_plot(logs: &[MetricsLog], title: &str, path: &Path) -> Result<()> {
    let render = |e: &dyn std::fmt::Display| CliError::Render {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let band = accuracy_band(logs);
    if band.is_empty() {
        return Err(render(&"no metrics rows to plot"));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| plr_core::Error::io(parent, e))?;
    }
    let x_max = band.last().map(|b| b.0).unwrap_or(1).max(1) as f64;
    let lo = band.iter().map(|b| b.1 - b.2).fold(f64::INFINITY, f64::min);
    let hi = band.iter().map(|b| b.1 + b.2).fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.1).max(0.01);

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| render(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..x_max, (lo - pad).max(0.0)..(hi + pad).min(1.0))
        .map_err(|e| render(&e))?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .y_desc("target test accuracy")
        .draw()
        .map_err(|e| render(&e))?;
    if logs.len() > 1 {
        let mut outline: Vec<(f64, f64)> = band.iter().map(|&(s, m, d)| (s as f64, m + d)).collect();
        outline.extend(band.iter().rev().map(|&(s, m, d)| (s as f64, m - d)));
        chart
            .draw_series(std::iter::once(Polygon::new(outline, BLUE.mix(0.2).filled())))
            .map_err(|e| render(&e))?;
    }
    chart
        .draw_series(LineSeries::new(band.iter().map(|&(s, m, _)| (s as f64, m)), &BLUE))
        .map_err(|e| render(&e))?
        .label(format!("mean of {} seed(s)", logs.len()))
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| render(&e))?;
    root.present().map_err(|e| render(&e))?;
    Ok(())
}
