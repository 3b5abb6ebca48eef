//! Self-contained SVG line plots of a trace.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use bfppc::TraceRow;
use plotters::prelude::*;

/// Points kept per series after min/max decimation.
pub const MAX_POINTS: usize = 4000;

const SIZE: (u32, u32) = (960, 540);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(23, 190, 207),
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    pub color: usize,
}

impl Series {
    fn new(label: impl Into<String>, points: Vec<(f64, f64)>, color: usize) -> Self {
        Self {
            label: label.into(),
            points: decimate(&points, MAX_POINTS),
            dashed: false,
            color,
        }
    }

    fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Keeps the first and last point and, per bucket, the minimum and
/// maximum in time order, so spikes survive.
pub fn decimate(points: &[(f64, f64)], max: usize) -> Vec<(f64, f64)> {
    if points.len() <= max || max < 4 {
        return points.to_vec();
    }
    let buckets = (max - 2) / 2;
    let inner = &points[1..points.len() - 1];
    let mut out = Vec::with_capacity(max);
    out.push(points[0]);
    for b in 0..buckets {
        let lo = b * inner.len() / buckets;
        let hi = ((b + 1) * inner.len() / buckets).max(lo + 1).min(inner.len());
        let chunk = &inner[lo..hi];
        let (mut imin, mut imax) = (0, 0);
        for (i, p) in chunk.iter().enumerate() {
            if p.1 < chunk[imin].1 {
                imin = i;
            }
            if p.1 > chunk[imax].1 {
                imax = i;
            }
        }
        let (a, b) = if imin <= imax { (imin, imax) } else { (imax, imin) };
        out.push(chunk[a]);
        if b != a {
            out.push(chunk[b]);
        }
    }
    out.push(points[points.len() - 1]);
    out
}

fn range(panel: &Panel) -> ((f64, f64), (f64, f64)) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for p in panel.series.iter().flat_map(|s| &s.points) {
        if p.0.is_finite() && p.1.is_finite() {
            x = (x.0.min(p.0), x.1.max(p.0));
            y = (y.0.min(p.1), y.1.max(p.1));
        }
    }
    if !x.0.is_finite() {
        x = (0.0, 1.0);
        y = (-1.0, 1.0);
    }
    if x.1 <= x.0 {
        x.1 = x.0 + 1.0;
    }
    let pad = if y.1 > y.0 { 0.05 * (y.1 - y.0) } else { 0.5 * y.0.abs().max(1.0) };
    ((x.0, x.1), (y.0 - pad, y.1 + pad))
}

/// Stacks the panels vertically in one SVG file.
pub fn draw(path: &Path, title: &str, panels: &[Panel]) -> Result<()> {
    let height = SIZE.1.max(260 * panels.len() as u32);
    let root = SVGBackend::new(path, (SIZE.0, height)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let root = root
        .titled(title, ("sans-serif", 22))
        .map_err(|e| anyhow!("{e}"))?;
    let areas = root.split_evenly((panels.len().max(1), 1));
    for (area, panel) in areas.iter().zip(panels) {
        let ((x0, x1), (y0, y1)) = range(panel);
        let mut chart = ChartBuilder::on(area)
            .margin(8)
            .x_label_area_size(36)
            .y_label_area_size(70)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(|e| anyhow!("{e}"))?;
        chart
            .configure_mesh()
            .x_desc("t")
            .y_desc(panel.y_label.as_str())
            .light_line_style(WHITE.mix(0.0))
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
        for s in &panel.series {
            let color = PALETTE[s.color % PALETTE.len()];
            let pts = s.points.iter().copied().filter(|p| p.1.is_finite());
            let anno = if s.dashed {
                chart.draw_series(DashedLineSeries::new(pts, 6, 4, color.stroke_width(1)))
            } else {
                chart.draw_series(LineSeries::new(pts, color.stroke_width(1)))
            }
            .map_err(|e| anyhow!("{e}"))?;
            if !s.label.is_empty() {
                anno.label(s.label.as_str())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            }
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .position(SeriesLabelPosition::UpperRight)
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
    }
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

/// Figure set for one trace; `output` maps a row to the enveloped signal
/// and `reference` gives `y_d` for tracking runs.
pub fn write_figures(
    dir: &Path,
    rows: &[TraceRow],
    radii: &[f64],
    output: impl Fn(&TraceRow) -> f64,
    reference: Option<&dyn Fn(f64) -> f64>,
    quantized: bool,
) -> Result<Vec<PathBuf>> {
    let n = radii.len();
    let col = |f: &dyn Fn(&TraceRow) -> f64| rows.iter().map(|r| (r.t, f(r))).collect::<Vec<_>>();
    let mut written = Vec::new();

    let y_label = if reference.is_some() { "x1 - yd" } else { "x1" };
    let out_panel = Panel {
        y_label: y_label.into(),
        series: vec![
            Series::new(y_label, col(&|r| output(r)), 0),
            Series::new("envelope", col(&|r| r.env_lo), 1).dashed(),
            Series::new("", col(&|r| r.env_hi), 1).dashed(),
        ],
    };
    let path = dir.join("output.svg");
    draw(&path, "Output and prescribed envelope", &[out_panel])?;
    written.push(path);

    let state_panels: Vec<Panel> = (0..n)
        .map(|i| {
            let mut series = vec![Series::new(format!("x{}", i + 1), col(&|r| r.x[i]), 0)];
            if quantized {
                series.push(Series::new(format!("q(x{})", i + 1), col(&|r| r.qx[i]), 1));
            }
            if let (0, Some(yd)) = (i, reference) {
                series.push(Series::new("yd", col(&|r| yd(r.t)), 2).dashed());
            }
            Panel {
                y_label: format!("x{}", i + 1),
                series,
            }
        })
        .collect();
    let path = dir.join("states.svg");
    let title = if quantized { "States and quantized states" } else { "States" };
    draw(&path, title, &state_panels)?;
    written.push(path);

    let path = dir.join("control.svg");
    draw(
        &path,
        "Control input",
        &[Panel {
            y_label: "u".into(),
            series: vec![Series::new("u", col(&|r| r.u), 0)],
        }],
    )?;
    written.push(path);

    let err_panels: Vec<Panel> = (0..n)
        .map(|i| {
            let p = radii[i];
            Panel {
                y_label: format!("e{}", i + 1),
                series: vec![
                    Series::new(format!("e{}", i + 1), col(&|r| r.e[i]), 0),
                    Series::new(format!("+/- p{}", i + 1), col(&|_| p), 1).dashed(),
                    Series::new("", col(&|_| -p), 1).dashed(),
                ],
            }
        })
        .collect();
    let path = dir.join("errors.svg");
    draw(&path, "Errors and invariant-set radii", &err_panels)?;
    written.push(path);
    Ok(written)
}
