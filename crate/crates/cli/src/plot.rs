//! Static SVG figures drawn from the same numbers as the CSVs.

use std::path::Path;

use anyhow::anyhow;
use plotters::prelude::*;
use zcmes::agents::EpisodeLog;
use zcmes::env::StepTrace;

fn err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("plot: {e:?}")
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(230, 159, 0),
    RGBColor(86, 180, 233),
    RGBColor(0, 158, 115),
    RGBColor(213, 94, 0),
    RGBColor(0, 114, 178),
    RGBColor(204, 121, 167),
];

/// Stacked electricity supply against the electric load.
pub fn dispatch(path: &Path, trace: &[StepTrace]) -> anyhow::Result<()> {
    let layers: [(&str, fn(&StepTrace) -> f64); 4] = [
        ("renewables", |s| s.dispatch.res),
        ("gas turbine", |s| s.dispatch.gt_e),
        ("coal plant", |s| s.dispatch.cfp_e),
        ("battery out", |s| s.dispatch.bes_p.max(0.0)),
    ];
    let mut stacks = vec![vec![0.0; trace.len()]; layers.len() + 1];
    for (i, s) in trace.iter().enumerate() {
        for (k, (_, f)) in layers.iter().enumerate() {
            stacks[k + 1][i] = stacks[k][i] + f(s);
        }
    }
    let top = stacks.last().expect("layers").iter().copied().chain(trace.iter().map(|s| s.dispatch.el)).fold(0.0, f64::max);
    let root = SVGBackend::new(path, (900, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let n = trace.len().max(2) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("Electricity supply", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(0.0..n - 1.0, 0.0..top * 1.1 + 1.0)
        .map_err(err)?;
    chart.configure_mesh().x_desc("hour").y_desc("MW").draw().map_err(err)?;
    for k in (0..layers.len()).rev() {
        let upper: Vec<(f64, f64)> = stacks[k + 1].iter().enumerate().map(|(i, v)| (i as f64, *v)).collect();
        let lower: Vec<(f64, f64)> = stacks[k].iter().enumerate().rev().map(|(i, v)| (i as f64, *v)).collect();
        let color = PALETTE[k % PALETTE.len()];
        let poly: Vec<(f64, f64)> = upper.into_iter().chain(lower).collect();
        chart
            .draw_series(std::iter::once(Polygon::new(poly, color.mix(0.6).filled())))
            .map_err(err)?
            .label(layers[k].0)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
    }
    chart
        .draw_series(LineSeries::new(trace.iter().enumerate().map(|(i, s)| (i as f64, s.dispatch.el)), BLACK.stroke_width(2)))
        .map_err(err)?
        .label("electric load")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 12, y)], BLACK));
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw().map_err(err)?;
    root.present().map_err(err)
}

pub fn soc(path: &Path, trace: &[StepTrace]) -> anyhow::Result<()> {
    lines(
        path,
        "State of charge",
        "hour",
        "SOC",
        &[
            ("battery", trace.iter().enumerate().map(|(i, s)| (i as f64, s.dispatch.soc_b)).collect()),
            ("thermal store", trace.iter().enumerate().map(|(i, s)| (i as f64, s.dispatch.soc_h)).collect()),
        ],
    )
}

pub fn curve(path: &Path, curve: &[EpisodeLog]) -> anyhow::Result<()> {
    let pts: Vec<(f64, f64)> = curve.iter().filter(|e| e.complete).map(|e| (e.step as f64, e.ret)).collect();
    lines(path, "Learning curve", "step", "episode return", &[("return", pts)])
}

pub fn sweep(path: &Path, prices: &[f64], captured: &[f64], released: &[f64]) -> anyhow::Result<()> {
    let zip = |v: &[f64]| prices.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    lines(path, "Carbon price sweep", "carbon price ($/t)", "CO2 (t/day)", &[("captured", zip(captured)), ("released", zip(released))])
}

fn lines(path: &Path, title: &str, xd: &str, yd: &str, series: &[(&str, Vec<(f64, f64)>)]) -> anyhow::Result<()> {
    let (x0, x1) = span(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = span(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let root = SVGBackend::new(path, (900, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(72)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(err)?;
    chart.configure_mesh().x_desc(xd).y_desc(yd).draw().map_err(err)?;
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(err)?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 12, y)], color));
    }
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw().map_err(err)?;
    root.present().map_err(err)
}
