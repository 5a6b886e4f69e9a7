//! CSV, text and SVG outputs of evaluation runs.

use std::fmt::Write as _;

use super::metrics::MetricsRecord;
use crate::data::Scene;

pub const METRICS_HEADER: &str = "dataset,strategy,gamma,min_ade,min_fde,mean_ade,mean_fde,avg_entropy,avg_density";
pub const CATEGORY_HEADER: &str = "dataset,strategy,gamma,category,min_ade,min_fde,mean_ade,mean_fde";
pub const PREDICTION_HEADER: &str = "scene_id,sample_id,agent_id,t,x,y";
pub const GRAPH_STATS_HEADER: &str = "scene_id,window,num_agents,edges,entropy,density";

/// Labels attached to each metrics row.
#[derive(Clone, Debug, PartialEq)]
pub struct RunLabel {
    pub dataset: String,
    pub strategy: String,
    pub gamma: f64,
}

pub fn metrics_csv(label: &RunLabel, m: &MetricsRecord) -> String {
    let o = &m.overall;
    format!(
        "{METRICS_HEADER}\n{},{},{},{:.10},{:.10},{:.10},{:.10},{:.10},{:.10}\n",
        label.dataset, label.strategy, label.gamma, o.min_ade, o.min_fde, o.mean_ade, o.mean_fde, m.avg_entropy, m.avg_density
    )
}

pub fn category_csv(label: &RunLabel, m: &MetricsRecord) -> String {
    let mut out = format!("{CATEGORY_HEADER}\n");
    for (c, e) in &m.per_category {
        writeln!(
            out,
            "{},{},{},{c},{:.10},{:.10},{:.10},{:.10}",
            label.dataset, label.strategy, label.gamma, e.min_ade, e.min_fde, e.mean_ade, e.mean_fde
        )
        .expect("write to string");
    }
    out
}

/// Rows of the prediction export; `predicted[agent][k]` is future step `history + k`.
pub fn prediction_rows(out: &mut String, scene: &Scene, sample: usize, history: usize, predicted: &[Vec<[f64; 2]>]) {
    for (agent, row) in predicted.iter().enumerate() {
        for (k, p) in row.iter().enumerate() {
            writeln!(out, "{},{sample},{agent},{},{:.10},{:.10}", scene.scene_id, history + k, p[0], p[1])
                .expect("write to string");
        }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot of true (solid) and predicted (dashed) trajectories, colored by category.
pub fn trajectory_svg(scene: &Scene, history: usize, predicted: &[Vec<[f64; 2]>]) -> String {
    let (w, h, pad) = (480.0, 480.0, 20.0);
    let mut pts: Vec<[f64; 2]> = (0..scene.num_agents())
        .flat_map(|i| (0..scene.steps()).map(move |t| (i, t)))
        .map(|(i, t)| scene.position(i, t))
        .collect();
    pts.extend(predicted.iter().flatten().copied());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts.iter().filter(|p| p[0].is_finite() && p[1].is_finite()) {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let map = |p: [f64; 2]| {
        (
            pad + (p[0] - x0) / span * (w - 2.0 * pad),
            h - pad - (p[1] - y0) / span * (h - 2.0 * pad),
        )
    };
    let poly = |points: &mut dyn Iterator<Item = [f64; 2]>| {
        points
            .map(|p| {
                let (x, y) = map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    for i in 0..scene.num_agents() {
        let color = PALETTE[scene.categories[i] % PALETTE.len()];
        let truth = poly(&mut (0..scene.steps()).map(|t| scene.position(i, t)));
        writeln!(out, "<polyline points=\"{truth}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>")
            .expect("write to string");
        if let Some(row) = predicted.get(i) {
            let start = scene.position(i, history - 1);
            let pred = poly(&mut std::iter::once(start).chain(row.iter().copied()));
            writeln!(
                out,
                "<polyline points=\"{pred}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"/>"
            )
            .expect("write to string");
        }
    }
    out.push_str("</svg>\n");
    out
}
