//! Static SVG plots and the cross-run comparison table.
//!
//! Hand-rolled SVG keeps the output byte-deterministic: a scatter of
//! generated designs over the performance contour, and per-metric curves
//! across the condition sweep with mean +/- std bands per run.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::Error;
use crate::eval::{sig9, EvalCell};
use crate::synthetic::{self, quality_point};

const PALETTE: [&str; 4] = ["#d95f02", "#1b9e77", "#7570b3", "#e7298a"];

/// Scatter of generated points over the performance-function heat map.
/// Axes are fixed to [-0.8, 0.8]^2 so plots compare across models.
pub fn scatter_svg(
    points: &[[f64; 2]],
    condition: f64,
    title: &str,
    path: &Path,
) -> Result<(), Error> {
    let size = 640.0;
    let margin = 40.0;
    let span = size - 2.0 * margin;
    let lo = -0.8;
    let hi = 0.8;
    let to_px = |v: f64| margin + (v - lo) / (hi - lo) * span;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    );
    let _ = write!(svg, "<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>\n");

    // Heat map of the performance function on an 80x80 grid.
    let cells = 80usize;
    let peak = quality_point(synthetic::mode_centers()[0]);
    let cell_px = span / cells as f64;
    for i in 0..cells {
        for j in 0..cells {
            let x = lo + (hi - lo) * (i as f64 + 0.5) / cells as f64;
            let y = lo + (hi - lo) * (j as f64 + 0.5) / cells as f64;
            let t = (quality_point([x, y]) / peak).clamp(0.0, 1.0).powf(0.45);
            if t < 0.02 {
                continue;
            }
            // White to steel blue.
            let r = (255.0 - t * (255.0 - 70.0)) as u8;
            let g = (255.0 - t * (255.0 - 130.0)) as u8;
            let b = (255.0 - t * (255.0 - 180.0)) as u8;
            let px = margin + i as f64 * cell_px;
            // SVG y grows downward.
            let py = margin + span - (j as f64 + 1.0) * cell_px;
            let _ = write!(
                svg,
                "<rect x=\"{px:.2}\" y=\"{py:.2}\" width=\"{cell_px:.2}\" height=\"{cell_px:.2}\" fill=\"rgb({r},{g},{b})\"/>\n"
            );
        }
    }

    for c in synthetic::mode_centers() {
        let (cx, cy) = (to_px(c[0]), size - to_px(c[1]));
        let _ = write!(
            svg,
            "<path d=\"M {x0:.2} {cy:.2} H {x1:.2} M {cx:.2} {y0:.2} V {y1:.2}\" stroke=\"#444\" stroke-width=\"1\"/>\n",
            x0 = cx - 5.0,
            x1 = cx + 5.0,
            y0 = cy - 5.0,
            y1 = cy + 5.0
        );
    }
    for p in points {
        let x = to_px(p[0].clamp(lo, hi));
        let y = size - to_px(p[1].clamp(lo, hi));
        let _ = write!(
            svg,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2\" fill=\"{}\" fill-opacity=\"0.65\"/>\n",
            PALETTE[0]
        );
    }
    let _ = write!(
        svg,
        "<rect x=\"{margin}\" y=\"{margin}\" width=\"{span}\" height=\"{span}\" fill=\"none\" stroke=\"#222\"/>\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{margin}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title} (condition {cond})</text>\n",
        cond = trim_num(condition)
    );
    let _ = write!(svg, "</svg>\n");
    write_file(path, &svg)
}

/// Per-condition mean and spread for one run's metric.
pub struct MetricCurve {
    pub label: String,
    pub conditions: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Condition-sweep curves for one metric, one band per run.
pub fn metric_curves_svg(metric_name: &str, curves: &[MetricCurve], path: &Path) -> Result<(), Error> {
    if curves.is_empty() {
        return Err(Error::Contract("metric_curves_svg: no curves".into()));
    }
    let (w, h) = (800.0, 500.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let plot_w = w - ml - mr;
    let plot_h = h - mt - mb;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in curves {
        for (m, s) in c.mean.iter().zip(&c.std) {
            lo = lo.min(m - s);
            hi = hi.max(m + s);
        }
    }
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    let x_px = |c: f64| ml + c * plot_w;
    let y_px = |v: f64| mt + (hi - v) / (hi - lo) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    let _ = write!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n");
    let _ = write!(
        svg,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#222\"/>\n"
    );
    // Horizontal grid lines with value labels.
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_px(v);
        let _ = write!(
            svg,
            "<line x1=\"{ml}\" y1=\"{y:.2}\" x2=\"{x2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\n",
            x2 = ml + plot_w
        );
        let _ = write!(
            svg,
            "<text x=\"{x}\" y=\"{ty:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{label}</text>\n",
            x = ml - 6.0,
            ty = y + 4.0,
            label = trim_num(v)
        );
    }
    for (idx, curve) in curves.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        // Band polygon: mean + std forward, mean - std back.
        let mut band = String::new();
        for (c, (m, s)) in curve.conditions.iter().zip(curve.mean.iter().zip(&curve.std)) {
            let _ = write!(band, "{:.2},{:.2} ", x_px(*c), y_px(m + s));
        }
        for (c, (m, s)) in curve
            .conditions
            .iter()
            .zip(curve.mean.iter().zip(&curve.std))
            .rev()
        {
            let _ = write!(band, "{:.2},{:.2} ", x_px(*c), y_px(m - s));
        }
        let _ = write!(
            svg,
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n",
            band.trim_end()
        );
        let mut line = String::new();
        for (c, m) in curve.conditions.iter().zip(&curve.mean) {
            let _ = write!(line, "{:.2},{:.2} ", x_px(*c), y_px(*m));
        }
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            line.trim_end()
        );
        // Legend entry.
        let ly = mt + 16.0 + 18.0 * idx as f64;
        let _ = write!(
            svg,
            "<rect x=\"{x}\" y=\"{y:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            x = ml + 10.0,
            y = ly - 10.0
        );
        let _ = write!(
            svg,
            "<text x=\"{x}\" y=\"{ly:.2}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            curve.label,
            x = ml + 28.0
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{ml}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{metric_name} vs condition</text>\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">condition</text>\n",
        x = ml + plot_w / 2.0,
        y = h - 14.0
    );
    let _ = write!(svg, "</svg>\n");
    write_file(path, &svg)
}

/// Per-condition mean/std across repeats from evaluation cells.
pub fn curve_from_cells(label: &str, cells: &[EvalCell], metric: fn(&EvalCell) -> f64) -> MetricCurve {
    let mut conditions: Vec<f64> = cells.iter().map(|c| c.condition).collect();
    conditions.sort_by(f64::total_cmp);
    conditions.dedup();
    let mut mean = Vec::with_capacity(conditions.len());
    let mut std = Vec::with_capacity(conditions.len());
    for &c in &conditions {
        let vals: Vec<f64> = cells
            .iter()
            .filter(|cell| cell.condition == c)
            .map(metric)
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = if vals.len() > 1 {
            vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (vals.len() - 1) as f64
        } else {
            0.0
        };
        mean.push(m);
        std.push(v.sqrt());
    }
    MetricCurve { label: label.to_string(), conditions, mean, std }
}

/// One run's aggregates plus identity, for the comparison table.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub example: String,
    pub model: String,
    pub run_id: String,
    pub likelihood_mean: f64,
    pub label_error_mean: f64,
    pub diversity_mean: f64,
}

/// Read a run directory's identity (config echo) and aggregates (summary).
pub fn load_run_summary(run_dir: &Path) -> Result<RunSummary, Error> {
    let config = std::fs::read_to_string(run_dir.join("config.txt"))?;
    let field = |key: &str| -> Result<String, Error> {
        config
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
            .ok_or_else(|| Error::Contract(format!("config.txt missing `{key}`")))
    };
    let agg = crate::eval::EvalReport::read_summary_aggregates(&run_dir.join("eval_summary.txt"))?;
    Ok(RunSummary {
        example: field("example")?,
        model: field("model")?,
        run_id: agg.run_id,
        likelihood_mean: agg.likelihood_mean,
        label_error_mean: agg.label_error_mean,
        diversity_mean: agg.diversity_mean,
    })
}

/// Comparison table across runs: one row per (example, model) with mean and
/// std over the runs' aggregate metrics.
pub fn write_comparison_csv(runs: &[RunSummary], path: &Path) -> Result<(), Error> {
    if runs.is_empty() {
        return Err(Error::Contract("write_comparison_csv: no runs".into()));
    }
    let mut groups: Vec<(String, String)> = runs
        .iter()
        .map(|r| (r.example.clone(), r.model.clone()))
        .collect();
    groups.sort();
    groups.dedup();

    let stat = |vals: &[f64]| -> (f64, f64) {
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = if vals.len() > 1 {
            vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (vals.len() - 1) as f64
        } else {
            0.0
        };
        (m, v.sqrt())
    };

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "example,model,runs,likelihood_mean,likelihood_std,label_error_mean,label_error_std,diversity_mean,diversity_std"
    )?;
    for (example, model) in groups {
        let members: Vec<&RunSummary> = runs
            .iter()
            .filter(|r| r.example == example && r.model == model)
            .collect();
        let lik: Vec<f64> = members.iter().map(|r| r.likelihood_mean).collect();
        let err: Vec<f64> = members.iter().map(|r| r.label_error_mean).collect();
        let div: Vec<f64> = members.iter().map(|r| r.diversity_mean).collect();
        let (lm, ls) = stat(&lik);
        let (em, es) = stat(&err);
        let (dm, ds) = stat(&div);
        writeln!(
            out,
            "{example},{model},{},{},{},{},{},{},{}",
            members.len(),
            sig9(lm),
            sig9(ls),
            sig9(em),
            sig9(es),
            sig9(dm),
            sig9(ds)
        )?;
    }
    out.flush()?;
    Ok(())
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}
