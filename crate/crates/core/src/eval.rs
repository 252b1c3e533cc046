//! Evaluation metrics and the condition-sweep protocol.
//!
//! Three metrics per condition: mean absolute label error, the KDE density
//! of the generated labels at the condition (bandwidth picked by
//! cross-validated grid search), and a diversity score (mean log-determinant
//! of RBF similarity over random sample subsets; closer to zero is more
//! diverse). Sweep cells are independent, draw from per-cell random streams,
//! and may run in parallel without changing any result.

use std::io::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::Error;
use crate::linalg;
use crate::nn::{conditioned_forward_snapshot, MlpSnapshot};
use crate::par;
use crate::rng;
use crate::synthetic::{quality_point, LabelScale};

/// Format with 9 significant digits; positional in a readable range,
/// scientific outside it. Deterministic, parseable by `f64::from_str`.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..9).contains(&exp) {
        format!("{:.*}", (8 - exp).max(0) as usize, x)
    } else {
        format!("{x:.8e}")
    }
}

/// Mean absolute error between conditions and predicted labels.
pub fn label_error(conditions: &[f64], predicted: &[f64]) -> Result<f64, Error> {
    if conditions.is_empty() || conditions.len() != predicted.len() {
        return Err(Error::Contract(format!(
            "label_error: got {} conditions vs {} predictions",
            conditions.len(),
            predicted.len()
        )));
    }
    let total: f64 = conditions
        .iter()
        .zip(predicted)
        .map(|(c, y)| (c - y).abs())
        .sum();
    Ok(total / conditions.len() as f64)
}

/// KDE bandwidth-selection settings.
#[derive(Debug, Clone, Copy)]
pub struct KdeConfig {
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_len: usize,
    pub folds: usize,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig { grid_min: 1e-3, grid_max: 1.0, grid_len: 20, folds: 5 }
    }
}

/// Density estimate at the condition plus the selection outcome.
#[derive(Debug, Clone, Copy)]
pub struct LikelihoodOutcome {
    pub density: f64,
    pub bandwidth: f64,
    /// All sample labels were identical; the bandwidth was floored.
    pub degenerate: bool,
}

fn kde_density(at: f64, labels: &[f64], bandwidth: f64) -> f64 {
    let norm = 1.0 / ((std::f64::consts::TAU).sqrt() * bandwidth * labels.len() as f64);
    labels
        .iter()
        .map(|&y| {
            let t = (at - y) / bandwidth;
            (-0.5 * t * t).exp()
        })
        .sum::<f64>()
        * norm
}

/// Gaussian KDE of the labels evaluated at `condition`.
///
/// Bandwidth maximizes the cross-validated held-out log-likelihood over a
/// log-spaced grid; a fully degenerate label set floors the bandwidth at the
/// grid minimum and flags the outcome.
pub fn likelihood_score(
    condition: f64,
    labels: &[f64],
    cfg: &KdeConfig,
) -> Result<LikelihoodOutcome, Error> {
    if labels.len() < 2 {
        return Err(Error::Contract(format!(
            "likelihood_score: need >= 2 labels, got {}",
            labels.len()
        )));
    }
    let degenerate = labels.iter().all(|&y| y == labels[0]);
    if degenerate {
        return Ok(LikelihoodOutcome {
            density: kde_density(condition, labels, cfg.grid_min),
            bandwidth: cfg.grid_min,
            degenerate: true,
        });
    }

    // Sorting makes the fold split, and therefore the whole score,
    // invariant to the order the labels arrived in.
    let mut sorted = labels.to_vec();
    sorted.sort_by(f64::total_cmp);

    let grid: Vec<f64> = (0..cfg.grid_len)
        .map(|i| {
            let t = i as f64 / (cfg.grid_len - 1).max(1) as f64;
            cfg.grid_min * (cfg.grid_max / cfg.grid_min).powf(t)
        })
        .collect();
    let folds = cfg.folds.clamp(2, sorted.len());
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &h in &grid {
        let mut total = 0.0;
        let mut count = 0usize;
        // Interleaved fold assignment over the sorted labels keeps every
        // fold representative of the whole distribution.
        for f in 0..folds {
            let train: Vec<f64> = sorted
                .iter()
                .enumerate()
                .filter(|(i, _)| i % folds != f)
                .map(|(_, &y)| y)
                .collect();
            if train.is_empty() {
                continue;
            }
            for (_, &y) in sorted.iter().enumerate().filter(|(i, _)| i % folds == f) {
                total += kde_density(y, &train, h).max(1e-300).ln();
                count += 1;
            }
        }
        let mean = total / count.max(1) as f64;
        if mean > best.0 {
            best = (mean, h);
        }
    }
    Ok(LikelihoodOutcome {
        density: kde_density(condition, &sorted, best.1),
        bandwidth: best.1,
        degenerate: false,
    })
}

/// Diversity-score settings.
#[derive(Debug, Clone, Copy)]
pub struct DiversityConfig {
    pub bandwidth: f64,
    pub subset_size: usize,
    pub n_subsets: usize,
    /// Diagonal added only when a subset's similarity matrix is degenerate.
    pub jitter: f64,
    pub parallel: bool,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        DiversityConfig {
            bandwidth: 1.0,
            subset_size: 10,
            n_subsets: 1000,
            jitter: 1e-10,
            parallel: cfg!(feature = "parallel"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DiversityOutcome {
    pub score: f64,
    /// Subsets whose similarity matrix needed the jitter.
    pub degenerate_subsets: usize,
}

/// Mean log-determinant of the RBF similarity over random subsets.
///
/// Subset indices are drawn sequentially from `rng` up front; the
/// log-determinants are then computed (optionally in parallel) in index
/// order, so the score is independent of scheduling.
pub fn diversity_score<R: Rng>(
    points: &[[f64; 2]],
    cfg: &DiversityConfig,
    rng: &mut R,
) -> Result<DiversityOutcome, Error> {
    if points.len() < cfg.subset_size {
        return Err(Error::Contract(format!(
            "diversity_score: {} samples < subset size {}",
            points.len(),
            cfg.subset_size
        )));
    }
    if cfg.subset_size == 0 || cfg.n_subsets == 0 {
        return Err(Error::Contract("diversity_score: empty protocol".into()));
    }
    let mut subsets: Vec<Vec<u32>> = Vec::with_capacity(cfg.n_subsets);
    let mut buf: Vec<u32> = Vec::with_capacity(cfg.subset_size);
    for _ in 0..cfg.n_subsets {
        buf.clear();
        while buf.len() < cfg.subset_size {
            let i = rng.gen_range(0..points.len()) as u32;
            if !buf.contains(&i) {
                buf.push(i);
            }
        }
        subsets.push(buf.clone());
    }

    let m = cfg.subset_size;
    let inv = -0.5 / (cfg.bandwidth * cfg.bandwidth);
    let results = par::map_indexed(cfg.n_subsets, cfg.parallel, |s| {
        let idx = &subsets[s];
        let mut k = vec![0.0; m * m];
        for i in 0..m {
            k[i * m + i] = 1.0;
            let pi = points[idx[i] as usize];
            for j in (i + 1)..m {
                let pj = points[idx[j] as usize];
                let dx = pi[0] - pj[0];
                let dy = pi[1] - pj[1];
                let v = ((dx * dx + dy * dy) * inv).exp();
                k[i * m + j] = v;
                k[j * m + i] = v;
            }
        }
        match linalg::spd_logdet(&k, m) {
            Some(ld) => (ld, false),
            None => {
                let mut jitter = cfg.jitter;
                loop {
                    let mut kj = k.clone();
                    for i in 0..m {
                        kj[i * m + i] += jitter;
                    }
                    if let Some(ld) = linalg::spd_logdet(&kj, m) {
                        return (ld, true);
                    }
                    jitter *= 10.0;
                    if jitter > 1.0 {
                        return (f64::NEG_INFINITY, true);
                    }
                }
            }
        }
    });
    let degenerate = results.iter().filter(|r| r.1).count();
    let score = results.iter().map(|r| r.0).sum::<f64>() / cfg.n_subsets as f64;
    Ok(DiversityOutcome { score, degenerate_subsets: degenerate })
}

/// Full sweep protocol.
#[derive(Debug, Clone, Copy)]
pub struct EvalProtocol {
    pub n_conditions: usize,
    pub condition_min: f64,
    pub condition_max: f64,
    pub samples_per_condition: usize,
    pub repeats: usize,
    pub diversity: DiversityConfig,
    pub kde: KdeConfig,
    pub parallel: bool,
}

impl EvalProtocol {
    /// Desk-scale defaults: a full comparison finishes in minutes.
    pub fn desk() -> Self {
        EvalProtocol {
            n_conditions: 10,
            condition_min: 0.05,
            condition_max: 0.95,
            samples_per_condition: 1000,
            repeats: 3,
            diversity: DiversityConfig::default(),
            kde: KdeConfig::default(),
            parallel: cfg!(feature = "parallel"),
        }
    }

    /// The reported protocol: 100 conditions, 10 repeats.
    pub fn full() -> Self {
        EvalProtocol { n_conditions: 100, repeats: 10, ..Self::desk() }
    }

    pub fn conditions(&self) -> Vec<f64> {
        if self.n_conditions == 1 {
            return vec![0.5 * (self.condition_min + self.condition_max)];
        }
        (0..self.n_conditions)
            .map(|i| {
                self.condition_min
                    + (self.condition_max - self.condition_min) * i as f64
                        / (self.n_conditions - 1) as f64
            })
            .collect()
    }
}

/// One condition x repeat measurement.
#[derive(Debug, Clone, Copy)]
pub struct EvalCell {
    pub condition: f64,
    pub repeat: usize,
    pub label_error: f64,
    pub likelihood: f64,
    pub diversity: f64,
    pub kde_bandwidth: f64,
    pub kde_degenerate: bool,
    pub degenerate_subsets: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> MeanStd {
    let n = values.clone().count();
    if n == 0 {
        return MeanStd::default();
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return MeanStd { mean, std: 0.0 };
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    MeanStd { mean, std: var.sqrt() }
}

/// Metrics for a full sweep plus aggregates.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub run_id: String,
    pub model_tag: String,
    pub seed: u64,
    pub cells: Vec<EvalCell>,
    pub label_error: MeanStd,
    pub likelihood: MeanStd,
    pub diversity: MeanStd,
}

/// Sweep the conditions with a trained generator.
///
/// Each (condition, repeat) cell derives its own random stream from the
/// seed, generates `samples_per_condition` designs at that condition, and
/// computes all three metrics against the exact performance function.
pub fn evaluate(
    generator: &MlpSnapshot,
    scale: &LabelScale,
    protocol: &EvalProtocol,
    seed: u64,
    run_id: &str,
    model_tag: &str,
) -> Result<EvalReport, Error> {
    let conditions = protocol.conditions();
    let noise_dim = generator.dims[0] - 1;
    let n = protocol.samples_per_condition;
    let cell_count = conditions.len() * protocol.repeats;
    let results: Vec<Result<EvalCell, Error>> =
        par::map_indexed(cell_count, protocol.parallel, |cell| {
            let ci = cell / protocol.repeats;
            let repeat = cell % protocol.repeats;
            let condition = conditions[ci];
            let mut cell_rng = rng::eval_cell(seed, ci, repeat);

            let mut z = vec![0.0; n * noise_dim];
            rng::fill_normal(&mut cell_rng, &mut z);
            let labels_in = vec![condition; n];
            let flat = conditioned_forward_snapshot(generator, &z, &labels_in, n);
            let mut points = Vec::with_capacity(n);
            for i in 0..n {
                let p = [flat[2 * i], flat[2 * i + 1]];
                if !p[0].is_finite() || !p[1].is_finite() {
                    return Err(Error::Numeric {
                        op: "evaluate",
                        detail: format!(
                            "non-finite generated point at condition {condition} repeat {repeat}"
                        ),
                    });
                }
                points.push(p);
            }
            let predicted: Vec<f64> =
                points.iter().map(|&p| scale.normalize(quality_point(p))).collect();
            let err = label_error(&labels_in, &predicted)?;
            let kde = likelihood_score(condition, &predicted, &protocol.kde)?;
            let div = diversity_score(&points, &protocol.diversity, &mut cell_rng)?;
            Ok(EvalCell {
                condition,
                repeat,
                label_error: err,
                likelihood: kde.density,
                diversity: div.score,
                kde_bandwidth: kde.bandwidth,
                kde_degenerate: kde.degenerate,
                degenerate_subsets: div.degenerate_subsets,
            })
        });
    let mut cells = Vec::with_capacity(cell_count);
    for r in results {
        cells.push(r?);
    }
    Ok(EvalReport {
        run_id: run_id.to_string(),
        model_tag: model_tag.to_string(),
        seed,
        label_error: mean_std(cells.iter().map(|c| c.label_error)),
        likelihood: mean_std(cells.iter().map(|c| c.likelihood)),
        diversity: mean_std(cells.iter().map(|c| c.diversity)),
        cells,
    })
}

impl EvalReport {
    /// One row per condition x repeat, 9 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<(), Error> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "condition,repeat,label_error,likelihood_score,diversity_score,kde_bandwidth,kde_degenerate,degenerate_subsets"
        )?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                sig9(c.condition),
                c.repeat,
                sig9(c.label_error),
                sig9(c.likelihood),
                sig9(c.diversity),
                sig9(c.kde_bandwidth),
                u8::from(c.kde_degenerate),
                c.degenerate_subsets
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// Aggregates plus a config echo, as a flat text summary.
    pub fn write_summary(&self, path: &Path, config_echo: &str) -> Result<(), Error> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "run_id={}", self.run_id)?;
        writeln!(out, "model={}", self.model_tag)?;
        writeln!(out, "seed={}", self.seed)?;
        writeln!(out, "cells={}", self.cells.len())?;
        writeln!(out, "label_error_mean={}", sig9(self.label_error.mean))?;
        writeln!(out, "label_error_std={}", sig9(self.label_error.std))?;
        writeln!(out, "likelihood_mean={}", sig9(self.likelihood.mean))?;
        writeln!(out, "likelihood_std={}", sig9(self.likelihood.std))?;
        writeln!(out, "diversity_mean={}", sig9(self.diversity.mean))?;
        writeln!(out, "diversity_std={}", sig9(self.diversity.std))?;
        for line in config_echo.lines() {
            writeln!(out, "config.{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parse cells back from a report CSV (for plotting).
    pub fn read_cells(path: &Path) -> Result<Vec<EvalCell>, Error> {
        let text = std::fs::read_to_string(path)?;
        let mut cells = Vec::new();
        for line in text.lines().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 8 {
                return Err(Error::Contract(format!("short report row `{line}`")));
            }
            let f = |i: usize| -> Result<f64, Error> {
                cols[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Contract(format!("bad report value: {e}")))
            };
            cells.push(EvalCell {
                condition: f(0)?,
                repeat: cols[1]
                    .parse::<usize>()
                    .map_err(|e| Error::Contract(format!("bad repeat: {e}")))?,
                label_error: f(2)?,
                likelihood: f(3)?,
                diversity: f(4)?,
                kde_bandwidth: f(5)?,
                kde_degenerate: cols[6] == "1",
                degenerate_subsets: cols[7]
                    .parse::<usize>()
                    .map_err(|e| Error::Contract(format!("bad subset count: {e}")))?,
            });
        }
        Ok(cells)
    }

    /// Parse the aggregate lines back from a summary file.
    pub fn read_summary_aggregates(path: &Path) -> Result<SummaryAggregates, Error> {
        let text = std::fs::read_to_string(path)?;
        let get = |key: &str| -> Result<String, Error> {
            text.lines()
                .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
                .ok_or_else(|| Error::Contract(format!("summary missing `{key}`")))
        };
        let parse = |s: String| -> Result<f64, Error> {
            s.parse::<f64>()
                .map_err(|e| Error::Contract(format!("bad summary value: {e}")))
        };
        Ok(SummaryAggregates {
            run_id: get("run_id")?,
            model_tag: get("model")?,
            label_error_mean: parse(get("label_error_mean")?)?,
            likelihood_mean: parse(get("likelihood_mean")?)?,
            diversity_mean: parse(get("diversity_mean")?)?,
        })
    }
}

/// Aggregate lines parsed back from a summary file.
#[derive(Debug, Clone)]
pub struct SummaryAggregates {
    pub run_id: String,
    pub model_tag: String,
    pub label_error_mean: f64,
    pub likelihood_mean: f64,
    pub diversity_mean: f64,
}
