//! Benchmark datasets and the exact performance function.
//!
//! Performance of a 2D design is the density of an un-normalized Gaussian
//! mixture with six modes evenly spaced on a ring. Example 1 draws designs
//! uniformly over the data square; Example 2 concentrates half of them in a
//! small disk around one mode to simulate design-space imbalance. Labels are
//! min-max normalized over the generated set.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use crate::error::Error;
use crate::rng;
use crate::tensor::Tensor;

/// Number of mixture modes.
pub const MODE_COUNT: usize = 6;
/// Radius of the ring the mode centers sit on.
pub const MODE_RING_RADIUS: f64 = 0.4;
/// Standard deviation of each mixture component.
pub const MODE_WIDTH: f64 = 0.1;
/// Half-extent of the data square.
pub const DATA_HALF_EXTENT: f64 = 0.6;
/// Radius of Example 2's dense cluster (around the second mode).
pub const CLUSTER_RADIUS: f64 = 0.2;
/// Default training-set size.
pub const DEFAULT_TRAIN_POINTS: usize = 10_000;

/// Mode centers, the first at angle zero, counter-clockwise.
pub fn mode_centers() -> [[f64; 2]; MODE_COUNT] {
    let mut centers = [[0.0; 2]; MODE_COUNT];
    for (k, c) in centers.iter_mut().enumerate() {
        let angle = std::f64::consts::TAU * k as f64 / MODE_COUNT as f64;
        *c = [MODE_RING_RADIUS * angle.cos(), MODE_RING_RADIUS * angle.sin()];
    }
    centers
}

/// Exact performance of one design point.
pub fn quality_point(p: [f64; 2]) -> f64 {
    let inv = -1.0 / (2.0 * MODE_WIDTH * MODE_WIDTH);
    mode_centers()
        .iter()
        .map(|c| {
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            ((dx * dx + dy * dy) * inv).exp()
        })
        .sum()
}

/// Exact performance of a batch of points.
pub fn quality_batch(points: &[[f64; 2]]) -> Vec<f64> {
    points.iter().map(|&p| quality_point(p)).collect()
}

/// Differentiable performance of an `n x 2` tensor of points, as an `n x 1`
/// column. Serves as the exact estimator in the conditioning loss.
pub fn quality_tensor(points: &Tensor) -> Tensor {
    assert_eq!(points.cols(), 2, "quality_tensor: points must be n x 2");
    let inv = -1.0 / (2.0 * MODE_WIDTH * MODE_WIDTH);
    let mut total: Option<Tensor> = None;
    for c in mode_centers() {
        let shift = Tensor::constant(1, 2, vec![-c[0], -c[1]]);
        let d2 = points.add(&shift).square().row_sums();
        let g = d2.scale(inv).exp();
        total = Some(match total {
            None => g,
            Some(t) => t.add(&g),
        });
    }
    total.expect("at least one mode")
}

/// Which benchmark dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleId {
    /// Uniform over the data square.
    One,
    /// Half uniform, half clustered around the second mode.
    Two,
}

impl ExampleId {
    pub fn as_u8(self) -> u8 {
        match self {
            ExampleId::One => 1,
            ExampleId::Two => 2,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self, Error> {
        match v {
            1 => Ok(ExampleId::One),
            2 => Ok(ExampleId::Two),
            other => Err(Error::Contract(format!("unknown example id {other}"))),
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Affine map between raw performance values and normalized labels.
#[derive(Debug, Clone, Copy)]
pub struct LabelScale {
    min: f64,
    max: f64,
}

impl LabelScale {
    pub fn new(min: f64, max: f64) -> Result<Self, Error> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Contract(format!(
                "degenerate label range [{min}, {max}]"
            )));
        }
        Ok(LabelScale { min, max })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        (raw - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, value: f64) -> f64 {
        self.min + value * (self.max - self.min)
    }

    /// Coefficients `(mul, add)` such that `normalized = raw * mul + add`;
    /// used to express normalization as a graph op.
    pub fn affine_coeffs(&self) -> (f64, f64) {
        let mul = 1.0 / (self.max - self.min);
        (mul, -self.min * mul)
    }
}

/// One benchmark dataset: design points with raw and normalized labels.
#[derive(Debug, Clone)]
pub struct Dataset2D {
    pub example: ExampleId,
    pub seed: u64,
    pub points: Vec<[f64; 2]>,
    pub labels_raw: Vec<f64>,
    /// Min-max normalized labels in [0, 1].
    pub labels: Vec<f64>,
    scale: LabelScale,
}

impl Dataset2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scale(&self) -> LabelScale {
        self.scale
    }

    pub fn normalize_label(&self, raw: f64) -> f64 {
        self.scale.normalize(raw)
    }

    pub fn denormalize_label(&self, value: f64) -> f64 {
        self.scale.denormalize(value)
    }
}

/// Generate a benchmark dataset deterministically from a seed.
///
/// Labels are normalized over the generated set, so at least two distinct
/// performance values are required (always the case for the intended sizes).
pub fn generate_dataset(example: ExampleId, n: usize, seed: u64) -> Result<Dataset2D, Error> {
    if n < 1 {
        return Err(Error::Contract("generate_dataset: n must be >= 1".into()));
    }
    let mut r = rng::seeded(seed, rng::stream::DATASET);
    let mut points = Vec::with_capacity(n);
    let square = |r: &mut rand_chacha::ChaCha8Rng| {
        [
            -DATA_HALF_EXTENT + 2.0 * DATA_HALF_EXTENT * r.gen::<f64>(),
            -DATA_HALF_EXTENT + 2.0 * DATA_HALF_EXTENT * r.gen::<f64>(),
        ]
    };
    match example {
        ExampleId::One => {
            for _ in 0..n {
                points.push(square(&mut r));
            }
        }
        ExampleId::Two => {
            let n_square = n.div_ceil(2);
            for _ in 0..n_square {
                points.push(square(&mut r));
            }
            // Area-uniform disk around the second mode.
            let center = mode_centers()[1];
            for _ in 0..(n - n_square) {
                let radius = CLUSTER_RADIUS * r.gen::<f64>().sqrt();
                let angle = std::f64::consts::TAU * r.gen::<f64>();
                points.push([
                    center[0] + radius * angle.cos(),
                    center[1] + radius * angle.sin(),
                ]);
            }
        }
    }
    let labels_raw = quality_batch(&points);
    let min = labels_raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = labels_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = LabelScale::new(min, max)?;
    let labels = labels_raw.iter().map(|&v| scale.normalize(v)).collect();
    Ok(Dataset2D { example, seed, points, labels_raw, labels, scale })
}

impl Dataset2D {
    /// Persist as CSV with a metadata header line.
    pub fn save_csv(&self, path: &Path) -> Result<(), Error> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "# example_id={} seed={} sigma_q={} n={} label_min={} label_max={}",
            self.example,
            self.seed,
            MODE_WIDTH,
            self.len(),
            self.scale.min,
            self.scale.max
        )?;
        writeln!(out, "x1,x2,label_raw,label_norm")?;
        for (p, (raw, norm)) in self.points.iter().zip(self.labels_raw.iter().zip(&self.labels)) {
            writeln!(out, "{},{},{},{}", p[0], p[1], raw, norm)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Load a dataset written by [`save_csv`](Self::save_csv).
    pub fn load_csv(path: &Path) -> Result<Dataset2D, Error> {
        let file = BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Contract("dataset csv: empty file".into()))??;
        let meta = parse_header(&header)?;
        let example = ExampleId::from_u8(
            meta_value(&meta, "example_id")?.parse::<u8>().map_err(bad_meta)?,
        )?;
        let seed = meta_value(&meta, "seed")?.parse::<u64>().map_err(bad_meta)?;
        let min = meta_value(&meta, "label_min")?.parse::<f64>().map_err(bad_meta)?;
        let max = meta_value(&meta, "label_max")?.parse::<f64>().map_err(bad_meta)?;
        let scale = LabelScale::new(min, max)?;
        // Column header line.
        lines.next().transpose()?;
        let mut points = Vec::new();
        let mut labels_raw = Vec::new();
        let mut labels = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = || -> Result<f64, Error> {
                cols.next()
                    .ok_or_else(|| Error::Contract(format!("dataset csv: short row `{line}`")))?
                    .parse::<f64>()
                    .map_err(|e| Error::Contract(format!("dataset csv: {e} in `{line}`")))
            };
            points.push([next()?, next()?]);
            labels_raw.push(next()?);
            labels.push(next()?);
        }
        Ok(Dataset2D { example, seed, points, labels_raw, labels, scale })
    }
}

fn parse_header(line: &str) -> Result<Vec<(String, String)>, Error> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Contract("dataset csv: missing metadata header".into()))?;
    Ok(body
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

fn meta_value<'a>(meta: &'a [(String, String)], key: &str) -> Result<&'a str, Error> {
    meta.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Contract(format!("dataset csv: missing `{key}` in header")))
}

fn bad_meta<E: std::fmt::Display>(e: E) -> Error {
    Error::Contract(format!("dataset csv: bad metadata value: {e}"))
}
