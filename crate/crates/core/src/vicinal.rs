//! Vicinal GAN losses with singular or uniform label sampling.
//!
//! Each training step picks one or more target labels, perturbs them with
//! Gaussian noise, and trains on samples whose labels fall in the target's
//! vicinity: hard mode selects within a half-width and weights uniformly,
//! soft mode selects from all data and weights by a Gaussian in label
//! distance. Singular sampling picks a single data label nearest a uniform
//! draw over label space (one vicinity per step, immune to label imbalance);
//! uniform sampling draws a batch of labels straight from the data, which is
//! the baseline behaviour.

use rand::Rng;

use crate::error::Error;
use crate::nn::{conditioned_forward, Mlp};
use crate::rng::next_normal;
use crate::synthetic::Dataset2D;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VicinityMode {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSampling {
    /// One data label per step, nearest to a uniform draw over label space.
    Singular,
    /// A batch of labels drawn uniformly from the data (baseline).
    Uniform,
}

/// Vicinity hyper-parameters and loss constants.
#[derive(Debug, Clone, Copy)]
pub struct VicinalConfig {
    /// Std of the Gaussian noise added to target labels.
    pub label_noise_std: f64,
    /// Hard-vicinity half-width.
    pub vicinity_half_width: f64,
    /// Soft-weight decay rate.
    pub soft_weight_rate: f64,
    pub mode: VicinityMode,
    pub label_sampling: LabelSampling,
    /// Loss constants: [hard real, hard fake, soft real, soft fake].
    pub loss_scales: [f64; 4],
}

impl VicinalConfig {
    /// Rule-of-thumb parameters from the dataset labels: Silverman-style
    /// noise std, half-width = max adjacent gap of the sorted unique labels
    /// (guarantees non-empty hard vicinities), rate = 1 / half_width^2.
    pub fn from_labels(
        labels: &[f64],
        mode: VicinityMode,
        label_sampling: LabelSampling,
    ) -> Result<VicinalConfig, Error> {
        let (sigma, kappa, nu) = rule_of_thumb(labels)?;
        Ok(VicinalConfig {
            label_noise_std: sigma,
            vicinity_half_width: kappa,
            soft_weight_rate: nu,
            mode,
            label_sampling,
            loss_scales: [1.0; 4],
        })
    }

    fn real_scale(&self) -> f64 {
        match self.mode {
            VicinityMode::Hard => self.loss_scales[0],
            VicinityMode::Soft => self.loss_scales[2],
        }
    }

    fn fake_scale(&self) -> f64 {
        match self.mode {
            VicinityMode::Hard => self.loss_scales[1],
            VicinityMode::Soft => self.loss_scales[3],
        }
    }
}

/// `(noise_std, half_width, weight_rate)` from a label sample.
pub fn rule_of_thumb(labels: &[f64]) -> Result<(f64, f64, f64), Error> {
    if labels.len() < 2 {
        return Err(Error::Contract("rule_of_thumb: need at least 2 labels".into()));
    }
    let n = labels.len() as f64;
    let mean = labels.iter().sum::<f64>() / n;
    let var = labels.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let sigma = 1.06 * var.sqrt() * n.powf(-0.2);
    let mut sorted = labels.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let kappa = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0_f64, f64::max);
    if !(kappa > 0.0) || !(sigma > 0.0) {
        return Err(Error::Contract(
            "rule_of_thumb: degenerate label distribution".into(),
        ));
    }
    Ok((sigma, kappa, 1.0 / (kappa * kappa)))
}

/// Sorted label index for cheap nearest/vicinity queries.
pub struct LabelIndex {
    /// Labels in ascending order.
    sorted: Vec<f64>,
    /// `sorted[i]` came from dataset index `order[i]`.
    order: Vec<u32>,
}

impl LabelIndex {
    pub fn new(labels: &[f64]) -> LabelIndex {
        let mut pairs: Vec<(f64, u32)> =
            labels.iter().enumerate().map(|(i, &y)| (y, i as u32)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        LabelIndex {
            sorted: pairs.iter().map(|p| p.0).collect(),
            order: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        *self.sorted.last().unwrap()
    }

    /// Label nearest to `u`; ties resolve to the smaller label.
    pub fn nearest(&self, u: f64) -> f64 {
        let i = self.sorted.partition_point(|&y| y < u);
        if i == 0 {
            return self.sorted[0];
        }
        if i == self.sorted.len() {
            return self.sorted[i - 1];
        }
        let (lo, hi) = (self.sorted[i - 1], self.sorted[i]);
        if u - lo <= hi - u {
            lo
        } else {
            hi
        }
    }

    /// Dataset indices (sorted-range view) with labels in
    /// `[target - width, target + width]`.
    fn vicinity(&self, target: f64, width: f64) -> &[u32] {
        let (lo, hi) = self.vicinity_bounds(target, width);
        &self.order[lo..hi]
    }

    fn vicinity_bounds(&self, target: f64, width: f64) -> (usize, usize) {
        let lo = self.sorted.partition_point(|&y| y < target - width);
        let hi = self.sorted.partition_point(|&y| y <= target + width);
        (lo, hi)
    }

    /// Sorted-order position of the label nearest to `u` (ties to the
    /// smaller label).
    fn nearest_position(&self, u: f64) -> usize {
        let i = self.sorted.partition_point(|&y| y < u);
        if i == 0 {
            return 0;
        }
        if i == self.sorted.len() {
            return i - 1;
        }
        if u - self.sorted[i - 1] <= self.sorted[i] - u {
            i - 1
        } else {
            i
        }
    }
}

/// Draw the step's singular label: uniform over the label range, snapped to
/// the nearest label present in the data.
pub fn sample_singular_label<R: Rng>(
    dataset: &Dataset2D,
    index: &LabelIndex,
    rng: &mut R,
) -> Result<f64, Error> {
    if dataset.is_empty() {
        return Err(Error::Contract("sample_singular_label: empty dataset".into()));
    }
    let u = index.min() + (index.max() - index.min()) * rng.gen::<f64>();
    Ok(index.nearest(u))
}

/// One vicinity's worth of selected samples and weights.
#[derive(Debug, Clone)]
pub struct VicinalBatch {
    /// The singular label this vicinity was built around.
    pub singular_label: f64,
    /// Noised target for the real side.
    pub target_real: f64,
    /// Noised target for the fake side.
    pub target_fake: f64,
    pub real_indices: Vec<usize>,
    pub real_labels: Vec<f64>,
    /// Normalized; sums to one.
    pub real_weights: Vec<f64>,
    /// Conditioning labels the fakes are generated at.
    pub fake_labels: Vec<f64>,
    /// Normalized; sums to one.
    pub fake_weights: Vec<f64>,
}

/// Build the vicinity around `label` for one step.
///
/// Draws one noise value per side, then selects `batch_size` real samples
/// and fake target labels. Hard mode errors with [`Error::VicinityEmpty`]
/// when no real label falls inside the window (the caller resamples).
pub fn build_vicinal_batch<R: Rng>(
    dataset: &Dataset2D,
    index: &LabelIndex,
    label: f64,
    cfg: &VicinalConfig,
    batch_size: usize,
    rng: &mut R,
) -> Result<VicinalBatch, Error> {
    assert!(batch_size > 0, "build_vicinal_batch: zero batch size");
    debug_assert!((0.0..=1.0).contains(&label));
    let target_real = (label + cfg.label_noise_std * next_normal(rng)).clamp(0.0, 1.0);
    let target_fake = (label + cfg.label_noise_std * next_normal(rng)).clamp(0.0, 1.0);

    let (real_indices, real_weights): (Vec<usize>, Vec<f64>) = match cfg.mode {
        VicinityMode::Hard => {
            let candidates = index.vicinity(target_real, cfg.vicinity_half_width);
            if candidates.is_empty() {
                return Err(Error::VicinityEmpty { target: target_real });
            }
            let idx: Vec<usize> = (0..batch_size)
                .map(|_| candidates[rng.gen_range(0..candidates.len())] as usize)
                .collect();
            let w = vec![1.0 / batch_size as f64; batch_size];
            (idx, w)
        }
        VicinityMode::Soft => {
            // Importance-sample the soft vicinity: selection probability
            // proportional to exp(-rate * (y - target)^2), final weights
            // uniform. Same expected loss as weighting a uniform draw, but
            // every batch slot carries conditional signal.
            let idx = soft_select(index, target_real, cfg.soft_weight_rate, batch_size, rng);
            let w = vec![1.0 / batch_size as f64; batch_size];
            (idx, w)
        }
    };
    let real_labels: Vec<f64> = real_indices.iter().map(|&i| dataset.labels[i]).collect();

    // Fake conditioning labels cover the fake target's vicinity evenly,
    // mirroring how the real side selects around its own noised target.
    let window_lo = (target_fake - cfg.vicinity_half_width).max(0.0);
    let window_hi = (target_fake + cfg.vicinity_half_width).min(1.0);
    let fake_labels: Vec<f64> = (0..batch_size)
        .map(|_| window_lo + (window_hi - window_lo) * rng.gen::<f64>())
        .collect();
    let fake_weights = match cfg.mode {
        VicinityMode::Hard => {
            let inside: Vec<bool> = fake_labels
                .iter()
                .map(|&y| (y - target_fake).abs() <= cfg.vicinity_half_width)
                .collect();
            let count = inside.iter().filter(|&&b| b).count();
            if count == 0 {
                return Err(Error::VicinityEmpty { target: target_fake });
            }
            inside
                .iter()
                .map(|&b| if b { 1.0 / count as f64 } else { 0.0 })
                .collect()
        }
        VicinityMode::Soft => {
            soft_weights(fake_labels.iter().copied(), target_fake, cfg.soft_weight_rate)
        }
    };

    Ok(VicinalBatch {
        singular_label: label,
        target_real,
        target_fake,
        real_indices,
        real_labels,
        real_weights,
        fake_labels,
        fake_weights,
    })
}

/// Weights below `exp(-SOFT_SUPPORT)` of the maximum are treated as zero
/// when bounding the selection window.
const SOFT_SUPPORT: f64 = 27.6; // -ln(1e-12)

/// Draw `count` dataset indices with probability proportional to
/// `exp(-rate * (y_i - target)^2)`, via the cumulative weights of the
/// labels inside the numerically relevant window. Falls back to the nearest
/// label when the window is empty (the rate -> infinity limit).
fn soft_select<R: Rng>(
    index: &LabelIndex,
    target: f64,
    rate: f64,
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    let window = (SOFT_SUPPORT / rate).sqrt();
    let (lo, hi) = index.vicinity_bounds(target, window);
    if lo == hi {
        let pos = index.nearest_position(target);
        return (0..count)
            .map(|_| {
                let _ = rng.gen::<f64>();
                index.order[pos] as usize
            })
            .collect();
    }
    // Stabilized cumulative weights (max term is 1).
    let d2_min = index.sorted[lo..hi]
        .iter()
        .map(|&y| (y - target) * (y - target))
        .fold(f64::INFINITY, f64::min);
    let mut cdf = Vec::with_capacity(hi - lo);
    let mut acc = 0.0;
    for &y in &index.sorted[lo..hi] {
        let d2 = (y - target) * (y - target);
        acc += (-rate * (d2 - d2_min)).exp();
        cdf.push(acc);
    }
    (0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * acc;
            let pos = cdf.partition_point(|&c| c <= u).min(hi - lo - 1);
            index.order[lo + pos] as usize
        })
        .collect()
}

/// Normalized `exp(-rate * (y - target)^2)` weights, computed in a shifted
/// form so extreme rates cannot underflow the whole batch to zero.
fn soft_weights(labels: impl Iterator<Item = f64>, target: f64, rate: f64) -> Vec<f64> {
    let d2: Vec<f64> = labels.map(|y| (y - target) * (y - target)).collect();
    let min = d2.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = d2.iter().map(|&d| (-rate * (d - min)).exp()).collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Generated design batch with everything the conditioning losses need.
pub struct GeneratedBatch {
    /// `n x 2` generator output, gradients attached.
    pub points: Tensor,
    /// Per-sample conditioning labels (noised targets).
    pub labels: Vec<f64>,
    /// Vicinal generator loss `-mean log D(G(z, y), y)`.
    pub vicinal_loss: Tensor,
}

/// Discriminator loss over one or more vicinities (one in singular mode,
/// `batch_size` single-sample vicinities in uniform mode).
///
/// Real samples are judged at their vicinity's real target, fakes are
/// generated at their own fake labels, detached, and judged at the fake
/// target. Fake z-draws consume `noise_dim` normals per sample after the
/// batch construction draws.
pub fn discriminator_loss<R: Rng>(
    discriminator: &Mlp,
    generator: &Mlp,
    dataset: &Dataset2D,
    batches: &[VicinalBatch],
    cfg: &VicinalConfig,
    noise_dim: usize,
    rng: &mut R,
) -> Tensor {
    assert!(!batches.is_empty(), "discriminator_loss: no vicinities");
    let groups = batches.len() as f64;
    let mut real_rows: Vec<f64> = Vec::new();
    let mut real_targets: Vec<f64> = Vec::new();
    let mut real_w: Vec<f64> = Vec::new();
    let mut fake_labels: Vec<f64> = Vec::new();
    let mut fake_targets: Vec<f64> = Vec::new();
    let mut fake_w: Vec<f64> = Vec::new();
    for b in batches {
        for (&i, &w) in b.real_indices.iter().zip(&b.real_weights) {
            real_rows.extend_from_slice(&dataset.points[i]);
            real_targets.push(b.target_real);
            real_w.push(cfg.real_scale() * w / groups);
        }
        for (&y, &w) in b.fake_labels.iter().zip(&b.fake_weights) {
            fake_labels.push(y);
            fake_targets.push(b.target_fake);
            fake_w.push(cfg.fake_scale() * w / groups);
        }
    }
    let n_real = real_targets.len();
    let n_fake = fake_labels.len();

    // Fakes at their own labels, detached for the discriminator update.
    let mut z = vec![0.0; n_fake * noise_dim];
    crate::rng::fill_normal(rng, &mut z);
    let fake_points = conditioned_forward(
        generator,
        &Tensor::constant(n_fake, noise_dim, z),
        &Tensor::constant(n_fake, 1, fake_labels.clone()),
    )
    .detach();

    // Single mixed forward over [real; fake] rows.
    let total = n_real + n_fake;
    let mut rows = real_rows;
    rows.extend_from_slice(&fake_points.values());
    let mut targets = real_targets;
    targets.extend_from_slice(&fake_targets);
    let probs = conditioned_forward(
        discriminator,
        &Tensor::constant(total, 2, rows),
        &Tensor::constant(total, 1, targets),
    );

    let ones = Tensor::constant(total, 1, vec![1.0; total]);
    let log_real = probs.ln();
    let log_fake = ones.sub(&probs).ln();
    let mask: Vec<bool> = (0..total).map(|i| i < n_real).collect();
    let per_sample = Tensor::select(&mask, &log_real, &log_fake);
    let mut weights = real_w;
    weights.extend_from_slice(&fake_w);
    per_sample
        .mul(&Tensor::constant(total, 1, weights))
        .sum()
        .neg()
}

/// Generator vicinal loss and the generated batch it was computed on.
///
/// Per sample: one noise draw perturbs that sample's target label, then the
/// z batch is drawn. Gradients flow into the generator only (discriminator
/// parameters accumulate nothing the caller keeps).
pub fn generator_loss<R: Rng>(
    discriminator: &Mlp,
    generator: &Mlp,
    per_sample_targets: &[f64],
    cfg: &VicinalConfig,
    noise_dim: usize,
    rng: &mut R,
) -> GeneratedBatch {
    let n = per_sample_targets.len();
    assert!(n > 0, "generator_loss: empty target batch");
    let labels: Vec<f64> = per_sample_targets
        .iter()
        .map(|&y| (y + cfg.label_noise_std * next_normal(rng)).clamp(0.0, 1.0))
        .collect();
    let mut z = vec![0.0; n * noise_dim];
    crate::rng::fill_normal(rng, &mut z);
    let label_col = Tensor::constant(n, 1, labels.clone());
    let points = conditioned_forward(
        generator,
        &Tensor::constant(n, noise_dim, z),
        &label_col,
    );
    let probs = conditioned_forward(discriminator, &points, &label_col);
    let vicinal_loss = probs.ln().mean().neg();
    GeneratedBatch { points, labels, vicinal_loss }
}

/// Total generator objective: vicinal loss plus the weighted diversity loss.
/// A zero weight recovers the baseline generator objective exactly.
pub fn total_generator_loss(
    vicinal: &Tensor,
    diversity: &Tensor,
    diversity_weight: f64,
) -> Tensor {
    assert!(diversity_weight >= 0.0, "total_generator_loss: negative weight");
    if diversity_weight == 0.0 {
        return vicinal.clone();
    }
    vicinal.add(&diversity.scale(diversity_weight))
}

/// Escalating diversity-weight schedule `final * (t/T)^steepness`;
/// a constant schedule is the default for the synthetic benchmarks.
pub fn diversity_weight_schedule(step: u64, total_steps: u64, final_weight: f64, steepness: f64) -> f64 {
    assert!(total_steps > 0, "diversity_weight_schedule: zero total steps");
    assert!(steepness > 0.0, "diversity_weight_schedule: steepness must be > 0");
    final_weight * (step as f64 / total_steps as f64).powf(steepness)
}
