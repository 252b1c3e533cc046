//! MLP generator/discriminator, Adam with staircase learning-rate decay,
//! and the parameter checkpoint format.
//!
//! Both networks condition by concatenating the scalar label onto the input
//! features. Hidden layers use He-uniform init; final layers start with
//! small uniform weights and zero bias so an untrained discriminator outputs
//! exactly 0.5.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::Error;
use crate::tensor::Tensor;

/// Activation applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Linear,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply_tensor(&self, t: &Tensor) -> Tensor {
        match self {
            Activation::Linear => t.clone(),
            Activation::Relu => t.relu(),
            Activation::LeakyRelu(slope) => t.leaky_relu(*slope),
            Activation::Tanh => t.tanh(),
            Activation::Sigmoid => t.sigmoid(),
        }
    }

    fn apply_scalar(&self, v: f64) -> f64 {
        match self {
            Activation::Linear => v,
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu(slope) => {
                if v > 0.0 {
                    v
                } else {
                    slope * v
                }
            }
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Linear => write!(f, "linear"),
            Activation::Relu => write!(f, "relu"),
            Activation::LeakyRelu(s) => write!(f, "leaky_relu:{s}"),
            Activation::Tanh => write!(f, "tanh"),
            Activation::Sigmoid => write!(f, "sigmoid"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => {
                if let Some(slope) = other.strip_prefix("leaky_relu:") {
                    let slope = slope
                        .parse::<f64>()
                        .map_err(|e| Error::Checkpoint(format!("bad activation `{other}`: {e}")))?;
                    Ok(Activation::LeakyRelu(slope))
                } else {
                    Err(Error::Checkpoint(format!("unknown activation `{other}`")))
                }
            }
        }
    }
}

/// Fully connected network with graph-tracked parameters.
pub struct Mlp {
    /// (weights `in x out`, bias `1 x out`) per layer.
    layers: Vec<(Tensor, Tensor)>,
    pub dims: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    /// He-uniform init for every layer, zero biases.
    pub fn new<R: Rng>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Mlp {
        Self::with_head_scale(dims, hidden, output, 1.0, rng)
    }

    /// He-uniform hidden layers with a small (+/-0.01) final layer, so a
    /// sigmoid-headed network starts near 0.5. Suits discriminators; a
    /// generator initialized this way collapses its whole output into one
    /// tiny blob.
    pub fn new_small_head<R: Rng>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Mlp {
        let mut mlp = Self::with_head_scale(dims, hidden, output, 1.0, rng);
        // Redraw the head at the fixed small limit so the output starts at
        // the activation's midpoint (same draw count as the scaled init).
        let (w, _) = mlp.layers.last().unwrap();
        let small: Vec<f64> = w
            .values()
            .iter()
            .map(|v| {
                let fan_in = mlp.dims[mlp.dims.len() - 2] as f64;
                v / (6.0 / fan_in).sqrt() * 0.01
            })
            .collect();
        mlp.layers.last().unwrap().0.update(|vals, _| vals.copy_from_slice(&small));
        mlp
    }

    /// He-uniform init with the final-layer limit scaled by `head_scale`;
    /// controls how spread the network's initial outputs are.
    pub fn with_head_scale<R: Rng>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        head_scale: f64,
        rng: &mut R,
    ) -> Mlp {
        assert!(dims.len() >= 2, "mlp: need at least input and output dims");
        assert!(head_scale > 0.0, "mlp: head_scale must be > 0");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let last = l == dims.len() - 2;
            let scale = if last { head_scale } else { 1.0 };
            let limit = (6.0 / fan_in as f64).sqrt() * scale;
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| -limit + 2.0 * limit * rng.gen::<f64>())
                .collect();
            layers.push((
                Tensor::leaf(fan_in, fan_out, w),
                Tensor::leaf(1, fan_out, vec![0.0; fan_out]),
            ));
        }
        Mlp { layers, dims: dims.to_vec(), hidden, output }
    }

    pub fn forward(&self, input: &Tensor) -> Tensor {
        assert_eq!(
            input.cols(),
            self.dims[0],
            "mlp forward: input width {} != {}",
            input.cols(),
            self.dims[0]
        );
        let mut h = input.clone();
        let last = self.layers.len() - 1;
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let z = h.matmul(w).add(b);
            h = if l == last {
                self.output.apply_tensor(&z)
            } else {
                self.hidden.apply_tensor(&z)
            };
        }
        h
    }

    /// Parameter handles in a stable order (w0, b0, w1, b1, ...).
    pub fn params(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.clone(), b.clone()])
            .collect()
    }

    pub fn zero_grad(&self) {
        for (w, b) in &self.layers {
            w.zero_grad();
            b.zero_grad();
        }
    }

    /// Plain-data copy of the parameters (Send + Sync; used for inference,
    /// checkpoints, and cross-thread evaluation).
    pub fn snapshot(&self) -> MlpSnapshot {
        MlpSnapshot {
            dims: self.dims.clone(),
            hidden: self.hidden,
            output: self.output,
            weights: self.layers.iter().map(|(w, _)| w.to_values()).collect(),
            biases: self.layers.iter().map(|(_, b)| b.to_values()).collect(),
        }
    }

    /// Restore parameter values from a snapshot of the same architecture.
    pub fn load_snapshot(&mut self, snap: &MlpSnapshot) -> Result<(), Error> {
        if snap.dims != self.dims || snap.hidden != self.hidden || snap.output != self.output {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: checkpoint {:?} vs model {:?}",
                snap.dims, self.dims
            )));
        }
        for ((w, b), (sw, sb)) in self.layers.iter().zip(snap.weights.iter().zip(&snap.biases)) {
            w.update(|vals, _| vals.copy_from_slice(sw));
            b.update(|vals, _| vals.copy_from_slice(sb));
        }
        Ok(())
    }
}

/// Graph-free parameter snapshot with a fast inference path.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSnapshot {
    pub dims: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpSnapshot {
    /// Forward a `rows x dims[0]` row-major batch without building a graph.
    pub fn forward(&self, input: &[f64], rows: usize) -> Vec<f64> {
        assert_eq!(input.len(), rows * self.dims[0], "snapshot forward: bad input size");
        let mut h = input.to_vec();
        let mut width = self.dims[0];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let out_w = self.dims[l + 1];
            let mut z = vec![0.0; rows * out_w];
            for i in 0..rows {
                let h_row = &h[i * width..(i + 1) * width];
                let z_row = &mut z[i * out_w..(i + 1) * out_w];
                for (k, &hv) in h_row.iter().enumerate() {
                    if hv == 0.0 {
                        continue;
                    }
                    let w_row = &w[k * out_w..(k + 1) * out_w];
                    for (zv, &wv) in z_row.iter_mut().zip(w_row) {
                        *zv += hv * wv;
                    }
                }
                // Bias after accumulation: same summation order as the graph
                // path (matmul then broadcast add), so both forwards agree
                // bit for bit.
                for (zv, &bv) in z_row.iter_mut().zip(b) {
                    *zv += bv;
                }
            }
            let act = if l == last { self.output } else { self.hidden };
            for v in &mut z {
                *v = act.apply_scalar(*v);
            }
            h = z;
            width = out_w;
        }
        h
    }

    /// Rebuild a graph-tracked model with these parameters.
    pub fn to_mlp(&self) -> Mlp {
        let layers = self
            .weights
            .iter()
            .zip(&self.biases)
            .enumerate()
            .map(|(l, (w, b))| {
                (
                    Tensor::leaf(self.dims[l], self.dims[l + 1], w.clone()),
                    Tensor::leaf(1, self.dims[l + 1], b.clone()),
                )
            })
            .collect();
        Mlp {
            layers,
            dims: self.dims.clone(),
            hidden: self.hidden,
            output: self.output,
        }
    }
}

/// Label-concatenation conditioning: forward `[features ‖ label]`.
///
/// Labels must lie in [0, 1].
pub fn conditioned_forward(model: &Mlp, features: &Tensor, labels: &Tensor) -> Tensor {
    assert_eq!(features.rows(), labels.rows(), "conditioned_forward: row mismatch");
    assert_eq!(labels.cols(), 1, "conditioned_forward: labels must be a column");
    debug_assert!(
        labels.values().iter().all(|&y| (0.0..=1.0).contains(&y)),
        "conditioned_forward: label outside [0, 1]"
    );
    let joined = Tensor::concat_cols(&[features, labels]);
    model.forward(&joined)
}

/// Snapshot-side twin of [`conditioned_forward`].
pub fn conditioned_forward_snapshot(
    model: &MlpSnapshot,
    features: &[f64],
    labels: &[f64],
    rows: usize,
) -> Vec<f64> {
    let feat_w = model.dims[0] - 1;
    assert_eq!(features.len(), rows * feat_w);
    assert_eq!(labels.len(), rows);
    let mut joined = vec![0.0; rows * model.dims[0]];
    for i in 0..rows {
        joined[i * model.dims[0]..i * model.dims[0] + feat_w]
            .copy_from_slice(&features[i * feat_w..(i + 1) * feat_w]);
        joined[i * model.dims[0] + feat_w] = labels[i];
    }
    model.forward(&joined, rows)
}

/// Adam hyper-parameters with staircase decay.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            base_lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            decay_factor: 0.8,
            decay_every: 5_000,
        }
    }
}

impl AdamConfig {
    /// `base_lr * decay^floor(t / every)`: non-increasing staircase in `t`.
    pub fn effective_lr(&self, t: u64) -> f64 {
        self.base_lr * self.decay_factor.powi((t / self.decay_every) as i32)
    }
}

/// Adam state bound to one parameter list.
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(params: &[Tensor], cfg: AdamConfig) -> Adam {
        Adam {
            cfg,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Bias-corrected update at the current effective learning rate;
    /// gradients are zeroed afterwards.
    pub fn step(&mut self, params: &[Tensor]) -> Result<(), Error> {
        assert_eq!(params.len(), self.m.len(), "adam: parameter list changed");
        self.t += 1;
        let lr = self.cfg.effective_lr(self.t);
        let bc1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        for (idx, p) in params.iter().enumerate() {
            let mut bad: Option<f64> = None;
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            p.update(|values, grad| {
                for i in 0..values.len() {
                    let g = grad[i];
                    if !g.is_finite() {
                        bad = Some(g);
                        return;
                    }
                    m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g;
                    v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    values[i] -= lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
                }
                grad.fill(0.0);
            });
            if let Some(g) = bad {
                return Err(Error::Numeric {
                    op: "adam_step",
                    detail: format!("non-finite gradient {g} in parameter {idx}"),
                });
            }
        }
        Ok(())
    }
}

// ----- checkpoint format ----------------------------------------------------

const CKPT_MAGIC: &str = "PCDGAN-CKPT v1";

/// On-disk checkpoint: generator and discriminator snapshots plus run
/// metadata (model tag, example, seed, label scale, config hash).
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub generator: MlpSnapshot,
    pub discriminator: MlpSnapshot,
}

impl Checkpoint {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{CKPT_MAGIC}")?;
        for (k, v) in &self.meta {
            writeln!(out, "meta {k}={v}")?;
        }
        for (name, snap) in [("generator", &self.generator), ("discriminator", &self.discriminator)] {
            write_snapshot(&mut out, name, snap)?;
        }
        writeln!(out, "end")?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, Error> {
        let file = BufReader::new(std::fs::File::open(path).map_err(|e| {
            Error::Checkpoint(format!("cannot open {}: {e}", path.display()))
        })?);
        let mut lines = file.lines();
        let magic = match lines.next() {
            Some(l) => l?,
            None => return Err(Error::Checkpoint("empty checkpoint".into())),
        };
        if magic != CKPT_MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic header `{magic}` (expected `{CKPT_MAGIC}`)"
            )));
        }
        let mut meta = Vec::new();
        let mut snapshots: Vec<(String, MlpSnapshot)> = Vec::new();
        let mut lines = lines.peekable();
        loop {
            let line = match lines.next() {
                Some(l) => l?,
                None => return Err(Error::Checkpoint("truncated checkpoint: missing `end`".into())),
            };
            if line == "end" {
                break;
            }
            if let Some(kv) = line.strip_prefix("meta ") {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Checkpoint(format!("bad meta line `{line}`")))?;
                meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("arch ") {
                let (name, snap) = read_snapshot(rest, &mut lines)?;
                snapshots.push((name, snap));
            } else {
                return Err(Error::Checkpoint(format!("unexpected line `{line}`")));
            }
        }
        let take = |name: &str| -> Result<MlpSnapshot, Error> {
            snapshots
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, s)| s.clone())
                .ok_or_else(|| Error::Checkpoint(format!("missing `{name}` block")))
        };
        Ok(Checkpoint {
            generator: take("generator")?,
            discriminator: take("discriminator")?,
            meta,
        })
    }
}

fn write_snapshot<W: Write>(out: &mut W, name: &str, snap: &MlpSnapshot) -> Result<(), Error> {
    let dims: Vec<String> = snap.dims.iter().map(|d| d.to_string()).collect();
    writeln!(
        out,
        "arch {name} dims={} hidden={} output={}",
        dims.join(","),
        snap.hidden,
        snap.output
    )?;
    for (l, (w, b)) in snap.weights.iter().zip(&snap.biases).enumerate() {
        write_tensor(out, &format!("{name}.w{l}"), snap.dims[l], snap.dims[l + 1], w)?;
        write_tensor(out, &format!("{name}.b{l}"), 1, snap.dims[l + 1], b)?;
    }
    Ok(())
}

fn write_tensor<W: Write>(
    out: &mut W,
    name: &str,
    rows: usize,
    cols: usize,
    values: &[f64],
) -> Result<(), Error> {
    write!(out, "tensor {name} {rows} {cols}\n")?;
    let mut first = true;
    for v in values {
        if !first {
            write!(out, " ")?;
        }
        // `{}` on f64 is shortest round-trip, so reload is bit-exact.
        write!(out, "{v}")?;
        first = false;
    }
    writeln!(out)?;
    Ok(())
}

fn read_snapshot<I: Iterator<Item = std::io::Result<String>>>(
    header_rest: &str,
    lines: &mut std::iter::Peekable<I>,
) -> Result<(String, MlpSnapshot), Error> {
    let mut parts = header_rest.split_whitespace();
    let name = parts
        .next()
        .ok_or_else(|| Error::Checkpoint("arch line missing name".into()))?
        .to_string();
    let mut dims: Vec<usize> = Vec::new();
    let mut hidden = Activation::Linear;
    let mut output = Activation::Linear;
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("bad arch field `{kv}`")))?;
        match k {
            "dims" => {
                dims = v
                    .split(',')
                    .map(|d| d.parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| Error::Checkpoint(format!("bad dims `{v}`: {e}")))?;
            }
            "hidden" => hidden = v.parse()?,
            "output" => output = v.parse()?,
            other => return Err(Error::Checkpoint(format!("unknown arch field `{other}`"))),
        }
    }
    if dims.len() < 2 {
        return Err(Error::Checkpoint(format!("arch `{name}` has too few dims")));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..dims.len() - 1 {
        weights.push(read_tensor(lines, &format!("{name}.w{l}"), dims[l], dims[l + 1])?);
        biases.push(read_tensor(lines, &format!("{name}.b{l}"), 1, dims[l + 1])?);
    }
    Ok((name, MlpSnapshot { dims, hidden, output, weights, biases }))
}

fn read_tensor<I: Iterator<Item = std::io::Result<String>>>(
    lines: &mut std::iter::Peekable<I>,
    expect_name: &str,
    rows: usize,
    cols: usize,
) -> Result<Vec<f64>, Error> {
    let header = lines
        .next()
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{expect_name}`")))??;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("tensor") {
        return Err(Error::Checkpoint(format!("expected tensor header, got `{header}`")));
    }
    let name = parts.next().unwrap_or("");
    if name != expect_name {
        return Err(Error::Checkpoint(format!(
            "architecture mismatch: expected tensor `{expect_name}`, found `{name}`"
        )));
    }
    let r: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Checkpoint(format!("bad tensor header `{header}`")))?;
    let c: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Checkpoint(format!("bad tensor header `{header}`")))?;
    if (r, c) != (rows, cols) {
        return Err(Error::Checkpoint(format!(
            "shape mismatch for `{expect_name}`: checkpoint {r}x{c}, expected {rows}x{cols}"
        )));
    }
    let data_line = lines
        .next()
        .ok_or_else(|| Error::Checkpoint(format!("missing values for `{expect_name}`")))??;
    let values: Vec<f64> = data_line
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Checkpoint(format!("bad value in `{expect_name}`: {e}")))?;
    if values.len() != rows * cols {
        return Err(Error::Checkpoint(format!(
            "value count mismatch for `{expect_name}`: {} vs {}",
            values.len(),
            rows * cols
        )));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tensor::grad_check;

    fn generator(seed: u64) -> Mlp {
        let mut r = rng::seeded(seed, rng::stream::INIT_GENERATOR);
        Mlp::new(&[6, 16, 16, 2], Activation::LeakyRelu(0.2), Activation::Linear, &mut r)
    }

    fn discriminator(seed: u64) -> Mlp {
        let mut r = rng::seeded(seed, rng::stream::INIT_DISCRIMINATOR);
        Mlp::new_small_head(&[3, 16, 16, 1], Activation::LeakyRelu(0.2), Activation::Sigmoid, &mut r)
    }

    #[test]
    fn generator_shapes_and_determinism() {
        let g = generator(0);
        let mut r = rng::seeded(1, 9);
        let z: Vec<f64> = (0..32 * 5).map(|_| rng::next_normal(&mut r)).collect();
        let y: Vec<f64> = (0..32).map(|_| r.gen::<f64>()).collect();
        let zt = Tensor::constant(32, 5, z);
        let yt = Tensor::constant(32, 1, y);
        let out = conditioned_forward(&g, &zt, &yt);
        assert_eq!((out.rows(), out.cols()), (32, 2));
        let again = conditioned_forward(&g, &zt, &yt);
        assert_eq!(out.to_values(), again.to_values());
    }

    #[test]
    fn fresh_discriminator_starts_near_half() {
        let d = discriminator(3);
        let x = Tensor::constant(4, 2, vec![0.1, -0.2, 0.4, 0.0, -0.3, 0.5, 0.2, 0.2]);
        let y = Tensor::constant(4, 1, vec![0.1, 0.5, 0.9, 0.3]);
        let p = conditioned_forward(&d, &x, &y);
        for v in p.values().iter() {
            assert!(*v > 0.0 && *v < 1.0);
            assert!((v - 0.5).abs() < 0.05, "untrained D output {v}");
        }

        // With the final layer fully zeroed the output is sigmoid(0) exactly.
        let mut snap = d.snapshot();
        snap.weights.last_mut().unwrap().fill(0.0);
        snap.biases.last_mut().unwrap().fill(0.0);
        let zeroed = snap.to_mlp();
        let p = conditioned_forward(&zeroed, &x, &y);
        assert!(p.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn discriminator_grad_wrt_input() {
        let d = discriminator(7);
        let y = Tensor::constant(2, 1, vec![0.2, 0.8]);
        let report = grad_check(
            |x| conditioned_forward(&d, x, &y).ln().sum(),
            &[0.3, -0.1, 0.0, 0.4],
            2,
            2,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "rel err {}", report.max_rel_err);
    }

    #[test]
    fn snapshot_forward_matches_graph_forward() {
        let g = generator(11);
        let snap = g.snapshot();
        let mut r = rng::seeded(2, 8);
        let z: Vec<f64> = (0..10 * 5).map(|_| rng::next_normal(&mut r)).collect();
        let y: Vec<f64> = (0..10).map(|_| r.gen::<f64>()).collect();
        let graph_out = conditioned_forward(
            &g,
            &Tensor::constant(10, 5, z.clone()),
            &Tensor::constant(10, 1, y.clone()),
        )
        .to_values();
        let snap_out = conditioned_forward_snapshot(&snap, &z, &y, 10);
        assert_eq!(graph_out.len(), snap_out.len());
        for (a, b) in graph_out.iter().zip(&snap_out) {
            assert_eq!(a.to_bits(), b.to_bits(), "{a} vs {b}");
        }
    }

    #[test]
    fn adam_decreases_param_with_constant_grad() {
        let p = Tensor::leaf(1, 1, vec![1.0]);
        let mut adam = Adam::new(
            std::slice::from_ref(&p),
            AdamConfig { base_lr: 0.01, ..Default::default() },
        );
        let mut prev = 1.0;
        for _ in 0..20 {
            p.update(|_, g| g[0] = 1.0);
            adam.step(std::slice::from_ref(&p)).unwrap();
            let v = p.item();
            assert!(v < prev, "{v} !< {prev}");
            prev = v;
        }
    }

    #[test]
    fn staircase_lr_schedule() {
        let cfg = AdamConfig::default();
        assert_eq!(cfg.effective_lr(1), 1e-4);
        assert_eq!(cfg.effective_lr(4_999), 1e-4);
        assert!((cfg.effective_lr(5_000) - 8e-5).abs() < 1e-19);
        assert!((cfg.effective_lr(10_000) - 6.4e-5).abs() < 1e-19);
        // Non-increasing staircase.
        let mut prev = f64::INFINITY;
        for t in 0..20_000 {
            let lr = cfg.effective_lr(t);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn adam_leaves_zero_grad_params_untouched() {
        let a = Tensor::leaf(1, 2, vec![0.5, -0.5]);
        let b = Tensor::leaf(1, 2, vec![1.0, 2.0]);
        let params = vec![a.clone(), b.clone()];
        let mut adam = Adam::new(&params, AdamConfig::default());
        a.update(|_, g| g.fill(0.25));
        adam.step(&params).unwrap();
        assert_ne!(a.to_values(), vec![0.5, -0.5]);
        assert_eq!(b.to_values(), vec![1.0, 2.0]);
        // Gradients were zeroed by the step.
        assert_eq!(a.to_grad(), vec![0.0, 0.0]);
    }

    #[test]
    fn adam_update_depends_only_on_grads() {
        // Identical summed gradients produce identical updates regardless of
        // how the batch was ordered when they were accumulated.
        let run = |grads: &[f64]| -> Vec<f64> {
            let p = Tensor::leaf(1, 3, vec![0.2, -0.1, 0.4]);
            let mut adam = Adam::new(std::slice::from_ref(&p), AdamConfig::default());
            p.update(|_, g| g.copy_from_slice(grads));
            adam.step(std::slice::from_ref(&p)).unwrap();
            p.to_values()
        };
        let g = [0.3, -0.7, 0.2];
        assert_eq!(run(&g), run(&g));
    }

    #[test]
    fn adam_rejects_non_finite_grad() {
        let p = Tensor::leaf(1, 1, vec![0.0]);
        let mut adam = Adam::new(std::slice::from_ref(&p), AdamConfig::default());
        p.update(|_, g| g[0] = f64::NAN);
        let err = adam.step(std::slice::from_ref(&p));
        assert!(matches!(err, Err(Error::Numeric { .. })));
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        let w = Tensor::leaf(1, 4, vec![1.0, -2.0, 0.5, 3.0]);
        let params = vec![w.clone()];
        let mut adam = Adam::new(
            &params,
            AdamConfig { base_lr: 1e-2, decay_every: u64::MAX, ..Default::default() },
        );
        for _ in 0..10_000 {
            let loss = w.square().sum();
            loss.backward();
            adam.step(&params).unwrap();
        }
        let norm: f64 = w.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "|w| = {norm}");
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.txt");
        let g = generator(5);
        let d = discriminator(5);
        let ckpt = Checkpoint {
            meta: vec![
                ("model".into(), "pcdgan".into()),
                ("example".into(), "2".into()),
                ("seed".into(), "5".into()),
            ],
            generator: g.snapshot(),
            discriminator: d.snapshot(),
        };
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.generator, ckpt.generator);
        assert_eq!(loaded.discriminator, ckpt.discriminator);
        assert_eq!(loaded.meta_value("model"), Some("pcdgan"));

        // Restoring into a same-architecture model succeeds; into a different
        // one fails loudly.
        let mut g2 = generator(99);
        g2.load_snapshot(&loaded.generator).unwrap();
        assert_eq!(g2.snapshot(), ckpt.generator);
        let mut other = {
            let mut r = rng::seeded(0, 0);
            Mlp::new(&[6, 8, 2], Activation::LeakyRelu(0.2), Activation::Linear, &mut r)
        };
        assert!(other.load_snapshot(&loaded.generator).is_err());
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "NOT-A-CKPT\nend\n").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }
}
