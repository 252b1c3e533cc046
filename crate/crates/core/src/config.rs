//! Run configuration: defaults, flat key=value files, and provenance echo.
//!
//! Config files are plain `key=value` lines with `#` comments. Every run
//! echoes its fully resolved configuration (plus a content hash) into the
//! run directory so results are traceable to exact settings.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::Error;
use crate::eval::{DiversityConfig, EvalProtocol, KdeConfig};
use crate::nn::AdamConfig;
use crate::synthetic::ExampleId;
use crate::vicinal::{LabelSampling, VicinityMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Pcdgan,
    Ccgan,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Pcdgan => write!(f, "pcdgan"),
            ModelKind::Ccgan => write!(f, "ccgan"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "pcdgan" => Ok(ModelKind::Pcdgan),
            "ccgan" => Ok(ModelKind::Ccgan),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// Diversity-weight schedule over training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSchedule {
    Constant,
    /// `final * (t/T)^steepness`.
    Escalating { steepness: f64 },
}

impl fmt::Display for WeightSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSchedule::Constant => write!(f, "constant"),
            WeightSchedule::Escalating { steepness } => write!(f, "escalating:{steepness}"),
        }
    }
}

impl FromStr for WeightSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s == "constant" {
            return Ok(WeightSchedule::Constant);
        }
        if s == "escalating" {
            return Ok(WeightSchedule::Escalating { steepness: 5.0 });
        }
        if let Some(p) = s.strip_prefix("escalating:") {
            let steepness = p
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad schedule `{s}`: {e}")))?;
            return Ok(WeightSchedule::Escalating { steepness });
        }
        Err(Error::Config(format!("unknown schedule `{s}`")))
    }
}

/// Fully resolved training configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub example: ExampleId,
    pub model: ModelKind,
    pub seed: u64,
    pub steps: u64,
    pub batch_size: usize,
    pub noise_dim: usize,
    pub data_points: usize,
    pub base_lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Quality exponent in the DPP kernel.
    pub quality_exponent: f64,
    /// Weight of the diversity loss in the generator objective
    /// (forced to zero for the baseline model).
    pub diversity_weight: f64,
    pub lambert_cutoff: f64,
    pub vicinity_mode: VicinityMode,
    pub label_sampling: LabelSampling,
    /// `None` means the rule-of-thumb value from the dataset labels.
    pub label_noise_std: Option<f64>,
    pub vicinity_half_width: Option<f64>,
    pub soft_weight_rate: Option<f64>,
    /// Loss constants [hard real, hard fake, soft real, soft fake].
    pub loss_scales: [f64; 4],
    pub schedule: WeightSchedule,
    /// Multiply conditioning quality by the detached discriminator output.
    pub realistic_quality: bool,
    pub rbf_bandwidth: f64,
    pub dpp_jitter: f64,
    /// Eigenvalue floor in the diversity loss's similarity term.
    pub dpp_eigen_floor: f64,
    /// Scale on the generator's final-layer init limit (1 = He-uniform).
    pub gen_head_scale: f64,
    pub log_every: u64,
    pub checkpoint_every: u64,
    pub eval_conditions: usize,
    pub eval_repeats: usize,
    pub eval_samples: usize,
}

impl TrainConfig {
    pub fn new(example: ExampleId, model: ModelKind, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig {
            example,
            model,
            seed,
            steps: 50_000,
            batch_size: 32,
            noise_dim: 5,
            data_points: 10_000,
            base_lr: 1e-4,
            lr_decay_factor: 0.8,
            lr_decay_every: 5_000,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            quality_exponent: 3.0,
            diversity_weight: 0.5,
            lambert_cutoff: 4.7,
            vicinity_mode: VicinityMode::Soft,
            label_sampling: LabelSampling::Singular,
            label_noise_std: None,
            vicinity_half_width: None,
            soft_weight_rate: None,
            loss_scales: [1.0; 4],
            schedule: WeightSchedule::Constant,
            realistic_quality: false,
            rbf_bandwidth: 1.0,
            dpp_jitter: 1e-6,
            dpp_eigen_floor: crate::dpp::EIGEN_FLOOR,
            gen_head_scale: 1.0,
            log_every: 100,
            checkpoint_every: 5_000,
            eval_conditions: 10,
            eval_repeats: 3,
            eval_samples: 1000,
        };
        cfg.enforce_model_constraints();
        cfg
    }

    /// The baseline is the same code path with the diversity term off and
    /// uniform label sampling; its config is pinned that way.
    pub fn enforce_model_constraints(&mut self) {
        if self.model == ModelKind::Ccgan {
            self.diversity_weight = 0.0;
            self.label_sampling = LabelSampling::Uniform;
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let checks: [(bool, &str); 10] = [
            (self.steps >= 1, "steps must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.noise_dim >= 1, "noise_dim must be >= 1"),
            (self.data_points >= 2, "data_points must be >= 2"),
            (self.base_lr > 0.0, "base_lr must be > 0"),
            (self.diversity_weight >= 0.0, "diversity_weight must be >= 0"),
            (self.lambert_cutoff >= crate::llets::MIN_CUTOFF, "lambert_cutoff below e/2"),
            (self.rbf_bandwidth > 0.0, "rbf_bandwidth must be > 0"),
            (self.lr_decay_every >= 1, "lr_decay_every must be >= 1"),
            (self.eval_conditions >= 1 && self.eval_repeats >= 1, "eval protocol empty"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.to_string()));
            }
        }
        if self.model == ModelKind::Ccgan
            && (self.diversity_weight != 0.0 || self.label_sampling != LabelSampling::Uniform)
        {
            return Err(Error::Config(
                "baseline model requires diversity_weight=0 and uniform sampling".into(),
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            base_lr: self.base_lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            decay_factor: self.lr_decay_factor,
            decay_every: self.lr_decay_every,
        }
    }

    pub fn eval_protocol(&self) -> EvalProtocol {
        EvalProtocol {
            n_conditions: self.eval_conditions,
            condition_min: 0.05,
            condition_max: 0.95,
            samples_per_condition: self.eval_samples,
            repeats: self.eval_repeats,
            diversity: DiversityConfig::default(),
            kde: KdeConfig::default(),
            parallel: cfg!(feature = "parallel"),
        }
    }

    /// Generator/discriminator layer dims for this config.
    pub fn generator_dims(&self) -> Vec<usize> {
        vec![self.noise_dim + 1, 128, 128, 128, 2]
    }

    pub fn discriminator_dims(&self) -> Vec<usize> {
        vec![2 + 1, 128, 128, 128, 1]
    }

    /// Parse a flat key=value file and apply it over the defaults implied by
    /// its `example`, `model`, and `seed` lines (which must be present).
    pub fn from_file(path: &Path) -> Result<TrainConfig, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<TrainConfig, Error> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{raw}`", lineno + 1))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let find = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
        let example = ExampleId::from_u8(
            find("example")
                .ok_or_else(|| Error::Config("missing `example`".into()))?
                .parse::<u8>()
                .map_err(|e| Error::Config(format!("bad example: {e}")))?,
        )?;
        let model: ModelKind = find("model")
            .ok_or_else(|| Error::Config("missing `model`".into()))?
            .parse()?;
        let seed = find("seed")
            .ok_or_else(|| Error::Config("missing `seed`".into()))?
            .parse::<u64>()
            .map_err(|e| Error::Config(format!("bad seed: {e}")))?;
        let mut cfg = TrainConfig::new(example, model, seed);
        for (k, v) in &pairs {
            cfg.apply_kv(k, v)?;
        }
        cfg.enforce_model_constraints();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one key=value override.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), Error> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, Error>
        where
            T::Err: fmt::Display,
        {
            v.parse::<T>()
                .map_err(|e| Error::Config(format!("bad value for `{key}`: {e}")))
        }
        fn opt_num(key: &str, v: &str) -> Result<Option<f64>, Error> {
            if v == "auto" {
                Ok(None)
            } else {
                num::<f64>(key, v).map(Some)
            }
        }
        match key {
            "example" => self.example = ExampleId::from_u8(num::<u8>(key, value)?)?,
            "model" => self.model = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "noise_dim" => self.noise_dim = num(key, value)?,
            "data_points" => self.data_points = num(key, value)?,
            "base_lr" => self.base_lr = num(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = num(key, value)?,
            "lr_decay_every" => self.lr_decay_every = num(key, value)?,
            "adam_beta1" => self.adam_beta1 = num(key, value)?,
            "adam_beta2" => self.adam_beta2 = num(key, value)?,
            "adam_eps" => self.adam_eps = num(key, value)?,
            "quality_exponent" => self.quality_exponent = num(key, value)?,
            "diversity_weight" => self.diversity_weight = num(key, value)?,
            "lambert_cutoff" => self.lambert_cutoff = num(key, value)?,
            "vicinity_mode" => {
                self.vicinity_mode = match value {
                    "soft" => VicinityMode::Soft,
                    "hard" => VicinityMode::Hard,
                    other => return Err(Error::Config(format!("unknown vicinity mode `{other}`"))),
                }
            }
            "label_sampling" => {
                self.label_sampling = match value {
                    "singular" => LabelSampling::Singular,
                    "uniform" => LabelSampling::Uniform,
                    other => return Err(Error::Config(format!("unknown label sampling `{other}`"))),
                }
            }
            "label_noise_std" => self.label_noise_std = opt_num(key, value)?,
            "vicinity_half_width" => self.vicinity_half_width = opt_num(key, value)?,
            "soft_weight_rate" => self.soft_weight_rate = opt_num(key, value)?,
            "loss_scale_hard_real" => self.loss_scales[0] = num(key, value)?,
            "loss_scale_hard_fake" => self.loss_scales[1] = num(key, value)?,
            "loss_scale_soft_real" => self.loss_scales[2] = num(key, value)?,
            "loss_scale_soft_fake" => self.loss_scales[3] = num(key, value)?,
            "schedule" => self.schedule = value.parse()?,
            "realistic_quality" => {
                self.realistic_quality = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => return Err(Error::Config(format!("bad bool `{other}`"))),
                }
            }
            "rbf_bandwidth" => self.rbf_bandwidth = num(key, value)?,
            "dpp_jitter" => self.dpp_jitter = num(key, value)?,
            "dpp_eigen_floor" => self.dpp_eigen_floor = num(key, value)?,
            "gen_head_scale" => self.gen_head_scale = num(key, value)?,
            "log_every" => self.log_every = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "eval_conditions" => self.eval_conditions = num(key, value)?,
            "eval_repeats" => self.eval_repeats = num(key, value)?,
            "eval_samples" => self.eval_samples = num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    fn opt_str(v: Option<f64>) -> String {
        match v {
            None => "auto".to_string(),
            Some(x) => format!("{x}"),
        }
    }

    /// Every resolved field as key=value lines (stable order).
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut push = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        push("example", self.example.to_string());
        push("model", self.model.to_string());
        push("seed", self.seed.to_string());
        push("steps", self.steps.to_string());
        push("batch_size", self.batch_size.to_string());
        push("noise_dim", self.noise_dim.to_string());
        push("data_points", self.data_points.to_string());
        push("base_lr", format!("{}", self.base_lr));
        push("lr_decay_factor", format!("{}", self.lr_decay_factor));
        push("lr_decay_every", self.lr_decay_every.to_string());
        push("adam_beta1", format!("{}", self.adam_beta1));
        push("adam_beta2", format!("{}", self.adam_beta2));
        push("adam_eps", format!("{}", self.adam_eps));
        push("quality_exponent", format!("{}", self.quality_exponent));
        push("diversity_weight", format!("{}", self.diversity_weight));
        push("lambert_cutoff", format!("{}", self.lambert_cutoff));
        push(
            "vicinity_mode",
            match self.vicinity_mode {
                VicinityMode::Soft => "soft".into(),
                VicinityMode::Hard => "hard".into(),
            },
        );
        push(
            "label_sampling",
            match self.label_sampling {
                LabelSampling::Singular => "singular".into(),
                LabelSampling::Uniform => "uniform".into(),
            },
        );
        push("label_noise_std", Self::opt_str(self.label_noise_std));
        push("vicinity_half_width", Self::opt_str(self.vicinity_half_width));
        push("soft_weight_rate", Self::opt_str(self.soft_weight_rate));
        push("loss_scale_hard_real", format!("{}", self.loss_scales[0]));
        push("loss_scale_hard_fake", format!("{}", self.loss_scales[1]));
        push("loss_scale_soft_real", format!("{}", self.loss_scales[2]));
        push("loss_scale_soft_fake", format!("{}", self.loss_scales[3]));
        push("schedule", self.schedule.to_string());
        push("realistic_quality", self.realistic_quality.to_string());
        push("rbf_bandwidth", format!("{}", self.rbf_bandwidth));
        push("dpp_jitter", format!("{}", self.dpp_jitter));
        push("dpp_eigen_floor", format!("{}", self.dpp_eigen_floor));
        push("gen_head_scale", format!("{}", self.gen_head_scale));
        push("log_every", self.log_every.to_string());
        push("checkpoint_every", self.checkpoint_every.to_string());
        push("eval_conditions", self.eval_conditions.to_string());
        push("eval_repeats", self.eval_repeats.to_string());
        push("eval_samples", self.eval_samples.to_string());
        s
    }

    /// FNV-1a hash of the echo text, as a 16-hex-digit content id.
    pub fn content_hash(&self) -> String {
        fnv1a(self.echo().as_bytes())
    }

    /// Default run directory name.
    pub fn default_run_id(&self) -> String {
        format!("ex{}-{}-s{}", self.example, self.model, self.seed)
    }
}

/// FNV-1a 64-bit over bytes, hex encoded.
pub fn fnv1a(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
