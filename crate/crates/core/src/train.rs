//! Training orchestration and run artifacts.
//!
//! One step = one discriminator Adam update on the vicinal loss followed by
//! one generator Adam update on the total objective (vicinal plus weighted
//! diversity). Every run writes its resolved config, dataset, loss log, and
//! checkpoints into a run directory; re-running with the same config and
//! seed reproduces every artifact byte for byte.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::config::{TrainConfig, WeightSchedule};
use crate::dpp;
use crate::error::Error;
use crate::eval::{self, sig9, EvalProtocol, EvalReport};
use crate::llets;
use crate::nn::{self, Activation, Adam, Checkpoint, Mlp};
use crate::par;
use crate::rng;
use crate::synthetic::{self, Dataset2D, LabelScale};
use crate::tensor::Tensor;
use crate::vicinal::{self, LabelIndex, LabelSampling, VicinalBatch, VicinalConfig};

/// Where a finished (or aborted) run left its artifacts.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    /// Singular labels redrawn because a hard vicinity came up empty.
    pub vicinity_resamples: u64,
    /// Total jitter escalations across all diversity-loss factorizations.
    pub jitter_escalations: u64,
}

/// Train one model per the config, writing artifacts under
/// `out_root/run_id`.
pub fn train(cfg: &TrainConfig, out_root: &Path, run_id: Option<&str>) -> Result<TrainOutput, Error> {
    cfg.validate()?;
    let run_id = run_id.map(str::to_string).unwrap_or_else(|| cfg.default_run_id());
    let run_dir = out_root.join(&run_id);
    std::fs::create_dir_all(&run_dir)?;

    let dataset = synthetic::generate_dataset(cfg.example, cfg.data_points, cfg.seed)?;
    let index = LabelIndex::new(&dataset.labels);
    let vcfg = resolve_vicinal(cfg, &dataset)?;
    let llets_params = llets::llets_params(cfg.lambert_cutoff)?;

    // Provenance: resolved config, derived vicinal constants, content hash.
    let mut config_echo = cfg.echo();
    config_echo.push_str(&format!("resolved_label_noise_std={}\n", vcfg.label_noise_std));
    config_echo.push_str(&format!("resolved_vicinity_half_width={}\n", vcfg.vicinity_half_width));
    config_echo.push_str(&format!("resolved_soft_weight_rate={}\n", vcfg.soft_weight_rate));
    config_echo.push_str(&format!("content_hash={}\n", cfg.content_hash()));
    std::fs::write(run_dir.join("config.txt"), &config_echo)?;
    dataset.save_csv(&run_dir.join("dataset.csv"))?;

    let mut init_g = rng::seeded(cfg.seed, rng::stream::INIT_GENERATOR);
    let mut init_d = rng::seeded(cfg.seed, rng::stream::INIT_DISCRIMINATOR);
    let generator = Mlp::with_head_scale(
        &cfg.generator_dims(),
        Activation::LeakyRelu(0.2),
        Activation::Linear,
        cfg.gen_head_scale,
        &mut init_g,
    );
    let discriminator = Mlp::new_small_head(
        &cfg.discriminator_dims(),
        Activation::LeakyRelu(0.2),
        Activation::Sigmoid,
        &mut init_d,
    );
    let g_params = generator.params();
    let d_params = discriminator.params();
    let mut adam_g = Adam::new(&g_params, cfg.adam());
    let mut adam_d = Adam::new(&d_params, cfg.adam());

    let log_path = run_dir.join("train_log.csv");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    writeln!(log, "step,lr,d_loss,g_vicinal,g_diversity,g_total")?;

    let mut train_rng = rng::seeded(cfg.seed, rng::stream::TRAIN);
    let mut resamples: u64 = 0;
    let mut escalations: u64 = 0;
    let scale = dataset.scale();

    for step in 1..=cfg.steps {
        let diversity_weight = match cfg.schedule {
            WeightSchedule::Constant => cfg.diversity_weight,
            WeightSchedule::Escalating { steepness } => vicinal::diversity_weight_schedule(
                step,
                cfg.steps,
                cfg.diversity_weight,
                steepness,
            ),
        };

        // Target labels for this step: one shared vicinity in singular mode,
        // one single-sample vicinity per batch slot in uniform mode.
        let (batches, g_targets) = draw_step_batches(
            cfg,
            &dataset,
            &index,
            &vcfg,
            &mut train_rng,
            &mut resamples,
        )?;

        // Discriminator update (fakes detached).
        let d_loss = vicinal::discriminator_loss(
            &discriminator,
            &generator,
            &dataset,
            &batches,
            &vcfg,
            cfg.noise_dim,
            &mut train_rng,
        );
        let d_loss_value = d_loss.item();
        if !d_loss_value.is_finite() {
            return abort(cfg, &run_dir, step, "discriminator loss", d_loss_value);
        }
        d_loss.backward();
        adam_d.step(&d_params)?;

        // Generator update on the total objective.
        let generated = vicinal::generator_loss(
            &discriminator,
            &generator,
            &g_targets,
            &vcfg,
            cfg.noise_dim,
            &mut train_rng,
        );
        let g_vicinal_value = generated.vicinal_loss.item();
        let mut diversity_value = 0.0;
        let total = if diversity_weight > 0.0 {
            let quality = conditioning_quality(
                &generated.points,
                &generated.labels,
                &scale,
                &llets_params,
                cfg.realistic_quality.then_some(&discriminator),
            );
            let mut kernel = dpp::build_kernel(
                &generated.points,
                &quality,
                cfg.quality_exponent,
                cfg.rbf_bandwidth,
                cfg.dpp_jitter,
            )?;
            kernel.eigen_floor = cfg.dpp_eigen_floor;
            let diversity_loss = dpp::pcd_loss(&kernel)?;
            escalations += kernel.escalations.get() as u64;
            diversity_value = diversity_loss.item();
            vicinal::total_generator_loss(&generated.vicinal_loss, &diversity_loss, diversity_weight)
        } else {
            generated.vicinal_loss.clone()
        };
        let total_value = total.item();
        if !g_vicinal_value.is_finite() || !total_value.is_finite() {
            return abort(cfg, &run_dir, step, "generator loss", total_value);
        }
        total.backward();
        adam_g.step(&g_params)?;
        // The generator backward also reaches the discriminator; drop that.
        discriminator.zero_grad();

        if step % cfg.log_every == 0 || step == cfg.steps {
            writeln!(
                log,
                "{step},{},{},{},{},{}",
                sig9(cfg.adam().effective_lr(step)),
                sig9(d_loss_value),
                sig9(g_vicinal_value),
                sig9(diversity_value),
                sig9(total_value)
            )?;
        }
        if step % cfg.checkpoint_every == 0 && step != cfg.steps {
            let path = run_dir.join(format!("checkpoint_step{step}.txt"));
            make_checkpoint(cfg, &generator, &discriminator, &scale, step).save(&path)?;
        }
    }
    log.flush()?;
    drop(log);

    let checkpoint = run_dir.join("checkpoint_final.txt");
    make_checkpoint(cfg, &generator, &discriminator, &scale, cfg.steps).save(&checkpoint)?;
    Ok(TrainOutput {
        run_dir,
        checkpoint,
        log: log_path,
        vicinity_resamples: resamples,
        jitter_escalations: escalations,
    })
}

/// Resolve vicinal constants from the dataset unless overridden.
fn resolve_vicinal(cfg: &TrainConfig, dataset: &Dataset2D) -> Result<VicinalConfig, Error> {
    let mut vcfg =
        VicinalConfig::from_labels(&dataset.labels, cfg.vicinity_mode, cfg.label_sampling)?;
    if let Some(v) = cfg.label_noise_std {
        vcfg.label_noise_std = v;
    }
    if let Some(v) = cfg.vicinity_half_width {
        vcfg.vicinity_half_width = v;
    }
    if let Some(v) = cfg.soft_weight_rate {
        vcfg.soft_weight_rate = v;
    }
    vcfg.loss_scales = cfg.loss_scales;
    Ok(vcfg)
}

const MAX_LABEL_RESAMPLES: u64 = 100;

fn draw_step_batches<R: Rng>(
    cfg: &TrainConfig,
    dataset: &Dataset2D,
    index: &LabelIndex,
    vcfg: &VicinalConfig,
    rng: &mut R,
    resamples: &mut u64,
) -> Result<(Vec<VicinalBatch>, Vec<f64>), Error> {
    match cfg.label_sampling {
        LabelSampling::Singular => {
            let mut tries = 0;
            loop {
                let label = vicinal::sample_singular_label(dataset, index, rng)?;
                match vicinal::build_vicinal_batch(dataset, index, label, vcfg, cfg.batch_size, rng)
                {
                    Ok(batch) => {
                        let targets = vec![label; cfg.batch_size];
                        return Ok((vec![batch], targets));
                    }
                    Err(Error::VicinityEmpty { .. }) if tries < MAX_LABEL_RESAMPLES => {
                        tries += 1;
                        *resamples += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        LabelSampling::Uniform => {
            let mut batches = Vec::with_capacity(cfg.batch_size);
            let mut targets = Vec::with_capacity(cfg.batch_size);
            for _ in 0..cfg.batch_size {
                let mut tries = 0;
                loop {
                    let label = dataset.labels[rng.gen_range(0..dataset.len())];
                    match vicinal::build_vicinal_batch(dataset, index, label, vcfg, 1, rng) {
                        Ok(batch) => {
                            batches.push(batch);
                            targets.push(label);
                            break;
                        }
                        Err(Error::VicinityEmpty { .. }) if tries < MAX_LABEL_RESAMPLES => {
                            tries += 1;
                            *resamples += 1;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok((batches, targets))
        }
    }
}

/// Conditioning quality of generated points against their target labels:
/// exact estimator -> normalized label -> transition score, entirely in
/// graph ops. Optionally multiplied by the detached discriminator output.
pub fn conditioning_quality(
    points: &Tensor,
    targets: &[f64],
    scale: &LabelScale,
    params: &llets::LletsParams,
    realism: Option<&Mlp>,
) -> Tensor {
    let n = points.rows();
    assert_eq!(targets.len(), n, "conditioning_quality: target count mismatch");
    let raw = synthetic::quality_tensor(points);
    let (mul, add) = scale.affine_coeffs();
    let predicted = raw.affine(mul, add);
    let target_col = Tensor::constant(n, 1, targets.to_vec());
    let errors = predicted.sub(&target_col).abs().clamp(0.0, 1.0);
    let score = llets::llets_score(&errors, params);
    match realism {
        None => score,
        Some(discriminator) => {
            let probs =
                nn::conditioned_forward(discriminator, &points.detach(), &target_col).detach();
            score.mul(&probs)
        }
    }
}

fn make_checkpoint(
    cfg: &TrainConfig,
    generator: &Mlp,
    discriminator: &Mlp,
    scale: &LabelScale,
    step: u64,
) -> Checkpoint {
    Checkpoint {
        meta: vec![
            ("model".into(), cfg.model.to_string()),
            ("example".into(), cfg.example.to_string()),
            ("seed".into(), cfg.seed.to_string()),
            ("step".into(), step.to_string()),
            ("label_min".into(), format!("{}", scale.min())),
            ("label_max".into(), format!("{}", scale.max())),
            ("config_hash".into(), cfg.content_hash()),
        ],
        generator: generator.snapshot(),
        discriminator: discriminator.snapshot(),
    }
}

fn abort(
    cfg: &TrainConfig,
    run_dir: &Path,
    step: u64,
    what: &str,
    value: f64,
) -> Result<TrainOutput, Error> {
    let detail = format!("non-finite {what} ({value}) at step {step}");
    let dump = format!(
        "step={step}\nfailure={what}\nvalue={value}\nconfig_hash={}\n",
        cfg.content_hash()
    );
    let _ = std::fs::write(run_dir.join("abort_dump.txt"), dump);
    Err(Error::TrainAbort { step, detail })
}

/// Evaluate a checkpoint's generator; writes `eval_report.csv` and
/// `eval_summary.txt` next to the checkpoint (or under `out_dir`).
pub fn evaluate_checkpoint(
    checkpoint_path: &Path,
    protocol: &EvalProtocol,
    out_dir: Option<&Path>,
) -> Result<(EvalReport, PathBuf, PathBuf), Error> {
    let ckpt = Checkpoint::load(checkpoint_path)?;
    let meta_f64 = |key: &str| -> Result<f64, Error> {
        ckpt.meta_value(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta `{key}`")))?
            .parse::<f64>()
            .map_err(|e| Error::Checkpoint(format!("bad meta `{key}`: {e}")))
    };
    let scale = LabelScale::new(meta_f64("label_min")?, meta_f64("label_max")?)?;
    let seed = ckpt
        .meta_value("seed")
        .and_then(|s| s.parse::<u64>().ok())
        .ok_or_else(|| Error::Checkpoint("missing meta `seed`".into()))?;
    let model_tag = ckpt.meta_value("model").unwrap_or("unknown").to_string();
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => checkpoint_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    std::fs::create_dir_all(&dir)?;
    let run_id = dir
        .file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".to_string());
    let report = eval::evaluate(&ckpt.generator, &scale, protocol, seed, &run_id, &model_tag)?;
    let csv = dir.join("eval_report.csv");
    let summary = dir.join("eval_summary.txt");
    report.write_csv(&csv)?;
    let echo = format!(
        "checkpoint={}\nconditions={}\nrepeats={}\nsamples={}\n",
        checkpoint_path.display(),
        protocol.n_conditions,
        protocol.repeats,
        protocol.samples_per_condition
    );
    report.write_summary(&summary, &echo)?;
    Ok((report, csv, summary))
}

/// Train several configs, optionally in parallel (each run is sequential
/// and owns its streams, so the results never depend on scheduling).
pub fn train_matrix(
    configs: &[TrainConfig],
    out_root: &Path,
    parallel: bool,
) -> Vec<Result<TrainOutput, Error>> {
    par::map_indexed(configs.len(), parallel, |i| train(&configs[i], out_root, None))
}

/// Generate `n` designs at one condition from a checkpointed generator.
pub fn sample_designs(
    ckpt: &Checkpoint,
    condition: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<[f64; 2]>, Error> {
    let noise_dim = ckpt.generator.dims[0] - 1;
    let mut r = rng::seeded(seed, rng::stream::EVAL + 7);
    let mut z = vec![0.0; n * noise_dim];
    rng::fill_normal(&mut r, &mut z);
    let labels = vec![condition; n];
    let flat = nn::conditioned_forward_snapshot(&ckpt.generator, &z, &labels, n);
    Ok((0..n).map(|i| [flat[2 * i], flat[2 * i + 1]]).collect())
}

/// Count samples assigned to each mixture mode (nearest center within the
/// given radius).
pub fn mode_occupancy(points: &[[f64; 2]], radius: f64) -> [usize; synthetic::MODE_COUNT] {
    let centers = synthetic::mode_centers();
    let mut counts = [0usize; synthetic::MODE_COUNT];
    for p in points {
        let mut best = (f64::INFINITY, 0usize);
        for (k, c) in centers.iter().enumerate() {
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            let d = (dx * dx + dy * dy).sqrt();
            if d < best.0 {
                best = (d, k);
            }
        }
        if best.0 <= radius {
            counts[best.1] += 1;
        }
    }
    counts
}

/// Cheap sanity accessor used by differential tests: the loss-log rows.
pub fn read_log(path: &Path) -> Result<Vec<String>, Error> {
    Ok(std::fs::read_to_string(path)?.lines().map(str::to_string).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelKind;
    use crate::synthetic::ExampleId;

    fn smoke_config(model: ModelKind, steps: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(ExampleId::One, model, 5);
        cfg.steps = steps;
        cfg.data_points = 600;
        cfg.log_every = 10;
        cfg.checkpoint_every = 10_000;
        cfg
    }

    #[test]
    fn smoke_run_completes_and_checkpoint_loads() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = smoke_config(ModelKind::Pcdgan, 30);
        let out = train(&cfg, dir.path(), None).unwrap();
        assert!(out.checkpoint.exists());
        assert!(out.log.exists());
        assert!(out.run_dir.join("config.txt").exists());
        assert!(out.run_dir.join("dataset.csv").exists());
        let ckpt = Checkpoint::load(&out.checkpoint).unwrap();
        assert_eq!(ckpt.meta_value("model"), Some("pcdgan"));
        let log = read_log(&out.log).unwrap();
        assert!(log.len() >= 3);
        for row in &log[1..] {
            for field in row.split(',').skip(1) {
                let v: f64 = field.parse().unwrap();
                assert!(v.is_finite());
            }
        }
    }

    #[test]
    fn baseline_mode_has_zero_diversity_column() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = smoke_config(ModelKind::Ccgan, 20);
        let out = train(&cfg, dir.path(), None).unwrap();
        for row in &read_log(&out.log).unwrap()[1..] {
            let diversity_col = row.split(',').nth(4).unwrap();
            assert_eq!(diversity_col, "0");
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg = smoke_config(ModelKind::Pcdgan, 25);
        let a = train(&cfg, dir_a.path(), None).unwrap();
        let b = train(&cfg, dir_b.path(), None).unwrap();
        for name in ["train_log.csv", "dataset.csv", "checkpoint_final.txt", "config.txt"] {
            let x = std::fs::read(a.run_dir.join(name)).unwrap();
            let y = std::fs::read(b.run_dir.join(name)).unwrap();
            assert_eq!(x, y, "{name} differs between identical runs");
        }
    }

    #[test]
    fn conditioning_quality_grad_flows_to_points() {
        let data = synthetic::generate_dataset(ExampleId::One, 500, 1).unwrap();
        let params = llets::llets_params(4.7).unwrap();
        let scale = data.scale();
        let report = crate::tensor::grad_check(
            |x| {
                conditioning_quality(x, &[0.4, 0.6], &scale, &params, None)
                    .sum()
            },
            &[0.25, 0.1, -0.3, 0.35],
            2,
            2,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "rel err {}", report.max_rel_err);
    }

    #[test]
    fn evaluate_checkpoint_roundtrip_equals_in_memory() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = smoke_config(ModelKind::Pcdgan, 15);
        let out = train(&cfg, dir.path(), None).unwrap();
        let mut protocol = EvalProtocol::desk();
        protocol.n_conditions = 3;
        protocol.repeats = 1;
        protocol.samples_per_condition = 50;
        protocol.diversity.n_subsets = 30;
        let (report, csv, _) = evaluate_checkpoint(&out.checkpoint, &protocol, None).unwrap();
        assert_eq!(report.cells.len(), 3);
        assert!(csv.exists());

        // Same protocol straight from the in-memory snapshot.
        let ckpt = Checkpoint::load(&out.checkpoint).unwrap();
        let scale = synthetic::generate_dataset(cfg.example, cfg.data_points, cfg.seed)
            .unwrap()
            .scale();
        let direct = eval::evaluate(
            &ckpt.generator,
            &scale,
            &protocol,
            cfg.seed,
            &report.run_id,
            "pcdgan",
        )
        .unwrap();
        for (a, b) in report.cells.iter().zip(&direct.cells) {
            assert_eq!(a.label_error.to_bits(), b.label_error.to_bits());
            assert_eq!(a.diversity.to_bits(), b.diversity.to_bits());
        }
    }

    #[test]
    fn checkpoints_written_on_cadence() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke_config(ModelKind::Pcdgan, 12);
        cfg.checkpoint_every = 5;
        let out = train(&cfg, dir.path(), None).unwrap();
        assert!(out.run_dir.join("checkpoint_step5.txt").exists());
        assert!(out.run_dir.join("checkpoint_step10.txt").exists());
        assert!(out.run_dir.join("checkpoint_final.txt").exists());
        let step5 = Checkpoint::load(&out.run_dir.join("checkpoint_step5.txt")).unwrap();
        assert_eq!(step5.meta_value("step"), Some("5"));
    }

    #[test]
    fn mode_occupancy_counts() {
        let centers = synthetic::mode_centers();
        let mut pts: Vec<[f64; 2]> = centers.to_vec();
        pts.push([0.0, 0.0]); // origin: nearest center is 0.4 away, outside 0.25
        let counts = mode_occupancy(&pts, 0.25);
        assert_eq!(counts, [1, 1, 1, 1, 1, 1]);
    }
}
