//! Desk-scale pilot: one seed of each model on both examples, then the
//! metric comparison the acceptance gate checks.

use pcdgan_core::config::{ModelKind, TrainConfig};
use pcdgan_core::synthetic::ExampleId;
use pcdgan_core::train::{evaluate_checkpoint, mode_occupancy, sample_designs, train_matrix};
use pcdgan_core::{eval::EvalProtocol, nn::Checkpoint};

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let out = std::env::temp_dir().join(format!("pcdgan_pilot_s{seed}"));
    let _ = std::fs::remove_dir_all(&out);
    std::fs::create_dir_all(&out).unwrap();

    let mut configs = Vec::new();
    for example in [ExampleId::One, ExampleId::Two] {
        for model in [ModelKind::Pcdgan, ModelKind::Ccgan] {
            let mut cfg = TrainConfig::new(example, model, seed);
            cfg.checkpoint_every = 1_000_000;
            configs.push(cfg);
        }
    }
    let t0 = std::time::Instant::now();
    let results = train_matrix(&configs, &out, true);
    println!("trained 4 runs in {:.1} min", t0.elapsed().as_secs_f64() / 60.0);

    let protocol = EvalProtocol::desk();
    for (cfg, res) in configs.iter().zip(&results) {
        let r = res.as_ref().unwrap();
        let (report, _, _) = evaluate_checkpoint(&r.checkpoint, &protocol, None).unwrap();
        println!(
            "ex{} {:>6}: label_err {:.4} +/- {:.4} | likelihood {:.3} +/- {:.3} | diversity {:.2} +/- {:.2} | resamples {} escal {}",
            cfg.example,
            cfg.model.to_string(),
            report.label_error.mean,
            report.label_error.std,
            report.likelihood.mean,
            report.likelihood.std,
            report.diversity.mean,
            report.diversity.std,
            r.vicinity_resamples,
            r.jitter_escalations,
        );
        if cfg.example == ExampleId::Two && cfg.model == ModelKind::Pcdgan {
            let ckpt = Checkpoint::load(&r.checkpoint).unwrap();
            let pts = sample_designs(&ckpt, 0.4, 1000, seed).unwrap();
            let occ = mode_occupancy(&pts, 0.25);
            println!("  mode occupancy at 0.4: {occ:?}");
        }
    }
}
