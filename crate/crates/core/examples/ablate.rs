//! Quick ablation harness: vary one knob per run on Example 2 and print the
//! desk metrics. Usage: ablate <steps> <variant>...
//! Variants: base, g0, g01, g005, uniform_dpp, ccgan, g0_uniform

use pcdgan_core::config::{ModelKind, TrainConfig};
use pcdgan_core::eval::EvalProtocol;
use pcdgan_core::nn::Checkpoint;
use pcdgan_core::synthetic::ExampleId;
use pcdgan_core::train::{evaluate_checkpoint, mode_occupancy, sample_designs};

fn variant(name: &str, steps: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(ExampleId::Two, ModelKind::Pcdgan, 0);
    cfg.steps = steps;
    cfg.checkpoint_every = 1_000_000;
    match name {
        "base" => {}
        "g0" => cfg.diversity_weight = 0.0,
        "g01" => cfg.diversity_weight = 0.1,
        "g005" => cfg.diversity_weight = 0.05,
        "g2" => cfg.diversity_weight = 2.0,
        "uniform_dpp" => cfg.apply_kv("label_sampling", "uniform").unwrap(),
        "g0_uniform" => {
            cfg.diversity_weight = 0.0;
            cfg.apply_kv("label_sampling", "uniform").unwrap();
        }
        "ccgan" => cfg = TrainConfig::new(ExampleId::Two, ModelKind::Ccgan, 0),
        other => {
            // Grid variants like h0.2_f1e-6 (head scale, eigen floor).
            let (h, f) = other
                .strip_prefix('h')
                .and_then(|r| r.split_once("_f"))
                .unwrap_or_else(|| panic!("unknown variant {other}"));
            cfg.gen_head_scale = h.parse().unwrap();
            cfg.dpp_eigen_floor = f.parse().unwrap();
        }
    }
    if name == "ccgan" {
        cfg.steps = steps;
        cfg.checkpoint_every = 1_000_000;
    }
    cfg
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: u64 = args[0].parse().unwrap();
    let names: Vec<&str> = args[1..].iter().map(String::as_str).collect();
    let out = std::env::temp_dir().join(format!("pcdgan_ablate_{steps}"));
    let _ = std::fs::remove_dir_all(&out);
    std::fs::create_dir_all(&out).unwrap();

    let configs: Vec<TrainConfig> = names.iter().map(|n| variant(n, steps)).collect();
    let t0 = std::time::Instant::now();
    // Distinct run dirs per variant (same model+seed would collide).
    let outputs: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = names
            .iter()
            .zip(&configs)
            .map(|(name, cfg)| {
                let out = out.clone();
                s.spawn(move || pcdgan_core::train::train(cfg, &out, Some(name)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let results: Vec<_> = names.iter().zip(outputs).collect();
    println!("{} runs in {:.1} min", names.len(), t0.elapsed().as_secs_f64() / 60.0);
    let protocol = EvalProtocol::desk();
    for (name, res) in results {
        let r = res.unwrap();
        let (report, _, _) = evaluate_checkpoint(&r.checkpoint, &protocol, None).unwrap();
        let ckpt = Checkpoint::load(&r.checkpoint).unwrap();
        let pts = sample_designs(&ckpt, 0.4, 1000, 0).unwrap();
        let occ = mode_occupancy(&pts, 0.25);
        println!(
            "{name:>12}: err {:.4} | lik {:.3} | div {:.2} | occ {occ:?}",
            report.label_error.mean, report.likelihood.mean, report.diversity.mean
        );
    }
}
