//! Inspect a trained generator's conditioning state and the force balance
//! inside the total generator objective at one condition.
//! Usage: diagnose <checkpoint> <condition>

use pcdgan_core::dpp;
use pcdgan_core::llets;
use pcdgan_core::nn::{conditioned_forward, Checkpoint};
use pcdgan_core::rng;
use pcdgan_core::synthetic::{self, LabelScale};
use pcdgan_core::tensor::Tensor;
use pcdgan_core::train::conditioning_quality;

fn grad_norm_on_points(loss: &Tensor, points: &Tensor) -> f64 {
    points.zero_grad();
    loss.backward();
    let g = points.to_grad();
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ckpt = Checkpoint::load(std::path::Path::new(&args[0])).unwrap();
    let condition: f64 = args[1].parse().unwrap();
    let scale = LabelScale::new(
        ckpt.meta_value("label_min").unwrap().parse().unwrap(),
        ckpt.meta_value("label_max").unwrap().parse().unwrap(),
    )
    .unwrap();
    let g = ckpt.generator.to_mlp();
    let d = ckpt.discriminator.to_mlp();
    let params = llets::llets_params(4.7).unwrap();

    let n = 32;
    let mut r = rng::seeded(123, 55);
    let mut z = vec![0.0; n * 5];
    rng::fill_normal(&mut r, &mut z);
    let labels = vec![condition; n];
    let x_graph = conditioned_forward(
        &g,
        &Tensor::constant(n, 5, z),
        &Tensor::constant(n, 1, labels.clone()),
    );
    // Re-leaf the points so gradient norms accumulate on them directly.
    let x = Tensor::leaf(n, 2, x_graph.to_values());

    let raw = synthetic::quality_tensor(&x);
    let (mul, add) = scale.affine_coeffs();
    let predicted = raw.affine(mul, add);
    let eps: Vec<f64> = predicted
        .values()
        .iter()
        .map(|&p| (p - condition).abs())
        .collect();
    let quality = conditioning_quality(&x, &labels, &scale, &params, None);
    let q = quality.to_values();

    println!("condition {condition}");
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "predicted label: mean {:.4} min {:.4} max {:.4}",
        mean(&predicted.to_values()),
        predicted.values().iter().cloned().fold(f64::INFINITY, f64::min),
        predicted.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    );
    println!("eps: mean {:.4}  q: mean {:.4} min {:.4} max {:.4}", mean(&eps), mean(&q),
        q.iter().cloned().fold(f64::INFINITY, f64::min),
        q.iter().cloned().fold(f64::NEG_INFINITY, f64::max));

    // Log-det split: quality part vs similarity part.
    let kernel = dpp::build_kernel(&x, &quality, 3.0, 1.0, 1e-6).unwrap();
    let logdet = dpp::logdet_psd(&kernel).unwrap().item();
    let q_part: f64 = q.iter().map(|&v| 6.0 * v.max(1e-6).ln()).sum();
    let k_only = dpp::rbf_kernel(&x, 1.0);
    let k_logdet = {
        let kk = dpp::build_kernel(&x, &Tensor::constant(n, 1, vec![1.0; n]), 3.0, 1.0, 1e-6).unwrap();
        let _ = k_only;
        dpp::logdet_psd(&kk).unwrap().item()
    };
    println!(
        "logdet(L) {logdet:.1} | quality part {q_part:.1} | logdet(K+jI) {k_logdet:.1} | pcd {:.2}",
        -logdet / n as f64
    );

    // Force balance on the generated points.
    let vicinal = {
        let probs = conditioned_forward(&d, &x, &Tensor::constant(n, 1, labels.clone()));
        probs.ln().mean().neg()
    };
    let gn_vicinal = grad_norm_on_points(&vicinal, &x);
    let pcd = dpp::pcd_loss(&dpp::build_kernel(&x, &conditioning_quality(&x, &labels, &scale, &params, None), 3.0, 1.0, 1e-6).unwrap()).unwrap();
    let gn_pcd = grad_norm_on_points(&pcd, &x);
    // Quality-only path: -(6/n) sum ln q (the separable conditioning part).
    let qual_loss = conditioning_quality(&x, &labels, &scale, &params, None)
        .clamp(1e-6, 1.0)
        .ln()
        .mean()
        .scale(-6.0);
    let gn_quality = grad_norm_on_points(&qual_loss, &x);
    println!(
        "grad norms on points: vicinal {gn_vicinal:.3} | pcd {gn_pcd:.3} (x gamma1 0.5 => {:.3}) | quality-only {gn_quality:.3}",
        0.5 * gn_pcd
    );

    // Where does D push? Probe D at the generated points vs data labels.
    let probs = conditioned_forward(&d, &x, &Tensor::constant(n, 1, labels)).to_values();
    println!("D(x, c): mean {:.3} min {:.3} max {:.3}", mean(&probs),
        probs.iter().cloned().fold(f64::INFINITY, f64::min),
        probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
}
