use pcdgan_core::nn::{conditioned_forward, Activation, Mlp};
use pcdgan_core::rng;
use pcdgan_core::tensor::Tensor;

fn main() {
    for scale in [1.0, 0.5, 0.25, 0.1, 0.05] {
        let mut r = rng::seeded(0, rng::stream::INIT_GENERATOR);
        let g = Mlp::with_head_scale(&[6, 128, 128, 128, 2], Activation::LeakyRelu(0.2), Activation::Linear, scale, &mut r);
        let mut rr = rng::seeded(1, 9);
        let mut z = vec![0.0; 512 * 5];
        rng::fill_normal(&mut rr, &mut z);
        let y = Tensor::constant(512, 1, vec![0.4; 512]);
        let out = conditioned_forward(&g, &Tensor::constant(512, 5, z), &y);
        let v = out.to_values();
        let xs: Vec<f64> = v.iter().step_by(2).cloned().collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let std = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64).sqrt();
        let max = v.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        println!("head_scale {scale}: x mean {mean:.3} std {std:.3} max|coord| {max:.3}");
    }
}
