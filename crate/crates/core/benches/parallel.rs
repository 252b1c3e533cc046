//! Parallel vs sequential throughput for the data-parallel surfaces:
//! the diversity score's subset log-determinants and the full evaluation
//! sweep. Both paths produce bit-identical results; this measures the win.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pcdgan_core::eval::{diversity_score, evaluate, DiversityConfig, EvalProtocol};
use pcdgan_core::nn::{Activation, Mlp};
use pcdgan_core::rng;
use pcdgan_core::synthetic::{generate_dataset, ExampleId};

fn bench_diversity(c: &mut Criterion) {
    let mut r = rng::seeded(7, 1);
    let points: Vec<[f64; 2]> = (0..1000)
        .map(|_| {
            [
                1.2 * rand::Rng::gen::<f64>(&mut r) - 0.6,
                1.2 * rand::Rng::gen::<f64>(&mut r) - 0.6,
            ]
        })
        .collect();
    let mut group = c.benchmark_group("diversity_score_1000x10");
    group.sample_size(20);
    for parallel in [false, true] {
        let cfg = DiversityConfig { parallel, ..Default::default() };
        group.bench_with_input(
            BenchmarkId::new("subsets", if parallel { "parallel" } else { "sequential" }),
            &cfg,
            |b, cfg| {
                b.iter(|| {
                    let mut rr = rng::seeded(11, 2);
                    diversity_score(&points, cfg, &mut rr).unwrap().score
                })
            },
        );
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let generator = {
        let mut r = rng::seeded(3, rng::stream::INIT_GENERATOR);
        Mlp::new(&[6, 64, 64, 2], Activation::LeakyRelu(0.2), Activation::Linear, &mut r)
            .snapshot()
    };
    let scale = generate_dataset(ExampleId::One, 2000, 0).unwrap().scale();
    let mut group = c.benchmark_group("evaluate_sweep_6x2x300");
    group.sample_size(10);
    for parallel in [false, true] {
        let protocol = EvalProtocol {
            n_conditions: 6,
            repeats: 2,
            samples_per_condition: 300,
            diversity: DiversityConfig { n_subsets: 300, parallel, ..Default::default() },
            parallel,
            ..EvalProtocol::desk()
        };
        group.bench_with_input(
            BenchmarkId::new("cells", if parallel { "parallel" } else { "sequential" }),
            &protocol,
            |b, protocol| {
                b.iter(|| evaluate(&generator, &scale, protocol, 5, "bench", "bench").unwrap())
            },
        );
    }
    group.finish();
}

criterion_group!(benches, bench_diversity, bench_evaluate);
criterion_main!(benches);
