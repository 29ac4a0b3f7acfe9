//! Per-step inference cost of deployment-shaped networks, against the 2 ms
//! control-loop budget.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikectl_bench::merged_shape;
use spikectl_core::snn::{network_step, StepScratch};

fn bench_network_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("network_step");
    for (label, widths) in [
        ("merged-150-150-130", vec![150usize, 150, 130]),
        ("pruned-150-100-80", vec![150, 100, 80]),
    ] {
        let net = merged_shape(&widths, 9, 3, 7);
        let mut states = net.reset_states();
        let mut out = vec![0.0f32; 3];
        let mut scratch = StepScratch::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut input = [0.0f32; 9];
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                for v in input.iter_mut() {
                    *v = 0.9 * *v + rng.gen_range(-0.3..0.3);
                }
                network_step(&net, &mut states, &input, &mut out, &mut scratch)
            })
        });
    }
    group.finish();
}

fn bench_sequence_gradients(c: &mut Criterion) {
    use spikectl_core::linalg::Mat;
    use spikectl_core::training::TrainConfig;
    let net = merged_shape(&[64], 6, 3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs = Mat::from_fn(500, 6, |_, _| rng.gen_range(-1.0..1.0f32));
    let targets = Mat::from_fn(500, 3, |t, c| ((t + c) as f32 * 0.01).sin());
    let cfg = TrainConfig::default();
    c.bench_function("bptt_500step_64n", |b| {
        b.iter(|| {
            spikectl_core::training::bptt::loss_and_grads(
                &net,
                &inputs,
                &targets,
                &cfg_settings(&cfg),
                spikectl_core::SpikeMode::Binary,
            )
            .unwrap()
        })
    });
}

fn cfg_settings(cfg: &spikectl_core::training::TrainConfig) -> spikectl_core::training::TrainSettings<f32> {
    let mut s = spikectl_core::training::TrainSettings::from_slope(cfg.surrogate_slope);
    s.output_ema = cfg.output_ema_window;
    s
}

criterion_group!(benches, bench_network_step, bench_sequence_gradients);
criterion_main!(benches);
