//! Scratch diagnostic (temporary): can the architecture + optimizer fit a
//! pure 2000-step integration task, and what do the integrator internals do?

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikectl_core::linalg::Mat;
use spikectl_core::training::{self, Sample, TrainConfig};

fn make_integration_data(
    seed: u64,
    n_seqs: usize,
    steps: usize,
) -> (Vec<Mat<f32>>, Vec<Mat<f32>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..n_seqs {
        // Slow piecewise-constant error signal on channel 0, noise on others.
        let mut x = Mat::zeros(steps, 6);
        let mut level = 0.0f32;
        for t in 0..steps {
            if t % 400 == 0 {
                level = rng.gen_range(-1.0..1.0);
            }
            x.set(t, 0, level + rng.gen_range(-0.3..0.3));
            for c in 1..6 {
                x.set(t, c, rng.gen_range(-1.0..1.0));
            }
        }
        // Target: running integral of channel 0, scaled like the expert's
        // i-term in command units.
        let mut y = Mat::zeros(steps, 1);
        let mut acc = 0.0f32;
        for t in 0..steps {
            acc += x.get(t, 0) * 0.002 * 0.25; // gain 0.25 per second
            y.set(t, 0, acc);
        }
        inputs.push(x);
        targets.push(y);
    }
    (inputs, targets)
}

#[test]
#[ignore]
fn pure_integration_task_probe() {
    let steps = 2000;
    let (inputs, targets) = make_integration_data(3, 12, steps);
    let samples: Vec<Sample> = inputs
        .iter()
        .zip(targets.iter())
        .map(|(i, t)| Sample { inputs: i, targets: t })
        .collect();
    let in_labels: Vec<String> = (0..6).map(|i| format!("u{i}")).collect();
    let out_labels = vec!["integral".to_string()];

    for ff_scale in [1.0f32, 0.05, 0.01] {
        let mut cfg = TrainConfig::integrator();
        cfg.epochs = 25;
        cfg.seed = 5;
        cfg.init.ff_gain = ff_scale;
        let run = training::pretrain_integrators(&in_labels, &out_labels, &samples, &[], &cfg)
            .unwrap();
        let last = run.metrics.last().unwrap();
        // Evaluate on a fresh sequence.
        let (ti, tt) = make_integration_data(77, 1, steps);
        let rec = spikectl_core::snn::run_sequence_normed(&run.net, &ti[0]);
        let ema = training::ema_filter(&rec.outputs, 50);
        let bd = training::loss(&ema, &tt[0]).unwrap();
        println!(
            "ff_gain {ff_scale}: final train loss {:.5}, fresh-seq rho {:.3} mse {:.6}",
            last.total, bd.rho[0], bd.mse
        );
        let probe: Vec<usize> = vec![0, 500, 1000, 1500, 1999];
        for &t in &probe {
            println!(
                "  t={t}: target {:+.4} ema-out {:+.4}",
                tt[0].get(t, 0),
                ema.get(t, 0)
            );
        }
        // Integrator internals on the fresh sequence.
        let net = &run.net;
        let mut states = net.reset_states();
        let mut out = vec![0.0f32; 1];
        let mut scratch = spikectl_core::snn::StepScratch::new();
        let mut spikes = vec![0u32; net.layers[0].n()];
        let mut i_min = f32::MAX;
        let mut i_max = f32::MIN;
        for t in 0..steps {
            let row: Vec<f32> = (0..6).map(|c| ti[0].get(t, c)).collect();
            spikectl_core::snn::network_step(net, &mut states, &row, &mut out, &mut scratch);
            for &j in &states[0].fired {
                spikes[j] += 1;
            }
            for &i in &states[0].i_syn {
                i_min = i_min.min(i);
                i_max = i_max.max(i);
            }
        }
        println!("  spike counts {:?}  i range [{:.2}, {:.2}]", spikes, i_min, i_max);
    }
}
