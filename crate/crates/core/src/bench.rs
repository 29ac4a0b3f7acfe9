//! Single-threaded per-step inference timing, for checking the 2 ms
//! control-loop budget.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snn::{SpikingNetwork, StepScratch};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyReport {
    pub steps: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
    /// Mean firing fraction during the timing run.
    pub sparsity: f64,
    /// Spike-driven synapse count of the network.
    pub synapses: u64,
    /// Synapses × measured sparsity: expected additions per step.
    pub ops_per_step: f64,
}

/// Time `steps` single network steps on a synthetic input stream whose
/// normalized values wander in roughly the unit range.
pub fn bench_inference(net: &SpikingNetwork<f32>, steps: usize, seed: u64) -> Result<LatencyReport> {
    if steps == 0 {
        return Err(Error::InvalidParams("bench needs at least one step".into()));
    }
    let n_in = net.n_inputs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = net.reset_states();
    let mut scratch = StepScratch::new();
    let mut out = vec![0.0f32; net.n_outputs()];
    let mut raw = vec![0.0f32; n_in];
    let mut walk = vec![0.0f32; n_in];
    let mut samples_us = Vec::with_capacity(steps);
    let mut fired_total = 0u64;

    for _ in 0..steps {
        for c in 0..n_in {
            walk[c] = 0.95 * walk[c] + rng.gen_range(-0.3..0.3);
            // Generate in normalized space, then map back to raw units so the
            // network's own preprocessing reproduces the intended range.
            raw[c] = walk[c] * net.input_norm.scale[c] + net.input_norm.offset[c];
        }
        let t0 = Instant::now();
        let fired = crate::snn::network_step(net, &mut states, &raw, &mut out, &mut scratch);
        samples_us.push(t0.elapsed().as_secs_f64() * 1e6);
        fired_total += fired as u64;
    }

    samples_us.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| samples_us[(((steps - 1) as f64) * p) as usize];
    let sparsity = fired_total as f64 / (steps as f64 * net.total_neurons() as f64);
    let synapses = spike_driven_synapses(net);
    Ok(LatencyReport {
        steps,
        mean_us: samples_us.iter().sum::<f64>() / steps as f64,
        p50_us: pct(0.50),
        p99_us: pct(0.99),
        max_us: *samples_us.last().unwrap(),
        sparsity,
        synapses,
        ops_per_step: synapses as f64 * sparsity,
    })
}

pub(crate) fn spike_driven_synapses(net: &SpikingNetwork<f32>) -> u64 {
    let mut ops = 0u64;
    for (li, l) in net.layers.iter().enumerate() {
        if li > 0 {
            ops += (l.w_ff.rows() * l.w_ff.cols()) as u64;
        }
        if let Some(rec) = &l.w_rec {
            ops += (rec.rows() * rec.cols()) as u64;
        }
    }
    ops + (net.w_decode.rows() * net.w_decode.cols()) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::{init_network, TrainConfig};

    #[test]
    fn latency_report_is_ordered() {
        let mut cfg = TrainConfig::estimator();
        cfg.hidden = vec![32, 32];
        let inputs: Vec<String> = (0..6).map(|i| format!("i{i}")).collect();
        let outputs: Vec<String> = (0..3).map(|i| format!("o{i}")).collect();
        let net = init_network(&inputs, &outputs, &cfg, "bench");
        let rep = bench_inference(&net, 2000, 1).unwrap();
        assert!(rep.p50_us <= rep.p99_us);
        assert!(rep.p99_us <= rep.max_us);
        assert!(rep.mean_us > 0.0);
        assert_eq!(rep.synapses, 32 * 32 + 32 * 32 + 32 * 32 + 3 * 32);
    }
}
