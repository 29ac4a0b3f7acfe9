//! Shared builders for the criterion benchmarks: reference-shaped networks
//! without going through training.

use spikectl_core::training::{init_network, TrainConfig};
use spikectl_core::SpikingNetwork;

/// A network shaped like the merged deployment target (150-150-130 by
/// default), with untrained weights.
pub fn merged_shape(widths: &[usize], n_in: usize, n_out: usize, seed: u64) -> SpikingNetwork<f32> {
    let mut cfg = TrainConfig::estimator();
    cfg.hidden = widths.to_vec();
    cfg.seed = seed;
    let inputs: Vec<String> = (0..n_in).map(|i| format!("in{i}")).collect();
    let outputs: Vec<String> = (0..n_out).map(|i| format!("out{i}")).collect();
    init_network(&inputs, &outputs, &cfg, "bench-shape")
}
