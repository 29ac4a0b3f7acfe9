//! Merging trained sub-networks into one deployable network via linear
//! weight products, and pruning it by output contribution.
//!
//! The estimator's decoded output feeds the controller through the product
//! of the controller's input weights and the estimator's output weights;
//! command channels pass through to the control layer directly and
//! contribute exactly zero current to the estimation layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::snn::{InputNorm, LayerState, NetworkMeta, SpikeMode, SpikingNetwork};
use crate::training::Sample;

/// How the controller's input channels are fed after merging.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergePlan {
    /// Controller input indices driven by the estimator's decoded outputs, in
    /// estimator-output order.
    pub estimated_inputs: Vec<usize>,
    /// Controller input indices passed through from the merged network's
    /// input (command channels).
    pub passthrough_inputs: Vec<usize>,
    /// Parent checkpoint hashes recorded in the merged network's provenance.
    pub estimator_hash: String,
    pub controller_hash: String,
}

impl MergePlan {
    /// Standard layout: the first `n_est_out` controller inputs are the
    /// attitude estimate, the rest are command passthrough.
    pub fn standard(n_est_out: usize, n_ctl_in: usize, est_hash: &str, ctl_hash: &str) -> Self {
        MergePlan {
            estimated_inputs: (0..n_est_out).collect(),
            passthrough_inputs: (n_est_out..n_ctl_in).collect(),
            estimator_hash: est_hash.to_string(),
            controller_hash: ctl_hash.to_string(),
        }
    }

    fn validate(&self, n_ctl_in: usize) -> Result<()> {
        let mut seen = vec![false; n_ctl_in];
        for &i in self.estimated_inputs.iter().chain(self.passthrough_inputs.iter()) {
            if i >= n_ctl_in {
                return Err(Error::Merge(format!(
                    "plan maps controller input {i}, but the controller has {n_ctl_in} inputs"
                )));
            }
            if seen[i] {
                return Err(Error::Merge(format!("controller input {i} mapped twice")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Merge("every controller input channel must be covered".into()));
        }
        Ok(())
    }
}

/// Merge the estimation and control sub-networks into a single network.
///
/// The estimator's layers come first, unchanged except that their encode
/// matrices gain exact-zero columns for the appended command channels. The
/// controller's first layer is rewired: its feedforward weights become
/// `W_ctl,att · diag(1/scale_att) · W_dec,est` (the attitude normalization
/// scale folds into the product; its offset must be zero), and its command
/// columns move into a direct input tap with zero entries everywhere else.
pub fn merge(
    estimator: &SpikingNetwork<f32>,
    controller: &SpikingNetwork<f32>,
    plan: &MergePlan,
) -> Result<SpikingNetwork<f32>> {
    estimator.validate().map_err(|e| Error::Merge(format!("estimator: {e}")))?;
    controller.validate().map_err(|e| Error::Merge(format!("controller: {e}")))?;
    plan.validate(controller.n_inputs())?;

    if plan.estimated_inputs.len() != estimator.n_outputs() {
        return Err(Error::Merge(format!(
            "estimator decodes {} channels but the plan maps {} controller inputs to it",
            estimator.n_outputs(),
            plan.estimated_inputs.len()
        )));
    }
    for layer in &estimator.layers {
        if layer.w_in.is_some() {
            return Err(Error::Merge("estimator already has direct input taps".into()));
        }
    }
    if controller.layers[0].w_in.is_some() {
        return Err(Error::Merge("controller layer 0 already has a direct input tap".into()));
    }
    for &ci in &plan.estimated_inputs {
        if controller.input_norm.offset[ci] != 0.0 {
            return Err(Error::Merge(format!(
                "controller input {ci} is estimator-fed but has a non-zero normalization offset; \
                 the merge is only a pure weight product for scale-only channels"
            )));
        }
    }

    let n_imu = estimator.n_inputs();
    let n_cmd = plan.passthrough_inputs.len();
    let n_in = n_imu + n_cmd;

    // Input channels: estimator inputs then passthrough commands.
    let mut input_labels = estimator.input_labels.clone();
    let mut offset = estimator.input_norm.offset.clone();
    let mut scale = estimator.input_norm.scale.clone();
    for &ci in &plan.passthrough_inputs {
        input_labels.push(controller.input_labels[ci].clone());
        offset.push(controller.input_norm.offset[ci]);
        scale.push(controller.input_norm.scale[ci]);
    }

    let mut layers = Vec::with_capacity(estimator.layers.len() + controller.layers.len());
    for (li, layer) in estimator.layers.iter().enumerate() {
        let mut l = layer.clone();
        if li == 0 {
            // Extend the encode matrix with exact-zero command columns.
            l.w_ff = layer.w_ff.hcat(&Mat::zeros(layer.n(), n_cmd))?;
        }
        layers.push(l);
    }

    // Rewire the controller's first layer.
    let est_last = estimator.layers.last().unwrap().n();
    let ctl0 = &controller.layers[0];
    let mut att_block = ctl0.w_ff.select_cols(&plan.estimated_inputs);
    for (k, &ci) in plan.estimated_inputs.iter().enumerate() {
        att_block.scale_col(k, 1.0 / controller.input_norm.scale[ci]);
    }
    let folded = att_block.matmul(&estimator.w_decode)?;
    debug_assert_eq!(folded.cols(), est_last);

    let mut w_in = Mat::zeros(ctl0.n(), n_in);
    for (k, &ci) in plan.passthrough_inputs.iter().enumerate() {
        for r in 0..ctl0.n() {
            w_in.set(r, n_imu + k, ctl0.w_ff.get(r, ci));
        }
    }

    let mut first_ctl = ctl0.clone();
    first_ctl.w_ff = folded;
    first_ctl.w_in = Some(w_in);
    layers.push(first_ctl);
    for layer in &controller.layers[1..] {
        layers.push(layer.clone());
    }

    let mut provenance = std::collections::BTreeMap::new();
    provenance.insert("estimator_checkpoint".into(), plan.estimator_hash.clone());
    provenance.insert("controller_checkpoint".into(), plan.controller_hash.clone());

    let merged = SpikingNetwork {
        input_labels,
        output_labels: controller.output_labels.clone(),
        input_norm: InputNorm { offset, scale },
        layers,
        w_decode: controller.w_decode.clone(),
        meta: NetworkMeta {
            name: format!("merged:{}+{}", estimator.meta.name, controller.meta.name),
            provenance,
        },
    };
    merged.validate().map_err(|e| Error::Merge(format!("merged network invalid: {e}")))?;
    Ok(merged)
}

/// Per-neuron contribution pruning outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneReport {
    pub widths_before: Vec<usize>,
    pub widths_after: Vec<usize>,
    /// Contribution score per layer per neuron: total spikes emitted on the
    /// reference corpus × L1 norm of the neuron's outgoing next-stage
    /// weights.
    pub scores: Vec<Vec<f64>>,
    /// Removed neuron indices per layer (original indexing, ascending).
    pub removed: Vec<Vec<usize>>,
    pub mse_before: f64,
    pub mse_after: f64,
    pub mse_ratio: f64,
    pub retention_limit: f64,
    /// Spike-driven synapse counts (additions per step if everything fired).
    pub synapses_before: u64,
    pub synapses_after: u64,
    /// Mean firing fraction on the reference corpus.
    pub sparsity_before: f64,
    pub sparsity_after: f64,
    /// Synapse count × firing fraction: expected additions per step.
    pub ops_per_step_before: f64,
    pub ops_per_step_after: f64,
}

impl PruneReport {
    pub fn text_table(&self) -> String {
        let mut s = String::new();
        s.push_str("layer  before  after  removed\n");
        for l in 0..self.widths_before.len() {
            s.push_str(&format!(
                "{:>5}  {:>6}  {:>5}  {:?}\n",
                l,
                self.widths_before[l],
                self.widths_after[l],
                self.removed[l]
            ));
        }
        s.push_str(&format!(
            "MSE {:.6e} -> {:.6e} (ratio {:.4}, limit {:.2})\n",
            self.mse_before, self.mse_after, self.mse_ratio, self.retention_limit
        ));
        s.push_str(&format!(
            "spike-driven synapses {} -> {}; expected additions/step {:.0} -> {:.0} at sparsity {:.3} -> {:.3}\n",
            self.synapses_before,
            self.synapses_after,
            self.ops_per_step_before,
            self.ops_per_step_after,
            self.sparsity_before,
            self.sparsity_after
        ));
        s
    }
}

/// Maximum allowed post/pre MSE ratio.
pub const RETENTION_LIMIT: f64 = 1.01;

struct CorpusRun {
    mse: f64,
    spike_counts: Vec<Vec<u64>>,
    sparsity: f64,
}

fn run_corpus(net: &SpikingNetwork<f32>, corpus: &[Sample<'_>]) -> Result<CorpusRun> {
    let mut counts: Vec<Vec<u64>> = net.layers.iter().map(|l| vec![0u64; l.n()]).collect();
    let mut sq_err = 0.0f64;
    let mut n_err = 0u64;
    let mut total_spikes = 0u64;
    let mut total_steps = 0u64;
    let mut out = vec![0.0f32; net.n_outputs()];
    let mut scratch = Vec::new();
    for s in corpus {
        let mut states: Vec<LayerState<f32>> = net.reset_states();
        for t in 0..s.inputs.rows() {
            crate::snn::network_step_normed(
                net,
                &mut states,
                s.inputs.row(t),
                SpikeMode::Binary,
                &mut out,
                &mut scratch,
            );
            for (li, st) in states.iter().enumerate() {
                for &j in &st.fired {
                    counts[li][j] += 1;
                }
                total_spikes += st.fired.len() as u64;
            }
            for (c, &o) in out.iter().enumerate() {
                let e = o as f64 - s.targets.get(t, c) as f64;
                sq_err += e * e;
                n_err += 1;
            }
            total_steps += 1;
        }
    }
    if n_err == 0 {
        return Err(Error::InvalidSequence("empty reference corpus".into()));
    }
    Ok(CorpusRun {
        mse: sq_err / n_err as f64,
        spike_counts: counts,
        sparsity: total_spikes as f64 / (total_steps as f64 * net.total_neurons() as f64),
    })
}

use crate::bench::spike_driven_synapses;

/// Score every neuron on the reference corpus, remove the lowest contributors
/// down to `target_widths`, and verify MSE retention. Frozen integrator
/// neurons are never removed. The prune is rejected (nothing returned) if the
/// scoring-corpus MSE ratio exceeds [`RETENTION_LIMIT`].
pub fn score_and_prune(
    net: &SpikingNetwork<f32>,
    corpus: &[Sample<'_>],
    target_widths: &[usize],
) -> Result<(SpikingNetwork<f32>, PruneReport)> {
    if target_widths.len() != net.layers.len() {
        return Err(Error::dim("target_widths", net.layers.len(), target_widths.len()));
    }
    for (li, (&target, layer)) in target_widths.iter().zip(net.layers.iter()).enumerate() {
        if target > layer.n() {
            return Err(Error::InvalidParams(format!(
                "layer {li}: target width {target} exceeds current width {}",
                layer.n()
            )));
        }
        let frozen = layer.frozen.iter().filter(|&&f| f).count();
        if target < frozen {
            return Err(Error::InvalidParams(format!(
                "layer {li}: target width {target} below its {frozen} frozen integrator neurons"
            )));
        }
    }

    let before = run_corpus(net, corpus)?;

    // Contribution: spikes emitted × L1 of outgoing next-stage weights.
    let mut scores: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
    for (li, layer) in net.layers.iter().enumerate() {
        let next: &Mat<f32> = if li + 1 < net.layers.len() {
            &net.layers[li + 1].w_ff
        } else {
            &net.w_decode
        };
        let mut s = Vec::with_capacity(layer.n());
        for j in 0..layer.n() {
            let w_l1 = next.abs_col_sum(j) as f64;
            s.push(before.spike_counts[li][j] as f64 * w_l1);
        }
        scores.push(s);
    }

    // Lowest scores go first; ties broken by lowest index.
    let mut keep: Vec<Vec<usize>> = Vec::with_capacity(net.layers.len());
    let mut removed: Vec<Vec<usize>> = Vec::with_capacity(net.layers.len());
    for (li, layer) in net.layers.iter().enumerate() {
        let n_remove = layer.n() - target_widths[li];
        let mut order: Vec<usize> = (0..layer.n()).collect();
        order.sort_by(|&a, &b| {
            scores[li][a]
                .partial_cmp(&scores[li][b])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut out: Vec<usize> = Vec::with_capacity(n_remove);
        for &j in &order {
            if out.len() == n_remove {
                break;
            }
            if !layer.frozen[j] {
                out.push(j);
            }
        }
        if out.len() < n_remove {
            return Err(Error::InvalidParams(format!(
                "layer {li}: cannot remove {n_remove} neurons without touching frozen ones"
            )));
        }
        out.sort_unstable();
        let kept: Vec<usize> = (0..layer.n()).filter(|j| !out.contains(j)).collect();
        removed.push(out);
        keep.push(kept);
    }

    // Rebuild with rows/columns deleted from every adjacent matrix.
    let mut pruned = net.clone();
    for (li, kept) in keep.iter().enumerate() {
        let layer = &mut pruned.layers[li];
        layer.tau_mem = kept.iter().map(|&j| layer.tau_mem[j]).collect();
        layer.tau_syn = kept.iter().map(|&j| layer.tau_syn[j]).collect();
        layer.theta = kept.iter().map(|&j| layer.theta[j]).collect();
        layer.frozen = kept.iter().map(|&j| layer.frozen[j]).collect();
        layer.w_ff = layer.w_ff.select_rows(kept);
        if let Some(rec) = &layer.w_rec {
            layer.w_rec = Some(rec.select_rows(kept).select_cols(kept));
        }
        if let Some(w_in) = &layer.w_in {
            layer.w_in = Some(w_in.select_rows(kept));
        }
        if li + 1 < pruned.layers.len() {
            pruned.layers[li + 1].w_ff = pruned.layers[li + 1].w_ff.select_cols(kept);
        } else {
            pruned.w_decode = pruned.w_decode.select_cols(kept);
        }
    }
    pruned.validate()?;

    let after = run_corpus(&pruned, corpus)?;
    let ratio = if before.mse > 0.0 {
        after.mse / before.mse
    } else if after.mse == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let report = PruneReport {
        widths_before: net.layer_widths(),
        widths_after: pruned.layer_widths(),
        scores,
        removed,
        mse_before: before.mse,
        mse_after: after.mse,
        mse_ratio: ratio,
        retention_limit: RETENTION_LIMIT,
        synapses_before: spike_driven_synapses(net),
        synapses_after: spike_driven_synapses(&pruned),
        sparsity_before: before.sparsity,
        sparsity_after: after.sparsity,
        ops_per_step_before: spike_driven_synapses(net) as f64 * before.sparsity,
        ops_per_step_after: spike_driven_synapses(&pruned) as f64 * after.sparsity,
    };
    if ratio > RETENTION_LIMIT {
        return Err(Error::PruneRejected {
            ratio,
            limit: RETENTION_LIMIT,
        });
    }
    pruned.meta.name = format!("{}:pruned", net.meta.name);
    pruned
        .meta
        .provenance
        .insert("pruned_from".into(), net.meta.name.clone());
    Ok((pruned, report))
}
