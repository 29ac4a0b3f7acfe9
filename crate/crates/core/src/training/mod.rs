//! Supervised imitation training: surrogate-gradient BPTT, the combined
//! MSE + Pearson loss, parameter constraints, and the integrator
//! pretraining procedure.

pub mod bptt;
pub mod gradcheck;
pub mod loss;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Real};
use crate::snn::{InputNorm, LayerParams, NetworkMeta, SpikeMode, SpikingNetwork};
pub use bptt::{ema_filter, evaluate_loss, Grads};
pub use loss::{loss, loss_weighted, pearson, LossBreakdown};

/// Derivative of the scaled arctangent, `1 / (1 + (slope·x)²)`, used in place
/// of the Heaviside derivative in the backward pass only.
#[inline]
pub fn surrogate_grad<T: Real>(x: T, slope: T) -> T {
    let sx = slope * x;
    T::one() / (T::one() + sx * sx)
}

/// The surrogate's primitive, `arctan(slope·x) / slope`. Substituted for the
/// spike function when a fully differentiable forward pass is needed
/// (gradient verification only).
#[inline]
pub fn surrogate_primitive<T: Real>(x: T, slope: T) -> T {
    (slope * x).atan() / slope
}

/// Weight/leak initialization ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    /// Feedforward/encode weights ~ U(±gain/√fan_in).
    pub ff_gain: f32,
    /// Recurrent weights use the feedforward range scaled by this factor.
    pub rec_gain: f32,
    /// Readout weights ~ U(±gain/√fan_in).
    pub decode_gain: f32,
    /// Leak factors ~ U(tau_lo, tau_hi).
    pub tau_lo: f32,
    pub tau_hi: f32,
    /// Neurons at the tail of the last layer whose synaptic leak starts at
    /// exactly 1 (accumulating current), seeding slow-integration dynamics.
    /// Unlike frozen integrators these stay fully trainable.
    pub integrator_tail: usize,
    /// Input-weight scale for the integrator tail relative to the normal
    /// range. Accumulating units need weights small enough that the running
    /// sum stays near threshold over a whole training sequence.
    pub integrator_tail_ff_scale: f32,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            ff_gain: 1.0,
            rec_gain: 0.1,
            decode_gain: 1.0,
            tau_lo: 0.6,
            tau_hi: 0.95,
            integrator_tail: 0,
            integrator_tail_ff_scale: 0.02,
        }
    }
}

/// Training hyperparameters for one sub-network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Slope s of the arctan surrogate.
    pub surrogate_slope: f32,
    pub learning_rate: f32,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    pub adam_eps: f32,
    pub batch_size: usize,
    pub epochs: usize,
    /// Training sequence length in steps.
    pub seq_len: usize,
    /// Target time shift d: targets are the expert output d steps ahead.
    pub target_shift: usize,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub recurrent: bool,
    /// Number of fixed-parameter integrator neurons at the tail of the last
    /// hidden layer (taus = θ = 1, non-trainable).
    pub frozen_integrators: usize,
    /// Readout smoothing window for integrator training (steps).
    pub output_ema_window: Option<usize>,
    pub seed: u64,
    pub init: InitConfig,
    pub tau_min: f32,
    pub tau_max: f32,
    pub theta_min: f32,
    pub mse_weight: f32,
    pub pearson_weight: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            surrogate_slope: 7.0,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 8,
            epochs: 30,
            seq_len: 2000,
            target_shift: 0,
            hidden: vec![150, 150],
            recurrent: true,
            frozen_integrators: 0,
            output_ema_window: None,
            seed: 1,
            init: InitConfig::default(),
            tau_min: 0.0,
            tau_max: 1.0,
            theta_min: 0.01,
            mse_weight: 1.0,
            pearson_weight: 0.5,
        }
    }
}

impl TrainConfig {
    /// Attitude-estimation sub-network defaults: 2 recurrent layers of 150,
    /// with a seeded slow pathway for the gyro-integrated channels.
    pub fn estimator() -> Self {
        TrainConfig {
            epochs: 60,
            init: InitConfig {
                ff_gain: 0.5,
                integrator_tail: 40,
                ..InitConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    /// Attitude-control sub-network defaults: 1 recurrent layer of 130 with
    /// 10 integrator neurons and 6-step target shift.
    pub fn controller() -> Self {
        TrainConfig {
            hidden: vec![130],
            frozen_integrators: 10,
            target_shift: 6,
            ..TrainConfig::default()
        }
    }

    /// Integrator-block pretraining defaults: 10 frozen neurons, no
    /// recurrence, 50-step readout averaging, integral targets unshifted.
    /// Input weights start two orders smaller than usual so accumulated
    /// currents stay in coding range over a whole sequence.
    pub fn integrator() -> Self {
        TrainConfig {
            hidden: vec![10],
            frozen_integrators: 10,
            recurrent: false,
            output_ema_window: Some(50),
            target_shift: 0,
            init: InitConfig {
                ff_gain: 0.01,
                ..InitConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.surrogate_slope > 0.0) {
            return Err(Error::InvalidParams("surrogate_slope must be > 0".into()));
        }
        if self.seq_len < 2 {
            return Err(Error::InvalidParams("seq_len must be >= 2".into()));
        }
        if self.target_shift >= self.seq_len {
            return Err(Error::InvalidParams(format!(
                "target_shift {} must be < seq_len {}",
                self.target_shift, self.seq_len
            )));
        }
        if self.hidden.is_empty() {
            return Err(Error::InvalidParams("at least one hidden layer".into()));
        }
        if self.frozen_integrators > *self.hidden.last().unwrap() {
            return Err(Error::InvalidParams(
                "frozen_integrators exceeds last layer width".into(),
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParams("batch_size and epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub(crate) fn settings(&self) -> TrainSettings<f32> {
        TrainSettings {
            slope: self.surrogate_slope,
            mse_weight: self.mse_weight as f64,
            pearson_weight: self.pearson_weight as f64,
            output_ema: self.output_ema_window,
        }
    }
}

/// Loss-side knobs shared by the forward/backward helpers.
#[derive(Debug, Clone, Copy)]
pub struct TrainSettings<T> {
    pub slope: T,
    pub mse_weight: f64,
    pub pearson_weight: f64,
    pub output_ema: Option<usize>,
}

impl<T: Real> TrainSettings<T> {
    pub fn from_slope(slope: f32) -> Self {
        TrainSettings {
            slope: T::from_f32(slope),
            mse_weight: loss::MSE_WEIGHT,
            pearson_weight: loss::PEARSON_WEIGHT,
            output_ema: None,
        }
    }
}

/// Build a freshly initialized network for the given shape.
pub fn init_network(
    input_labels: &[String],
    output_labels: &[String],
    cfg: &TrainConfig,
    name: &str,
) -> SpikingNetwork<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_in = input_labels.len();
    let mut layers = Vec::with_capacity(cfg.hidden.len());
    let mut prev = n_in;
    for &w in &cfg.hidden {
        let mut l = LayerParams::zeros(w, prev);
        let bound = cfg.init.ff_gain / (prev as f32).sqrt();
        for t in l.tau_mem.iter_mut() {
            *t = rng.gen_range(cfg.init.tau_lo..cfg.init.tau_hi);
        }
        for t in l.tau_syn.iter_mut() {
            *t = rng.gen_range(cfg.init.tau_lo..cfg.init.tau_hi);
        }
        l.w_ff = Mat::from_fn(w, prev, |_, _| rng.gen_range(-bound..bound));
        if cfg.recurrent {
            let rb = bound * cfg.init.rec_gain;
            l.w_rec = Some(Mat::from_fn(w, w, |_, _| rng.gen_range(-rb..rb)));
        }
        layers.push(l);
        prev = w;
    }
    let db = cfg.init.decode_gain / (prev as f32).sqrt();
    let w_decode = Mat::from_fn(output_labels.len(), prev, |_, _| rng.gen_range(-db..db));

    // Seeded slow pathway: half-wave rectifier pairs in layer 0 whose rates
    // code max(0, ±channel), feeding frozen accumulate-and-fire neurons in
    // the deeper layers through non-negative one-hot weights. Keeping the
    // accumulators' drive non-negative matters: a signed accumulator's
    // membrane ratchets arbitrarily far negative during opposite-sign
    // stretches (no reset without spikes) and the neuron goes dead. The
    // readout recovers signed integrals as rate differences of the ± poles.
    if cfg.init.integrator_tail > 0 && layers.len() >= 2 {
        let mut below_tail: Vec<usize> = Vec::new();
        for (li, layer) in layers.iter_mut().enumerate() {
            let n = layer.n();
            let fan_in = layer.w_ff.cols();
            let tail: Vec<usize> = (n.saturating_sub(cfg.init.integrator_tail)..n).collect();
            for (pos, &j) in tail.iter().enumerate() {
                if li == 0 {
                    layer.tau_syn[j] = 0.5;
                    layer.tau_mem[j] = 0.5;
                    layer.theta[j] = 1.0;
                    let c = (pos / 2) % fan_in;
                    let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                    let row = layer.w_ff.row_mut(j);
                    for w in row.iter_mut() {
                        *w = 0.0;
                    }
                    row[c] = sign * 0.8;
                } else {
                    // Accumulators: leaks and threshold frozen at 1 (free
                    // leak parameters drift off 1 early in training and the
                    // integral horizon collapses); input weight sized so the
                    // running sum stays in coding range over a sequence.
                    layer.frozen[j] = true;
                    layer.tau_syn[j] = 1.0;
                    layer.tau_mem[j] = 1.0;
                    layer.theta[j] = 1.0;
                    let src = below_tail[pos % below_tail.len()];
                    let row = layer.w_ff.row_mut(j);
                    for w in row.iter_mut() {
                        *w = 0.0;
                    }
                    row[src] = cfg.init.integrator_tail_ff_scale * 0.125;
                }
                // Decouple the slow pathway from recurrent chatter at init.
                if let Some(rec) = layer.w_rec.as_mut() {
                    for k in 0..n {
                        rec.set(j, k, 0.0);
                        rec.set(k, j, 0.0);
                    }
                }
            }
            below_tail = tail;
        }
    }

    // Integrator tail of the last layer: leaks and threshold pinned to 1,
    // decoupled from recurrence at init.
    if cfg.frozen_integrators > 0 {
        let last = layers.last_mut().unwrap();
        let n = last.n();
        for j in n - cfg.frozen_integrators..n {
            last.frozen[j] = true;
            last.tau_mem[j] = 1.0;
            last.tau_syn[j] = 1.0;
            last.theta[j] = 1.0;
            if let Some(rec) = last.w_rec.as_mut() {
                for k in 0..n {
                    rec.set(j, k, 0.0);
                    rec.set(k, j, 0.0);
                }
            }
        }
    }

    SpikingNetwork {
        input_labels: input_labels.to_vec(),
        output_labels: output_labels.to_vec(),
        input_norm: InputNorm::identity(n_in),
        layers,
        w_decode,
        meta: NetworkMeta {
            name: name.to_string(),
            provenance: Default::default(),
        },
    }
}

/// One training sequence: normalized inputs and (already shifted) targets.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub inputs: &'a Mat<f32>,
    pub targets: &'a Mat<f32>,
}

/// Per-epoch training metrics, written to the metrics CSV by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub total: f64,
    pub mse: f64,
    pub pearson_term: f64,
    pub grad_norm: f64,
    pub wall_time_s: f64,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub net: SpikingNetwork<f32>,
    pub metrics: Vec<EpochMetrics>,
    pub held_out: Option<LossBreakdown>,
}

/// Adaptive-moment optimizer state with the parameter constraints applied
/// after every step (leaks clamped to [tau_min, tau_max], thresholds floored,
/// frozen integrator parameters re-pinned to exactly 1).
pub struct Adam {
    m: Grads<f32>,
    v: Grads<f32>,
    step: u64,
}

impl Adam {
    pub fn new(net: &SpikingNetwork<f32>) -> Self {
        Adam {
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
            step: 0,
        }
    }

    pub fn step(&mut self, net: &mut SpikingNetwork<f32>, grads: &Grads<f32>, cfg: &TrainConfig) {
        self.step += 1;
        let b1 = cfg.adam_beta1;
        let b2 = cfg.adam_beta2;
        let corr1 = 1.0 - b1.powi(self.step as i32);
        let corr2 = 1.0 - b2.powi(self.step as i32);
        let lr = cfg.learning_rate;
        let eps = cfg.adam_eps;
        let mut update = |p: &mut f32, g: f32, m: &mut f32, v: &mut f32| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mh = *m / corr1;
            let vh = *v / corr2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        for (idx, layer) in net.layers.iter_mut().enumerate() {
            let g = &grads.layers[idx];
            let m = &mut self.m.layers[idx];
            let v = &mut self.v.layers[idx];
            zip_apply(layer.w_ff.data_mut(), g.w_ff.data(), m.w_ff.data_mut(), v.w_ff.data_mut(), &mut update);
            if let (Some(p), Some(gg)) = (layer.w_rec.as_mut(), g.w_rec.as_ref()) {
                zip_apply(
                    p.data_mut(),
                    gg.data(),
                    m.w_rec.as_mut().unwrap().data_mut(),
                    v.w_rec.as_mut().unwrap().data_mut(),
                    &mut update,
                );
            }
            if let (Some(p), Some(gg)) = (layer.w_in.as_mut(), g.w_in.as_ref()) {
                zip_apply(
                    p.data_mut(),
                    gg.data(),
                    m.w_in.as_mut().unwrap().data_mut(),
                    v.w_in.as_mut().unwrap().data_mut(),
                    &mut update,
                );
            }
            zip_apply(&mut layer.tau_mem, &g.tau_mem, &mut m.tau_mem, &mut v.tau_mem, &mut update);
            zip_apply(&mut layer.tau_syn, &g.tau_syn, &mut m.tau_syn, &mut v.tau_syn, &mut update);
            zip_apply(&mut layer.theta, &g.theta, &mut m.theta, &mut v.theta, &mut update);

            for j in 0..layer.n() {
                if layer.frozen[j] {
                    layer.tau_mem[j] = 1.0;
                    layer.tau_syn[j] = 1.0;
                    layer.theta[j] = 1.0;
                } else {
                    layer.tau_mem[j] = layer.tau_mem[j].clamp(cfg.tau_min, cfg.tau_max);
                    layer.tau_syn[j] = layer.tau_syn[j].clamp(cfg.tau_min, cfg.tau_max);
                    layer.theta[j] = layer.theta[j].max(cfg.theta_min);
                }
            }
        }
        zip_apply(
            net.w_decode.data_mut(),
            grads.w_decode.data(),
            self.m.w_decode.data_mut(),
            self.v.w_decode.data_mut(),
            &mut update,
        );
    }
}

fn zip_apply(
    p: &mut [f32],
    g: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    f: &mut impl FnMut(&mut f32, f32, &mut f32, &mut f32),
) {
    for i in 0..p.len() {
        f(&mut p[i], g[i], &mut m[i], &mut v[i]);
    }
}

/// Train `net` in place. Gradients are computed per sequence (in parallel)
/// and reduced in sequence order, so results are identical for any thread
/// count.
pub fn train(
    net: &mut SpikingNetwork<f32>,
    samples: &[Sample<'_>],
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidSequence("no training sequences".into()));
    }
    let settings = cfg.settings();
    let mut adam = Adam::new(net);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);

        let mut epoch_bd = LossBreakdown::zero(net.n_outputs());
        let mut seen = 0usize;
        let mut grad_norm_sum = 0.0f64;
        let mut batches = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            let results: Vec<(usize, Result<bptt::SequenceResult<f32>>)> = chunk
                .par_iter()
                .map(|&i| {
                    let s = samples[i];
                    (
                        i,
                        bptt::loss_and_grads(net, s.inputs, s.targets, &settings, SpikeMode::Binary),
                    )
                })
                .collect();

            let mut acc = Grads::zeros_like(net);
            let w = 1.0 / chunk.len() as f32;
            for (i, r) in results {
                let r = r.map_err(|e| {
                    Error::Divergence(format!("epoch {epoch}, sequence {i}: {e}"))
                })?;
                seen += 1;
                epoch_bd.accumulate(&r.breakdown, seen);
                acc.add_scaled(w, &r.grads);
            }
            let gn = acc.norm();
            if !gn.is_finite() {
                return Err(Error::Divergence(format!(
                    "epoch {epoch}: non-finite gradient over sequences {:?}",
                    chunk
                )));
            }
            grad_norm_sum += gn;
            batches += 1;
            adam.step(net, &acc, cfg);
        }

        metrics.push(EpochMetrics {
            epoch,
            total: epoch_bd.total,
            mse: epoch_bd.mse,
            pearson_term: epoch_bd.pearson_term,
            grad_norm: grad_norm_sum / batches.max(1) as f64,
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(metrics)
}

/// Mean loss of `net` over a sample set, using the training loss path.
pub fn mean_loss(
    net: &SpikingNetwork<f32>,
    samples: &[Sample<'_>],
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let settings = cfg.settings();
    let mut bd = LossBreakdown::zero(net.n_outputs());
    for (k, s) in samples.iter().enumerate() {
        let one = evaluate_loss(net, s.inputs, s.targets, &settings)?;
        bd.accumulate(&one, k + 1);
    }
    Ok(bd)
}

fn train_with_diag(
    net: &mut SpikingNetwork<f32>,
    train_samples: &[Sample<'_>],
    val_samples: &[Sample<'_>],
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    let metrics = train(net, train_samples, cfg).map_err(|e| match e {
        Error::Divergence(msg) => Error::Divergence(format!(
            "{msg}; seed={}; config={}",
            cfg.seed,
            serde_json::to_string(cfg).unwrap_or_default()
        )),
        other => other,
    })?;
    let held_out = if val_samples.is_empty() {
        None
    } else {
        Some(mean_loss(net, val_samples, cfg)?)
    };
    Ok(TrainRun {
        net: net.clone(),
        metrics,
        held_out,
    })
}

/// Train the attitude-estimation sub-network: IMU channels in, filter
/// attitude out. Inputs must be exactly the 6 IMU channels; command channels
/// are structurally excluded.
pub fn train_estimator(
    input_labels: &[String],
    output_labels: &[String],
    train_samples: &[Sample<'_>],
    val_samples: &[Sample<'_>],
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    if input_labels.len() != 6 {
        return Err(Error::dim("estimator input channels", 6, input_labels.len()));
    }
    let mut net = init_network(input_labels, output_labels, cfg, "estimator");
    train_with_diag(&mut net, train_samples, val_samples, cfg)
}

/// Pretrain the integrator block: frozen accumulate-and-fire neurons whose
/// smoothed decoded output tracks the expert's integral terms.
pub fn pretrain_integrators(
    input_labels: &[String],
    output_labels: &[String],
    train_samples: &[Sample<'_>],
    val_samples: &[Sample<'_>],
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    if cfg.frozen_integrators != cfg.hidden.iter().sum::<usize>() {
        return Err(Error::InvalidParams(
            "integrator pretraining expects every neuron frozen".into(),
        ));
    }
    let mut net = init_network(input_labels, output_labels, cfg, "integrator");
    train_with_diag(&mut net, train_samples, val_samples, cfg)
}

/// Train the attitude-control sub-network. When a pretrained integrator block
/// is supplied its input/output weights seed the frozen tail of the control
/// layer (and remain trainable; only leaks/threshold stay fixed).
pub fn train_controller(
    input_labels: &[String],
    output_labels: &[String],
    train_samples: &[Sample<'_>],
    val_samples: &[Sample<'_>],
    cfg: &TrainConfig,
    integrator_block: Option<&SpikingNetwork<f32>>,
) -> Result<TrainRun> {
    let mut net = init_network(input_labels, output_labels, cfg, "controller");
    if let Some(block) = integrator_block {
        let k = cfg.frozen_integrators;
        let last = net.layers.len() - 1;
        let n = net.layers[last].n();
        let bl = &block.layers[0];
        if bl.n() != k {
            return Err(Error::dim("integrator block width", k, bl.n()));
        }
        if bl.w_ff.cols() != net.layers[last].w_ff.cols() {
            return Err(Error::dim(
                "integrator block input width",
                net.layers[last].w_ff.cols(),
                bl.w_ff.cols(),
            ));
        }
        for (bj, j) in (n - k..n).enumerate() {
            net.layers[last]
                .w_ff
                .row_mut(j)
                .copy_from_slice(bl.w_ff.row(bj));
            for c in 0..net.w_decode.rows() {
                net.w_decode.set(c, j, block.w_decode.get(c, bj));
            }
        }
    }
    train_with_diag(&mut net, train_samples, val_samples, cfg)
}

/// Train the integrator block twice with identical seeds and schedule: once
/// with fixed leak/threshold parameters (the proposed approach) and once with
/// them free. Returns both runs for loss-curve comparison.
pub fn integrator_comparison(
    input_labels: &[String],
    output_labels: &[String],
    train_samples: &[Sample<'_>],
    cfg: &TrainConfig,
) -> Result<(TrainRun, TrainRun)> {
    let fixed = pretrain_integrators(input_labels, output_labels, train_samples, &[], cfg)?;
    let mut free_cfg = cfg.clone();
    free_cfg.frozen_integrators = 0;
    let mut net = init_network(input_labels, output_labels, &free_cfg, "integrator-free");
    let free = train_with_diag(&mut net, train_samples, &[], &free_cfg)?;
    Ok((fixed, free))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_values() {
        assert_eq!(surrogate_grad(0.0f64, 7.0), 1.0);
        assert_eq!(surrogate_grad(0.0f64, 123.0), 1.0);
        assert!((surrogate_grad(1.0f64, 7.0) - 0.02).abs() < 1e-15);
        for x in [0.01f64, 0.3, 1.7, 42.0] {
            assert_eq!(surrogate_grad(x, 7.0), surrogate_grad(-x, 7.0));
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.surrogate_slope = 0.0;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig::default();
        cfg.seq_len = 1;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig::default();
        cfg.target_shift = cfg.seq_len;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn paper_constants_in_defaults() {
        let est = TrainConfig::estimator();
        assert_eq!(est.surrogate_slope, 7.0);
        assert_eq!(est.seq_len, 2000);
        assert_eq!(est.hidden, vec![150, 150]);
        assert_eq!(est.mse_weight, 1.0);
        assert_eq!(est.pearson_weight, 0.5);
        let ctl = TrainConfig::controller();
        assert_eq!(ctl.hidden, vec![130]);
        assert_eq!(ctl.frozen_integrators, 10);
        assert_eq!(ctl.target_shift, 6);
        let int = TrainConfig::integrator();
        assert_eq!(int.hidden, vec![10]);
        assert_eq!(int.output_ema_window, Some(50));
    }

    /// After optimizer steps: frozen neurons keep taus = θ = 1 exactly, free
    /// parameters respect the clamps.
    #[test]
    fn constraints_preserved_across_steps() {
        let mut cfg = TrainConfig::controller();
        cfg.hidden = vec![12];
        cfg.frozen_integrators = 3;
        cfg.epochs = 3;
        cfg.batch_size = 2;
        cfg.seq_len = 30;
        cfg.learning_rate = 0.05; // exaggerate movement to stress the clamps
        let in_labels: Vec<String> = (0..4).map(|i| format!("i{i}")).collect();
        let out_labels: Vec<String> = (0..2).map(|i| format!("o{i}")).collect();
        let mut net = init_network(&in_labels, &out_labels, &cfg, "t");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inputs: Vec<Mat<f32>> = (0..6)
            .map(|_| Mat::from_fn(30, 4, |_, _| rng.gen_range(-1.0..1.0f32)))
            .collect();
        let targets: Vec<Mat<f32>> = (0..6)
            .map(|k| Mat::from_fn(30, 2, |t, c| ((t + k) as f32 * 0.3 + c as f32).sin()))
            .collect();
        let samples: Vec<Sample> = inputs
            .iter()
            .zip(targets.iter())
            .map(|(i, t)| Sample { inputs: i, targets: t })
            .collect();
        train(&mut net, &samples, &cfg).unwrap();
        let l = &net.layers[0];
        for j in 0..12 {
            if l.frozen[j] {
                assert_eq!(l.tau_mem[j], 1.0);
                assert_eq!(l.tau_syn[j], 1.0);
                assert_eq!(l.theta[j], 1.0);
            } else {
                assert!(l.tau_mem[j] >= 0.0 && l.tau_mem[j] <= 1.0);
                assert!(l.tau_syn[j] >= 0.0 && l.tau_syn[j] <= 1.0);
                assert!(l.theta[j] >= cfg.theta_min);
            }
        }
        net.validate().unwrap();
    }

    /// Same seed, same data, same config → identical trained parameters.
    #[test]
    fn training_is_reproducible() {
        let mut cfg = TrainConfig::default();
        cfg.hidden = vec![8];
        cfg.epochs = 2;
        cfg.batch_size = 3;
        cfg.seq_len = 25;
        let in_labels: Vec<String> = (0..3).map(|i| format!("i{i}")).collect();
        let out_labels = vec!["o".to_string()];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let inputs: Vec<Mat<f32>> = (0..5)
            .map(|_| Mat::from_fn(25, 3, |_, _| rng.gen_range(-1.0..1.0f32)))
            .collect();
        let targets: Vec<Mat<f32>> = (0..5)
            .map(|k| Mat::from_fn(25, 1, |t, _| ((t * (k + 1)) as f32 * 0.1).cos()))
            .collect();
        let samples: Vec<Sample> = inputs
            .iter()
            .zip(targets.iter())
            .map(|(i, t)| Sample { inputs: i, targets: t })
            .collect();
        let mut a = init_network(&in_labels, &out_labels, &cfg, "a");
        let mut b = init_network(&in_labels, &out_labels, &cfg, "a");
        train(&mut a, &samples, &cfg).unwrap();
        train(&mut b, &samples, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
