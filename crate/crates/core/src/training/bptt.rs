//! Backpropagation-through-time through the unrolled CUBA-LIF dynamics.
//!
//! The forward pass records, per layer and step, the pre-reset membrane
//! potential, the spike vector and the post-update current. The backward pass
//! walks layers top-down and time in reverse, replacing the Heaviside
//! derivative with the scaled-arctangent surrogate. Run with
//! [`SpikeMode::Smoothed`] the same backward code is the exact gradient of the
//! surrogate-smoothed forward, which is what the finite-difference oracle
//! checks.

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, Mat, Real};
use crate::snn::{LayerState, SpikeMode, SpikingNetwork};
use crate::training::{surrogate_grad, TrainSettings};

/// Recorded quantities for one layer over a whole sequence.
struct LayerTape<T> {
    /// Pre-reset membrane potential per step (T × n, row-major by step).
    v_pre: Mat<T>,
    /// Spike outputs per step.
    s: Mat<T>,
    /// Post-update synaptic current per step.
    i_post: Mat<T>,
    /// Fired index lists per step (binary mode).
    fired: Vec<Vec<usize>>,
}

/// Gradients (or any parameter-shaped buffer) for one layer.
#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub w_ff: Mat<T>,
    pub w_rec: Option<Mat<T>>,
    pub w_in: Option<Mat<T>>,
    pub tau_mem: Vec<T>,
    pub tau_syn: Vec<T>,
    pub theta: Vec<T>,
}

/// Parameter-shaped buffer mirroring every trainable tensor of a network.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    pub layers: Vec<LayerGrads<T>>,
    pub w_decode: Mat<T>,
}

impl<T: Real> Grads<T> {
    pub fn zeros_like(net: &SpikingNetwork<T>) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| LayerGrads {
                w_ff: Mat::zeros(l.w_ff.rows(), l.w_ff.cols()),
                w_rec: l.w_rec.as_ref().map(|m| Mat::zeros(m.rows(), m.cols())),
                w_in: l.w_in.as_ref().map(|m| Mat::zeros(m.rows(), m.cols())),
                tau_mem: vec![T::zero(); l.n()],
                tau_syn: vec![T::zero(); l.n()],
                theta: vec![T::zero(); l.n()],
            })
            .collect();
        Grads {
            layers,
            w_decode: Mat::zeros(net.w_decode.rows(), net.w_decode.cols()),
        }
    }

    /// `self += s·other`
    pub fn add_scaled(&mut self, s: T, other: &Grads<T>) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            a.w_ff.add_scaled(s, &b.w_ff);
            if let (Some(ar), Some(br)) = (a.w_rec.as_mut(), b.w_rec.as_ref()) {
                ar.add_scaled(s, br);
            }
            if let (Some(ai), Some(bi)) = (a.w_in.as_mut(), b.w_in.as_ref()) {
                ai.add_scaled(s, bi);
            }
            for (x, y) in a.tau_mem.iter_mut().zip(b.tau_mem.iter()) {
                *x = *x + s * *y;
            }
            for (x, y) in a.tau_syn.iter_mut().zip(b.tau_syn.iter()) {
                *x = *x + s * *y;
            }
            for (x, y) in a.theta.iter_mut().zip(b.theta.iter()) {
                *x = *x + s * *y;
            }
        }
        self.w_decode.add_scaled(s, &other.w_decode);
    }

    /// Global L2 norm over every entry.
    pub fn norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for l in &self.layers {
            acc += norm_sq(l.w_ff.data()).as_f64();
            if let Some(r) = &l.w_rec {
                acc += norm_sq(r.data()).as_f64();
            }
            if let Some(i) = &l.w_in {
                acc += norm_sq(i.data()).as_f64();
            }
            acc += norm_sq(&l.tau_mem).as_f64();
            acc += norm_sq(&l.tau_syn).as_f64();
            acc += norm_sq(&l.theta).as_f64();
        }
        acc += norm_sq(self.w_decode.data()).as_f64();
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.norm().is_finite()
    }
}

/// Forward pass recording the tape. The recorded dynamics are identical to
/// [`crate::snn::network_step_normed`]; a unit test pins that equivalence.
fn forward_tape<T: Real>(
    net: &SpikingNetwork<T>,
    inputs: &Mat<T>,
    mode: SpikeMode<T>,
) -> (Vec<LayerTape<T>>, Mat<T>) {
    let steps = inputs.rows();
    let n_layers = net.layers.len();
    let mut tapes: Vec<LayerTape<T>> = net
        .layers
        .iter()
        .map(|l| LayerTape {
            v_pre: Mat::zeros(steps, l.n()),
            s: Mat::zeros(steps, l.n()),
            i_post: Mat::zeros(steps, l.n()),
            fired: vec![Vec::new(); steps],
        })
        .collect();
    let mut states: Vec<LayerState<T>> = net.reset_states();
    let mut outputs = Mat::zeros(steps, net.n_outputs());
    let mut drive: Vec<T> = Vec::new();

    for t in 0..steps {
        let u = inputs.row(t);
        for idx in 0..n_layers {
            let layer = &net.layers[idx];
            let n = layer.n();
            drive.clear();
            drive.resize(n, T::zero());
            {
                let (before, rest) = states.split_at_mut(idx);
                let state = &mut rest[0];
                // Assemble drive: feedforward, optional input tap, recurrent
                // from own previous-step spikes.
                if idx == 0 {
                    layer.w_ff.mul_vec_add(u, &mut drive);
                } else {
                    let p = &before[idx - 1];
                    match mode {
                        SpikeMode::Binary => layer.w_ff.mul_spikes_add(&p.fired, &mut drive),
                        SpikeMode::Smoothed { .. } => layer.w_ff.mul_vec_add(&p.s, &mut drive),
                    }
                }
                if let Some(w_in) = &layer.w_in {
                    w_in.mul_vec_add(u, &mut drive);
                }
                if let Some(w_rec) = &layer.w_rec {
                    match mode {
                        SpikeMode::Binary => w_rec.mul_spikes_add(&state.fired, &mut drive),
                        SpikeMode::Smoothed { .. } => w_rec.mul_vec_add(&state.s, &mut drive),
                    }
                }
                let tape = &mut tapes[idx];
                state.fired.clear();
                for j in 0..n {
                    let i_old = state.i_syn[j];
                    let i_new = layer.tau_syn[j] * i_old + drive[j];
                    let v_pre = layer.tau_mem[j] * state.v[j] + i_old;
                    tape.v_pre.set(t, j, v_pre);
                    match mode {
                        SpikeMode::Binary => {
                            if v_pre > layer.theta[j] {
                                state.s[j] = T::one();
                                state.v[j] = T::zero();
                                state.fired.push(j);
                            } else {
                                state.s[j] = T::zero();
                                state.v[j] = v_pre;
                            }
                        }
                        SpikeMode::Smoothed { slope } => {
                            let s = crate::training::surrogate_primitive(
                                v_pre - layer.theta[j],
                                slope,
                            );
                            state.s[j] = s;
                            state.v[j] = v_pre * (T::one() - s);
                        }
                    }
                    state.i_syn[j] = i_new;
                    tape.s.set(t, j, state.s[j]);
                    tape.i_post.set(t, j, i_new);
                }
                tape.fired[t] = state.fired.clone();
            }
        }
        let last = states.last().unwrap();
        let out = outputs.row_mut(t);
        match mode {
            SpikeMode::Binary => net.w_decode.mul_spikes_add(&last.fired, out),
            SpikeMode::Smoothed { .. } => net.w_decode.mul_vec_add(&last.s, out),
        }
    }
    (tapes, outputs)
}

/// Raw (pre-smoothing) network outputs plus the loss gradient propagated back
/// to the parameters.
pub struct SequenceGrads<T> {
    pub grads: Grads<T>,
    /// Outputs the loss was evaluated on (after the optional readout EMA).
    pub pred: Mat<T>,
}

/// Run one sequence forward, evaluate the loss gradient on the (optionally
/// EMA-filtered) outputs, and backpropagate to every parameter.
///
/// `g_pred` is the loss gradient with respect to `pred`; the caller computes
/// it so loss weighting stays in one place.
fn backprop_sequence<T: Real>(
    net: &SpikingNetwork<T>,
    inputs: &Mat<T>,
    g_pred: &Mat<T>,
    pred_was_ema: Option<usize>,
    tapes: Vec<LayerTape<T>>,
    slope: T,
    mode: SpikeMode<T>,
) -> Grads<T> {
    let binary = matches!(mode, SpikeMode::Binary);
    let steps = inputs.rows();
    let n_layers = net.layers.len();
    let mut grads = Grads::zeros_like(net);

    // Backprop through the readout EMA (if any) to raw per-step outputs.
    let g_y = match pred_was_ema {
        None => g_pred.clone(),
        Some(window) => {
            let a = T::one() / T::from_usize(window);
            let keep = T::one() - a;
            let mut g = Mat::zeros(steps, net.n_outputs());
            let mut carry = vec![T::zero(); net.n_outputs()];
            for t in (0..steps).rev() {
                for c in 0..net.n_outputs() {
                    let acc = g_pred.get(t, c) + keep * carry[c];
                    carry[c] = acc;
                    g.set(t, c, a * acc);
                }
            }
            g
        }
    };

    // Credit arriving at each layer's spike outputs from above (decode for the
    // top layer, feedforward credit for the ones below).
    let top = n_layers - 1;
    let mut ext_credit = Mat::zeros(steps, net.layers[top].n());
    {
        let tape = &tapes[top];
        for t in 0..steps {
            net.w_decode.tr_mul_vec_add(g_y.row(t), ext_credit.row_mut(t));
            grads.w_decode.add_outer(g_y.row(t), tape.s.row(t));
        }
    }

    for idx in (0..n_layers).rev() {
        let layer = &net.layers[idx];
        let tape = &tapes[idx];
        let n = layer.n();
        let mut lower_credit = if idx > 0 {
            Some(Mat::zeros(steps, net.layers[idx - 1].n()))
        } else {
            None
        };

        let lg = &mut grads.layers[idx];
        let mut gvpre_next = vec![T::zero(); n];
        let mut gi_next = vec![T::zero(); n];
        let mut g_s = vec![T::zero(); n];
        let mut gvpre = vec![T::zero(); n];
        let mut g_i = vec![T::zero(); n];

        for t in (0..steps).rev() {
            // ∂J/∂s(t): external credit, recurrent use at t+1, and the reset
            // factor in v_post(t) = v_pre(t)·(1 − s(t)).
            g_s.copy_from_slice(ext_credit.row(t));
            if let Some(w_rec) = &layer.w_rec {
                w_rec.tr_mul_vec_add(&gi_next, &mut g_s);
            }
            for j in 0..n {
                let gv_post = layer.tau_mem[j] * gvpre_next[j];
                g_s[j] = g_s[j] - tape.v_pre.get(t, j) * gv_post;
                let sur = surrogate_grad(tape.v_pre.get(t, j) - layer.theta[j], slope);
                gvpre[j] = g_s[j] * sur + gv_post * (T::one() - tape.s.get(t, j));
                g_i[j] = gvpre_next[j] + layer.tau_syn[j] * gi_next[j];
                if !layer.frozen[j] {
                    lg.theta[j] = lg.theta[j] - g_s[j] * sur;
                    if t > 0 {
                        let s_prev = tape.s.get(t - 1, j);
                        let v_post_prev = tape.v_pre.get(t - 1, j) * (T::one() - s_prev);
                        lg.tau_mem[j] = lg.tau_mem[j] + gvpre[j] * v_post_prev;
                        lg.tau_syn[j] = lg.tau_syn[j] + g_i[j] * tape.i_post.get(t - 1, j);
                    }
                }
            }
            if let (Some(gw_rec), Some(_)) = (lg.w_rec.as_mut(), layer.w_rec.as_ref()) {
                if t > 0 {
                    if binary {
                        gw_rec.add_outer_spikes(&g_i, &tape.fired[t - 1]);
                    } else {
                        gw_rec.add_outer(&g_i, tape.s.row(t - 1));
                    }
                }
            }
            if idx == 0 {
                lg.w_ff.add_outer(&g_i, inputs.row(t));
            } else {
                let below = &tapes[idx - 1];
                if binary {
                    lg.w_ff.add_outer_spikes(&g_i, &below.fired[t]);
                } else {
                    lg.w_ff.add_outer(&g_i, below.s.row(t));
                }
                layer
                    .w_ff
                    .tr_mul_vec_add(&g_i, lower_credit.as_mut().unwrap().row_mut(t));
            }
            if let (Some(gw_in), Some(_)) = (lg.w_in.as_mut(), layer.w_in.as_ref()) {
                gw_in.add_outer(&g_i, inputs.row(t));
            }
            std::mem::swap(&mut gvpre_next, &mut gvpre);
            std::mem::swap(&mut gi_next, &mut g_i);
        }

        if let Some(lc) = lower_credit {
            ext_credit = lc;
        }
    }
    grads
}

/// Outcome of a full forward/backward pass on one sequence.
pub struct SequenceResult<T> {
    pub grads: Grads<T>,
    pub breakdown: crate::training::loss::LossBreakdown,
}

/// Compute Eq.-5 loss and exact parameter gradients for one sequence under
/// the given spike mode.
pub fn loss_and_grads<T: Real>(
    net: &SpikingNetwork<T>,
    inputs: &Mat<T>,
    targets: &Mat<T>,
    settings: &TrainSettings<T>,
    mode: SpikeMode<T>,
) -> Result<SequenceResult<T>> {
    let (tapes, raw_outputs) = forward_tape(net, inputs, mode);
    let pred = match settings.output_ema {
        None => raw_outputs,
        Some(window) => ema_filter(&raw_outputs, window),
    };
    let mut g_pred = Mat::zeros(pred.rows(), pred.cols());
    let breakdown = crate::training::loss::loss_weighted(
        &pred,
        targets,
        settings.mse_weight,
        settings.pearson_weight,
        Some(&mut g_pred),
    )?;
    if !breakdown.total.is_finite() {
        let step = first_nonfinite_step(&pred);
        return Err(Error::Divergence(format!(
            "non-finite loss (first bad output at step {step:?})"
        )));
    }
    let grads = backprop_sequence(
        net,
        inputs,
        &g_pred,
        settings.output_ema,
        tapes,
        settings.slope,
        mode,
    );
    Ok(SequenceResult { grads, breakdown })
}

/// Exponential moving average along time with a `window`-step horizon
/// (smoothing factor 1/window). Used as the integrator readout.
pub fn ema_filter<T: Real>(series: &Mat<T>, window: usize) -> Mat<T> {
    let a = T::one() / T::from_usize(window.max(1));
    let keep = T::one() - a;
    let mut out = Mat::zeros(series.rows(), series.cols());
    let mut acc = vec![T::zero(); series.cols()];
    for t in 0..series.rows() {
        for c in 0..series.cols() {
            acc[c] = keep * acc[c] + a * series.get(t, c);
            out.set(t, c, acc[c]);
        }
    }
    out
}

fn first_nonfinite_step<T: Real>(m: &Mat<T>) -> Option<usize> {
    (0..m.rows()).find(|&t| m.row(t).iter().any(|x| !x.is_finite()))
}

/// Forward-only evaluation matching the training path (same tape forward,
/// same optional EMA), for held-out loss reporting.
pub fn evaluate_loss<T: Real>(
    net: &SpikingNetwork<T>,
    inputs: &Mat<T>,
    targets: &Mat<T>,
    settings: &TrainSettings<T>,
) -> Result<crate::training::loss::LossBreakdown> {
    let rec = crate::snn::run_sequence_normed(net, inputs);
    let pred = match settings.output_ema {
        None => rec.outputs,
        Some(window) => ema_filter(&rec.outputs, window),
    };
    crate::training::loss::loss_weighted(
        &pred,
        targets,
        settings.mse_weight,
        settings.pearson_weight,
        None,
    )
}
