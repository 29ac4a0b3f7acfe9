//! Finite-difference gradient verification.
//!
//! This module is the independent oracle for the BPTT implementation: it
//! re-implements the surrogate-smoothed forward pass and the loss with plain
//! nested loops (no shared kernels with the training path) and differentiates
//! that scalar function by central differences. Everything runs in f64.

use crate::linalg::Mat;
use crate::snn::SpikingNetwork;
use crate::training::bptt::Grads;
use crate::training::TrainSettings;

/// Independent evaluation of the surrogate-smoothed sequence loss.
///
/// Dynamics per step: i' = τ_syn·i + drive, v_pre = τ_mem·v + i(old),
/// s = atan(slope·(v_pre − θ))/slope, v = v_pre·(1 − s); output W_dec·s of the
/// last layer, optional EMA, then MSE + weighted Pearson penalty.
pub fn reference_smoothed_loss(
    net: &SpikingNetwork<f64>,
    inputs: &Mat<f64>,
    targets: &Mat<f64>,
    settings: &TrainSettings<f64>,
) -> f64 {
    let steps = inputs.rows();
    let n_out = net.n_outputs();
    let mut v: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.n()]).collect();
    let mut i_syn: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.n()]).collect();
    let mut s: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.n()]).collect();
    let mut outputs = vec![vec![0.0f64; n_out]; steps];

    for t in 0..steps {
        let u = inputs.row(t);
        for (li, layer) in net.layers.iter().enumerate() {
            let n = layer.n();
            let mut drive = vec![0.0f64; n];
            for j in 0..n {
                if li == 0 {
                    for (k, &uk) in u.iter().enumerate() {
                        drive[j] += layer.w_ff.get(j, k) * uk;
                    }
                } else {
                    let prev = s[li - 1].clone();
                    for (k, &sk) in prev.iter().enumerate() {
                        drive[j] += layer.w_ff.get(j, k) * sk;
                    }
                }
                if let Some(w_in) = &layer.w_in {
                    for (k, &uk) in u.iter().enumerate() {
                        drive[j] += w_in.get(j, k) * uk;
                    }
                }
                if let Some(w_rec) = &layer.w_rec {
                    for k in 0..n {
                        drive[j] += w_rec.get(j, k) * s[li][k];
                    }
                }
            }
            for j in 0..n {
                let i_old = i_syn[li][j];
                let v_pre = layer.tau_mem[j] * v[li][j] + i_old;
                i_syn[li][j] = layer.tau_syn[j] * i_old + drive[j];
                let slope = settings.slope;
                let spk = (slope * (v_pre - layer.theta[j])).atan() / slope;
                s[li][j] = spk;
                v[li][j] = v_pre * (1.0 - spk);
            }
        }
        let last = s.last().unwrap();
        for c in 0..n_out {
            let mut acc = 0.0;
            for (j, &sj) in last.iter().enumerate() {
                acc += net.w_decode.get(c, j) * sj;
            }
            outputs[t][c] = acc;
        }
    }

    if let Some(window) = settings.output_ema {
        let a = 1.0 / window as f64;
        let mut acc = vec![0.0f64; n_out];
        for row in outputs.iter_mut() {
            for c in 0..n_out {
                acc[c] = (1.0 - a) * acc[c] + a * row[c];
                row[c] = acc[c];
            }
        }
    }

    // MSE + weighted (1 - mean per-channel Pearson).
    let norm = (steps * n_out) as f64;
    let mut sq = 0.0;
    let mut rho_sum = 0.0;
    for c in 0..n_out {
        let mp = outputs.iter().map(|r| r[c]).sum::<f64>() / steps as f64;
        let mt = (0..steps).map(|t| targets.get(t, c)).sum::<f64>() / steps as f64;
        let (mut cov, mut vp, mut vt) = (0.0, 0.0, 0.0);
        for t in 0..steps {
            let dp = outputs[t][c] - mp;
            let dt = targets.get(t, c) - mt;
            cov += dp * dt;
            vp += dp * dp;
            vt += dt * dt;
            let e = outputs[t][c] - targets.get(t, c);
            sq += e * e;
        }
        rho_sum += if vp > 0.0 && vt > 0.0 {
            cov / (vp * vt).sqrt()
        } else {
            0.0
        };
    }
    settings.mse_weight * sq / norm
        + settings.pearson_weight * (1.0 - rho_sum / n_out as f64)
}

/// Addresses of every free (non-frozen) scalar parameter in a network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    Ff(usize, usize, usize),
    Rec(usize, usize, usize),
    In(usize, usize, usize),
    TauMem(usize, usize),
    TauSyn(usize, usize),
    Theta(usize, usize),
    Decode(usize, usize),
}

pub fn free_slots(net: &SpikingNetwork<f64>) -> Vec<Slot> {
    let mut slots = Vec::new();
    for (li, l) in net.layers.iter().enumerate() {
        for r in 0..l.w_ff.rows() {
            for c in 0..l.w_ff.cols() {
                slots.push(Slot::Ff(li, r, c));
            }
        }
        if let Some(m) = &l.w_rec {
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    slots.push(Slot::Rec(li, r, c));
                }
            }
        }
        if let Some(m) = &l.w_in {
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    slots.push(Slot::In(li, r, c));
                }
            }
        }
        for j in 0..l.n() {
            if !l.frozen[j] {
                slots.push(Slot::TauMem(li, j));
                slots.push(Slot::TauSyn(li, j));
                slots.push(Slot::Theta(li, j));
            }
        }
    }
    for r in 0..net.w_decode.rows() {
        for c in 0..net.w_decode.cols() {
            slots.push(Slot::Decode(r, c));
        }
    }
    slots
}

pub fn get_slot(net: &SpikingNetwork<f64>, s: Slot) -> f64 {
    match s {
        Slot::Ff(l, r, c) => net.layers[l].w_ff.get(r, c),
        Slot::Rec(l, r, c) => net.layers[l].w_rec.as_ref().unwrap().get(r, c),
        Slot::In(l, r, c) => net.layers[l].w_in.as_ref().unwrap().get(r, c),
        Slot::TauMem(l, j) => net.layers[l].tau_mem[j],
        Slot::TauSyn(l, j) => net.layers[l].tau_syn[j],
        Slot::Theta(l, j) => net.layers[l].theta[j],
        Slot::Decode(r, c) => net.w_decode.get(r, c),
    }
}

pub fn set_slot(net: &mut SpikingNetwork<f64>, s: Slot, v: f64) {
    match s {
        Slot::Ff(l, r, c) => net.layers[l].w_ff.set(r, c, v),
        Slot::Rec(l, r, c) => net.layers[l].w_rec.as_mut().unwrap().set(r, c, v),
        Slot::In(l, r, c) => net.layers[l].w_in.as_mut().unwrap().set(r, c, v),
        Slot::TauMem(l, j) => net.layers[l].tau_mem[j] = v,
        Slot::TauSyn(l, j) => net.layers[l].tau_syn[j] = v,
        Slot::Theta(l, j) => net.layers[l].theta[j] = v,
        Slot::Decode(r, c) => net.w_decode.set(r, c, v),
    }
}

pub fn grad_slot(g: &Grads<f64>, s: Slot) -> f64 {
    match s {
        Slot::Ff(l, r, c) => g.layers[l].w_ff.get(r, c),
        Slot::Rec(l, r, c) => g.layers[l].w_rec.as_ref().unwrap().get(r, c),
        Slot::In(l, r, c) => g.layers[l].w_in.as_ref().unwrap().get(r, c),
        Slot::TauMem(l, j) => g.layers[l].tau_mem[j],
        Slot::TauSyn(l, j) => g.layers[l].tau_syn[j],
        Slot::Theta(l, j) => g.layers[l].theta[j],
        Slot::Decode(r, c) => g.w_decode.get(r, c),
    }
}

/// Central finite difference of the reference loss for one parameter.
pub fn central_difference(
    net: &SpikingNetwork<f64>,
    inputs: &Mat<f64>,
    targets: &Mat<f64>,
    settings: &TrainSettings<f64>,
    slot: Slot,
) -> f64 {
    let mut work = net.clone();
    let p = get_slot(net, slot);
    let h = 1e-5 * p.abs().max(1.0);
    set_slot(&mut work, slot, p + h);
    let jp = reference_smoothed_loss(&work, inputs, targets, settings);
    set_slot(&mut work, slot, p - h);
    let jm = reference_smoothed_loss(&work, inputs, targets, settings);
    (jp - jm) / (2.0 * h)
}

/// Worst relative disagreement between analytic and finite-difference
/// gradients over every free parameter. Near-zero pairs (both below
/// `abs_floor`) are compared absolutely.
pub struct CheckReport {
    pub n_params: usize,
    pub max_rel_err: f64,
    pub worst: Option<(Slot, f64, f64)>,
}

pub fn check_gradients(
    net: &SpikingNetwork<f64>,
    inputs: &Mat<f64>,
    targets: &Mat<f64>,
    settings: &TrainSettings<f64>,
    analytic: &Grads<f64>,
) -> CheckReport {
    let slots = free_slots(net);
    let mut max_rel = 0.0f64;
    let mut worst = None;
    let abs_floor = 1e-9;
    for &s in &slots {
        let fd = central_difference(net, inputs, targets, settings, s);
        let an = grad_slot(analytic, s);
        let scale = fd.abs().max(an.abs());
        let rel = if scale < abs_floor {
            0.0
        } else {
            (fd - an).abs() / scale
        };
        if rel > max_rel {
            max_rel = rel;
            worst = Some((s, an, fd));
        }
    }
    CheckReport {
        n_params: slots.len(),
        max_rel_err: max_rel,
        worst,
    }
}
