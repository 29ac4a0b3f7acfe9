//! Combined regression loss: mean squared error plus a Pearson-correlation
//! penalty, `J = w_mse·MSE + w_corr·(1 − ρ̄)` with ρ̄ the per-channel Pearson
//! coefficient over time, averaged across channels.
//!
//! Statistics accumulate in f64 regardless of the storage type so the
//! decomposition `total = mse + pearson_term` holds tightly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Real};

/// Default loss weights: MSE weight 1, correlation weight 1/2.
pub const MSE_WEIGHT: f64 = 1.0;
pub const PEARSON_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `mse + pearson_term`.
    pub total: f64,
    pub mse: f64,
    /// `w_corr · (1 − ρ̄)`.
    pub pearson_term: f64,
    /// Per-channel Pearson coefficients.
    pub rho: Vec<f64>,
    /// Channels whose prediction or target had zero variance; their ρ
    /// contribution is defined as 0.
    pub degenerate_channels: Vec<usize>,
}

impl LossBreakdown {
    pub fn zero(channels: usize) -> Self {
        LossBreakdown {
            total: 0.0,
            mse: 0.0,
            pearson_term: 0.0,
            rho: vec![0.0; channels],
            degenerate_channels: Vec::new(),
        }
    }

    /// Running mean over per-sequence breakdowns.
    pub fn accumulate(&mut self, other: &LossBreakdown, count: usize) {
        let w = 1.0 / count as f64;
        let keep = 1.0 - w;
        self.total = self.total * keep + other.total * w;
        self.mse = self.mse * keep + other.mse * w;
        self.pearson_term = self.pearson_term * keep + other.pearson_term * w;
        if self.rho.len() != other.rho.len() {
            self.rho = other.rho.clone();
        } else {
            for (a, b) in self.rho.iter_mut().zip(other.rho.iter()) {
                *a = *a * keep + b * w;
            }
        }
        for &c in &other.degenerate_channels {
            if !self.degenerate_channels.contains(&c) {
                self.degenerate_channels.push(c);
            }
        }
    }
}

/// Pearson correlation coefficient of two equally long series. Returns `None`
/// when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Eq.-5 loss over a T×C prediction/target pair.
pub fn loss<T: Real>(pred: &Mat<T>, target: &Mat<T>) -> Result<LossBreakdown> {
    loss_weighted(pred, target, MSE_WEIGHT, PEARSON_WEIGHT, None)
}

/// Loss with explicit weights; when `grad_out` is given, also writes
/// `∂J/∂pred` into it (same shape as `pred`).
pub fn loss_weighted<T: Real>(
    pred: &Mat<T>,
    target: &Mat<T>,
    w_mse: f64,
    w_corr: f64,
    mut grad_out: Option<&mut Mat<T>>,
) -> Result<LossBreakdown> {
    let steps = pred.rows();
    let channels = pred.cols();
    if target.rows() != steps || target.cols() != channels {
        return Err(Error::dim("loss target shape", steps * channels, target.rows() * target.cols()));
    }
    if steps < 2 {
        return Err(Error::InvalidSequence(format!(
            "loss needs at least 2 timesteps, got {steps}"
        )));
    }
    if let Some(g) = grad_out.as_deref_mut() {
        g.fill(T::zero());
    }

    let norm = (steps * channels) as f64;
    let mut sq_sum = 0.0f64;
    let mut rho = vec![0.0f64; channels];
    let mut degenerate = Vec::new();

    for c in 0..channels {
        let (mut mp, mut mt) = (0.0f64, 0.0f64);
        for t in 0..steps {
            mp += pred.get(t, c).as_f64();
            mt += target.get(t, c).as_f64();
        }
        mp /= steps as f64;
        mt /= steps as f64;
        let (mut cov, mut vp, mut vt) = (0.0f64, 0.0f64, 0.0f64);
        for t in 0..steps {
            let dp = pred.get(t, c).as_f64() - mp;
            let dt = target.get(t, c).as_f64() - mt;
            cov += dp * dt;
            vp += dp * dp;
            vt += dt * dt;
            let e = pred.get(t, c).as_f64() - target.get(t, c).as_f64();
            sq_sum += e * e;
        }
        let ok = vp > 0.0 && vt > 0.0;
        rho[c] = if ok { cov / (vp * vt).sqrt() } else { 0.0 };
        if !ok {
            degenerate.push(c);
        }
        if let Some(g) = grad_out.as_deref_mut() {
            let denom = if ok { (vp * vt).sqrt() } else { 0.0 };
            for t in 0..steps {
                let e = pred.get(t, c).as_f64() - target.get(t, c).as_f64();
                let mut gv = w_mse * 2.0 * e / norm;
                if ok {
                    let dp = pred.get(t, c).as_f64() - mp;
                    let dt = target.get(t, c).as_f64() - mt;
                    let drho = (dt - (cov / vp) * dp) / denom;
                    gv -= w_corr / channels as f64 * drho;
                }
                g.set(t, c, T::from_f64(gv));
            }
        }
    }

    let mse = w_mse * sq_sum / norm;
    let rho_mean = rho.iter().sum::<f64>() / channels as f64;
    let pearson_term = w_corr * (1.0 - rho_mean);
    Ok(LossBreakdown {
        total: mse + pearson_term,
        mse,
        pearson_term,
        rho,
        degenerate_channels: degenerate,
    })
}
