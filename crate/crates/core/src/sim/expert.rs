//! The expert policy: complementary attitude filter plus cascaded PID.
//!
//! Runs entirely in f32 with a fixed operation order so that logged episodes
//! can be replayed bit-exactly from the CSV columns (the integral
//! reconstruction property relies on this). Gains live in config, not code;
//! the defaults were tuned once against the step-response rise-time band and
//! then frozen.

use serde::{Deserialize, Serialize};

/// Filter constant and PID gains. Rates in rad/s, torques in N·m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    /// Complementary filter blend: gyro-integration weight.
    pub filter_alpha: f32,
    /// Attitude error → rate setpoint (1/s).
    pub att_kp: [f32; 3],
    /// Rate error → torque (N·m·s/rad).
    pub rate_kp: [f32; 3],
    /// Integral gain (N·m/rad).
    pub rate_ki: [f32; 3],
    /// Derivative gain (N·m·s²/rad).
    pub rate_kd: [f32; 3],
    /// One-pole smoothing on the rate-error derivative; keeps the D path
    /// stable at the 500 Hz loop rate.
    pub rate_d_lpf: f32,
    /// Anti-windup clamp on the integral term (N·m).
    pub integral_limit: [f32; 3],
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            filter_alpha: 0.995,
            att_kp: [17.0, 17.0, 10.0],
            rate_kp: [2.8e-3, 2.8e-3, 3.5e-3],
            rate_ki: [2.0e-2, 2.0e-2, 1.5e-2],
            rate_kd: [1.0e-5, 1.0e-5, 0.0],
            rate_d_lpf: 0.5,
            integral_limit: [2.0e-3, 2.0e-3, 1.0e-3],
        }
    }
}

/// Filter estimate and PID internals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpertState {
    /// Complementary-filter attitude estimate (rad).
    pub attitude: [f32; 3],
    /// Integral term per axis (N·m) — the logged integrator value.
    pub integral: [f32; 3],
    prev_rate_err: [f32; 3],
    d_filtered: [f32; 3],
    has_prev: bool,
}

/// Per-axis decomposition of the torque command.
#[derive(Debug, Clone, Copy, Default)]
pub struct PidBreakdown {
    pub rate_sp: [f32; 3],
    pub p: [f32; 3],
    pub i: [f32; 3],
    pub d: [f32; 3],
}

/// One 500 Hz expert update. Returns the torque command (N·m, unclamped — the
/// caller applies actuator limits) and the P/I/D breakdown.
pub fn expert_step(
    cfg: &ExpertConfig,
    state: &mut ExpertState,
    imu: &[f32; 6],
    setpoints: &[f32; 3],
    dt: f32,
) -> ([f32; 3], PidBreakdown) {
    let (gyro, accel) = (&imu[0..3], &imu[3..6]);

    // Complementary filter: blend gyro integration with the accel tilt for
    // roll/pitch; yaw integrates the gyro only.
    let roll_acc = accel[1].atan2(accel[2]);
    let pitch_acc = (-accel[0]).atan2((accel[1] * accel[1] + accel[2] * accel[2]).sqrt());
    let a = cfg.filter_alpha;
    state.attitude[0] = a * (state.attitude[0] + gyro[0] * dt) + (1.0 - a) * roll_acc;
    state.attitude[1] = a * (state.attitude[1] + gyro[1] * dt) + (1.0 - a) * pitch_acc;
    state.attitude[2] += gyro[2] * dt;

    let mut torque = [0.0f32; 3];
    let mut bd = PidBreakdown::default();
    for axis in 0..3 {
        let rate_sp = cfg.att_kp[axis] * (setpoints[axis] - state.attitude[axis]);
        let err = rate_sp - gyro[axis];
        let p = cfg.rate_kp[axis] * err;
        let mut i = state.integral[axis] + cfg.rate_ki[axis] * err * dt;
        i = i.clamp(-cfg.integral_limit[axis], cfg.integral_limit[axis]);
        state.integral[axis] = i;
        let d = if state.has_prev {
            let raw = (err - state.prev_rate_err[axis]) / dt;
            state.d_filtered[axis] += cfg.rate_d_lpf * (raw - state.d_filtered[axis]);
            cfg.rate_kd[axis] * state.d_filtered[axis]
        } else {
            0.0
        };
        state.prev_rate_err[axis] = err;
        torque[axis] = p + i + d;
        bd.rate_sp[axis] = rate_sp;
        bd.p[axis] = p;
        bd.i[axis] = i;
        bd.d[axis] = d;
    }
    state.has_prev = true;
    (torque, bd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_forever_zero_torque() {
        let cfg = ExpertConfig::default();
        let mut st = ExpertState::default();
        // Perfectly level, no rates, no noise: accel reads (0, 0, g).
        let imu = [0.0, 0.0, 0.0, 0.0, 0.0, 9.81f32];
        for _ in 0..2000 {
            let (tq, bd) = expert_step(&cfg, &mut st, &imu, &[0.0; 3], 0.002);
            assert_eq!(tq, [0.0; 3]);
            assert_eq!(bd.i, [0.0; 3]);
        }
        assert_eq!(st.integral, [0.0; 3]);
        assert_eq!(st.attitude, [0.0; 3]);
    }

    #[test]
    fn integral_winds_under_held_rate_error() {
        let cfg = ExpertConfig::default();
        let mut st = ExpertState::default();
        // A constant gyro reading with matching accel keeps a persistent rate
        // error on the roll axis.
        let imu = [0.5, 0.0, 0.0, 0.0, 0.0, 9.81f32];
        let (_, bd0) = expert_step(&cfg, &mut st, &imu, &[0.0; 3], 0.002);
        assert!(bd0.i[0] < 0.0);
        for _ in 0..50 {
            expert_step(&cfg, &mut st, &imu, &[0.0; 3], 0.002);
        }
        assert!(st.integral[0] < bd0.i[0], "integral keeps winding");
        // And it respects the anti-windup clamp.
        for _ in 0..100_000 {
            expert_step(&cfg, &mut st, &imu, &[0.0; 3], 0.002);
        }
        assert!(st.integral[0] >= -cfg.integral_limit[0]);
        assert_eq!(st.integral[0], -cfg.integral_limit[0]);
    }
}
