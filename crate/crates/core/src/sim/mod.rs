//! Desk-scale quadrotor stand-in: rigid-body attitude dynamics, an IMU model,
//! the expert complementary filter + cascaded PID, setpoint scripts and the
//! disturbance-injection recipe, all at a fixed 500 Hz step.
//!
//! Physics integrate in f64; sensor outputs, the expert controller and all
//! logging are f32 so that logged episodes replay bit-exactly.

pub mod episode;
pub mod expert;
pub mod imu;
pub mod script;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use episode::{
    derived_rng, load_files, run_episode, write_csv, write_files, Controller, DisturbanceConfig,
    Episode, EpisodeSetup, Row, Sidecar, VariationConfig, CSV_HEADER,
};
pub use expert::{expert_step, ExpertConfig, ExpertState, PidBreakdown};
pub use imu::{imu_sample, ImuModel};
pub use script::{Script, Segment};

/// Control-loop rate. Everything in the pipeline assumes this.
pub const SAMPLE_RATE_HZ: f64 = 500.0;
/// Fixed integration step (2 ms).
pub const DT: f64 = 1.0 / SAMPLE_RATE_HZ;

/// Rigid-body constants of the simulated vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadModel {
    /// Diagonal inertia (kg·m²).
    pub inertia: [f64; 3],
    /// Absolute maximum torque command per axis (N·m).
    pub torque_limit: [f64; 3],
    /// Linear rotational drag coefficient (N·m·s/rad).
    pub rot_drag: f64,
    /// Gravity (m/s²).
    pub gravity: f64,
}

impl Default for QuadModel {
    fn default() -> Self {
        QuadModel {
            inertia: [1.4e-5, 1.4e-5, 2.17e-5],
            torque_limit: [4e-3, 4e-3, 2e-3],
            rot_drag: 5e-7,
            gravity: 9.81,
        }
    }
}

impl QuadModel {
    pub fn validate(&self) -> Result<()> {
        if self.inertia.iter().any(|&i| i <= 0.0) {
            return Err(Error::InvalidParams("inertia entries must be > 0".into()));
        }
        if self.torque_limit.iter().any(|&t| t <= 0.0) {
            return Err(Error::InvalidParams("torque limits must be > 0".into()));
        }
        Ok(())
    }
}

/// Rotational state: attitude quaternion (body→world, w-first) and body
/// angular rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub quat: [f64; 4],
    pub omega: [f64; 3],
}

impl Default for SimState {
    fn default() -> Self {
        SimState {
            quat: [1.0, 0.0, 0.0, 0.0],
            omega: [0.0, 0.0, 0.0],
        }
    }
}

impl SimState {
    /// ZYX Euler angles (roll, pitch, yaw) in radians.
    pub fn euler(&self) -> [f64; 3] {
        let [w, x, y, z] = self.quat;
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        let sinp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
        let pitch = sinp.asin();
        let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
        [roll, pitch, yaw]
    }

    pub fn is_finite(&self) -> bool {
        self.quat.iter().all(|v| v.is_finite()) && self.omega.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let [aw, ax, ay, az] = a;
    let [bw, bx, by, bz] = b;
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

pub(crate) fn quat_normalize(q: &mut [f64; 4]) {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    for v in q.iter_mut() {
        *v /= n;
    }
}

/// Rotate a world-frame vector into the body frame (q is body→world).
pub(crate) fn rotate_world_to_body(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    let qinv = [q[0], -q[1], -q[2], -q[3]];
    let p = [0.0, v[0], v[1], v[2]];
    let r = quat_mul(quat_mul(qinv, p), [q[0], q[1], q[2], q[3]]);
    [r[1], r[2], r[3]]
}

/// One 2 ms physics step under the given body torque (N·m).
///
/// ω' = ω + dt·I⁻¹(τ − ω×Iω − drag·ω); the attitude quaternion advances by
/// the exact exponential of ω·dt and is renormalized.
pub fn sim_step(model: &QuadModel, state: &SimState, torque: [f64; 3]) -> Result<SimState> {
    let [ix, iy, iz] = model.inertia;
    let [wx, wy, wz] = state.omega;
    // ω×(Iω)
    let gyro = [
        wy * iz * wz - wz * iy * wy,
        wz * ix * wx - wx * iz * wz,
        wx * iy * wy - wy * ix * wx,
    ];
    let mut omega = state.omega;
    let inertia = model.inertia;
    for a in 0..3 {
        let accel = (torque[a] - gyro[a] - model.rot_drag * state.omega[a]) / inertia[a];
        omega[a] += DT * accel;
    }

    let angle = (omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]).sqrt() * DT;
    let dq = if angle > 1e-12 {
        let half = angle * 0.5;
        let k = half.sin() / (angle / DT);
        [half.cos(), omega[0] * k, omega[1] * k, omega[2] * k]
    } else {
        [1.0, 0.5 * DT * omega[0], 0.5 * DT * omega[1], 0.5 * DT * omega[2]]
    };
    let mut quat = quat_mul(state.quat, dq);
    quat_normalize(&mut quat);

    let next = SimState { quat, omega };
    if !next.is_finite() {
        return Err(Error::Divergence("non-finite simulator state".into()));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_torque_equilibrium() {
        let model = QuadModel::default();
        let mut s = SimState::default();
        for _ in 0..1000 {
            s = sim_step(&model, &s, [0.0; 3]).unwrap();
        }
        assert_eq!(s.omega, [0.0; 3]);
        let e = s.euler();
        assert!(e.iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn constant_roll_torque_linear_rate_growth() {
        let model = QuadModel {
            rot_drag: 0.0,
            ..QuadModel::default()
        };
        let tau = 1e-3;
        let mut s = SimState::default();
        let steps = 250; // 0.5 s
        for _ in 0..steps {
            s = sim_step(&model, &s, [tau, 0.0, 0.0]).unwrap();
        }
        let expected = tau / model.inertia[0] * (steps as f64 * DT);
        assert!(
            (s.omega[0] - expected).abs() < 0.02 * expected,
            "rate {} vs expected {}",
            s.omega[0],
            expected
        );
    }

    #[test]
    fn quaternion_norm_stays_unit_over_a_million_steps() {
        let model = QuadModel::default();
        let mut s = SimState {
            quat: [1.0, 0.0, 0.0, 0.0],
            omega: [0.4, -0.3, 0.2],
        };
        let mut worst = 0.0f64;
        for k in 0..1_000_000 {
            let tau = [
                1e-4 * ((k as f64) * 0.001).sin(),
                1e-4 * ((k as f64) * 0.0017).cos(),
                5e-5 * ((k as f64) * 0.0003).sin(),
            ];
            s = sim_step(&model, &s, tau).unwrap();
            let n = (s.quat.iter().map(|q| q * q).sum::<f64>()).sqrt();
            worst = worst.max((n - 1.0).abs());
        }
        assert!(worst < 1e-9, "worst norm deviation {worst}");
    }

    /// Zero torque, positive drag: |ω| never grows (checked across the flight
    /// envelope's rate range).
    #[test]
    fn drag_dissipates_rotation() {
        let model = QuadModel::default();
        for seed in 0..20u32 {
            let f = seed as f64 / 20.0;
            let mut s = SimState {
                quat: [1.0, 0.0, 0.0, 0.0],
                omega: [10.0 * (f - 0.5), 8.0 * (0.7 - f), 6.0 * f],
            };
            let mut prev = (s.omega.iter().map(|w| w * w).sum::<f64>()).sqrt();
            for _ in 0..5000 {
                s = sim_step(&model, &s, [0.0; 3]).unwrap();
                let mag = (s.omega.iter().map(|w| w * w).sum::<f64>()).sqrt();
                assert!(mag <= prev + 1e-12, "|ω| grew: {mag} > {prev}");
                prev = mag;
            }
        }
    }
}
