//! IMU sensor model: gyroscope with per-episode constant bias, accelerometer
//! sensing the gravity direction under the hover assumption.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{rotate_world_to_body, SimState};
use crate::error::{Error, Result};

/// Per-episode sensor instance. Biases are constant for the episode; noise is
/// drawn per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImuModel {
    /// Gyro noise SD (rad/s).
    pub gyro_noise_sd: f64,
    /// Gyro bias per axis (rad/s).
    pub gyro_bias: [f64; 3],
    /// Accelerometer noise SD (m/s²).
    pub accel_noise_sd: f64,
    /// Sample rate; the pipeline runs at 500 Hz throughout.
    pub sample_rate_hz: f64,
}

impl Default for ImuModel {
    fn default() -> Self {
        ImuModel {
            gyro_noise_sd: 0.005,
            gyro_bias: [0.0; 3],
            accel_noise_sd: 0.08,
            sample_rate_hz: super::SAMPLE_RATE_HZ,
        }
    }
}

impl ImuModel {
    pub fn validate(&self) -> Result<()> {
        if self.gyro_noise_sd < 0.0 || self.accel_noise_sd < 0.0 {
            return Err(Error::InvalidParams("noise SDs must be >= 0".into()));
        }
        if self.sample_rate_hz != super::SAMPLE_RATE_HZ {
            return Err(Error::InvalidParams(format!(
                "IMU sample rate must be {} Hz",
                super::SAMPLE_RATE_HZ
            )));
        }
        Ok(())
    }
}

/// Sample one (gyro xyz, accel xyz) measurement.
///
/// gyro = ω + bias + noise; accel = body-frame gravity direction scaled to g
/// plus noise (body translational acceleration is ignored: hover assumption).
pub fn imu_sample<R: Rng>(state: &SimState, imu: &ImuModel, gravity: f64, rng: &mut R) -> [f32; 6] {
    let g_body = rotate_world_to_body(state.quat, [0.0, 0.0, gravity]);
    let gn = Normal::new(0.0, imu.gyro_noise_sd.max(f64::MIN_POSITIVE)).unwrap();
    let an = Normal::new(0.0, imu.accel_noise_sd.max(f64::MIN_POSITIVE)).unwrap();
    let mut out = [0.0f32; 6];
    for a in 0..3 {
        let noise = if imu.gyro_noise_sd > 0.0 { gn.sample(rng) } else { 0.0 };
        out[a] = (state.omega[a] + imu.gyro_bias[a] + noise) as f32;
    }
    for a in 0..3 {
        let noise = if imu.accel_noise_sd > 0.0 { an.sample(rng) } else { 0.0 };
        out[3 + a] = (g_body[a] + noise) as f32;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{quat_mul, quat_normalize, DT};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noiseless() -> ImuModel {
        ImuModel {
            gyro_noise_sd: 0.0,
            accel_noise_sd: 0.0,
            ..ImuModel::default()
        }
    }

    #[test]
    fn level_at_rest_reads_pure_gravity() {
        let state = SimState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = imu_sample(&state, &noiseless(), 9.81, &mut rng);
        assert_eq!(&m[0..3], &[0.0, 0.0, 0.0]);
        assert!((m[3]).abs() < 1e-6 && (m[4]).abs() < 1e-6);
        assert!((m[5] - 9.81).abs() < 1e-5);
    }

    #[test]
    fn accel_tilt_recovers_roll_exactly() {
        for phi in [-0.4f64, -0.1, 0.2, 0.5] {
            let half = phi / 2.0;
            let mut quat = [half.cos(), half.sin(), 0.0, 0.0];
            quat_normalize(&mut quat);
            let state = SimState { quat, omega: [0.0; 3] };
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let m = imu_sample(&state, &noiseless(), 9.81, &mut rng);
            let recovered = (m[4] as f64).atan2(m[5] as f64);
            assert!(
                (recovered - phi).abs() < 1e-6,
                "roll {phi} recovered as {recovered}"
            );
        }
    }

    #[test]
    fn pitch_recovery_from_gravity() {
        let theta = 0.3f64;
        let half = theta / 2.0;
        let quat = [half.cos(), 0.0, half.sin(), 0.0];
        let state = SimState { quat, omega: [0.0; 3] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = imu_sample(&state, &noiseless(), 9.81, &mut rng);
        let (ax, ay, az) = (m[3] as f64, m[4] as f64, m[5] as f64);
        let recovered = (-ax).atan2((ay * ay + az * az).sqrt());
        assert!((recovered - theta).abs() < 1e-6);
    }

    /// Mean gyro reading over 10 s matches the bias within 3·SD/√N.
    #[test]
    fn bias_shows_up_in_time_average() {
        let imu = ImuModel {
            gyro_bias: [0.05, 0.0, -0.02],
            ..ImuModel::default()
        };
        let state = SimState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = (10.0 / DT) as usize;
        let mut sum = [0.0f64; 3];
        for _ in 0..n {
            let m = imu_sample(&state, &imu, 9.81, &mut rng);
            for a in 0..3 {
                sum[a] += m[a] as f64;
            }
        }
        let tol = 3.0 * imu.gyro_noise_sd / (n as f64).sqrt();
        for a in 0..3 {
            let mean = sum[a] / n as f64;
            assert!(
                (mean - imu.gyro_bias[a]).abs() < tol,
                "axis {a}: mean {mean} vs bias {} (tol {tol})",
                imu.gyro_bias[a]
            );
        }
    }

    #[test]
    fn quat_mul_identity() {
        let q = [0.9, 0.1, -0.2, 0.4];
        let id = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(quat_mul(q, id), q);
    }
}
