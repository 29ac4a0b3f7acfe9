//! Setpoint scripts: timed attitude-setpoint segments.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One constant-setpoint stretch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration_s: f64,
    /// (roll, pitch, yaw) setpoint in radians.
    pub setpoint: [f32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub name: String,
    pub segments: Vec<Segment>,
}

const DEG: f32 = std::f32::consts::PI / 180.0;

impl Script {
    pub fn hover(duration_s: f64) -> Self {
        Script {
            name: "hover".into(),
            segments: vec![Segment {
                duration_s,
                setpoint: [0.0; 3],
            }],
        }
    }

    /// Roll step-response profile: 0° for 2 s, +10° for 1.5 s, −10° for
    /// 1.5 s, back to 0° for 2.5 s.
    pub fn roll_step() -> Self {
        let seg = |duration_s: f64, roll_deg: f32| Segment {
            duration_s,
            setpoint: [roll_deg * DEG, 0.0, 0.0],
        };
        Script {
            name: "roll-step".into(),
            segments: vec![seg(2.0, 0.0), seg(1.5, 10.0), seg(1.5, -10.0), seg(2.5, 0.0)],
        }
    }

    /// Manual-flight stand-in: piecewise-constant random setpoints on all
    /// three axes, with occasional returns to level.
    pub fn maneuver<R: Rng>(duration_s: f64, rng: &mut R) -> Self {
        let mut segments = Vec::new();
        let mut t = 0.0;
        while t < duration_s {
            let seg_len = rng.gen_range(0.5..2.5f64).min(duration_s - t);
            let setpoint = if rng.gen_bool(0.3) {
                [0.0; 3]
            } else {
                [
                    rng.gen_range(-15.0..15.0f32) * DEG,
                    rng.gen_range(-15.0..15.0f32) * DEG,
                    if rng.gen_bool(0.5) {
                        rng.gen_range(-20.0..20.0f32) * DEG
                    } else {
                        0.0
                    },
                ]
            };
            segments.push(Segment {
                duration_s: seg_len,
                setpoint,
            });
            t += seg_len;
        }
        Script {
            name: "maneuver".into(),
            segments,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    pub fn n_steps(&self) -> usize {
        (self.duration_s() * super::SAMPLE_RATE_HZ).round() as usize
    }

    /// Setpoint at step index `k` (2 ms ticks).
    pub fn setpoint_at(&self, k: usize) -> [f32; 3] {
        let t = k as f64 / super::SAMPLE_RATE_HZ;
        let mut acc = 0.0;
        for seg in &self.segments {
            acc += seg.duration_s;
            if t < acc {
                return seg.setpoint;
            }
        }
        self.segments.last().map(|s| s.setpoint).unwrap_or([0.0; 3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roll_step_profile() {
        let s = Script::roll_step();
        assert_eq!(s.duration_s(), 7.5);
        assert_eq!(s.n_steps(), 3750);
        assert_eq!(s.setpoint_at(0), [0.0; 3]);
        let ten_deg = 10.0 * DEG;
        assert!((s.setpoint_at(1200)[0] - ten_deg).abs() < 1e-6); // t = 2.4 s
        assert!((s.setpoint_at(2000)[0] + ten_deg).abs() < 1e-6); // t = 4.0 s
        assert_eq!(s.setpoint_at(3600), [0.0; 3]); // t = 7.2 s
    }

    #[test]
    fn maneuver_is_seeded_and_covers_duration() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let s1 = Script::maneuver(30.0, &mut a);
        let s2 = Script::maneuver(30.0, &mut b);
        assert_eq!(s1, s2);
        assert!((s1.duration_s() - 30.0).abs() < 1e-9);
    }
}
