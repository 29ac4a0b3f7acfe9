//! Turning episode logs into training-ready sequence batches: corpus
//! statistics, normalization, fixed-length windowing, target time-shifting,
//! integrator offset subtraction and multi-round aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing;
use crate::linalg::Mat;
use crate::sim::{Episode, Row};
use crate::training::Sample;

/// Channels eligible as network inputs, in log order.
pub const INPUT_CHANNELS: [&str; 12] = [
    "gx", "gy", "gz", "ax", "ay", "az", "est_roll", "est_pitch", "est_yaw", "sp_roll", "sp_pitch",
    "sp_yaw",
];

pub const IMU_CHANNELS: [&str; 6] = ["gx", "gy", "gz", "ax", "ay", "az"];
pub const ATT_CHANNELS: [&str; 3] = ["est_roll", "est_pitch", "est_yaw"];
pub const SP_CHANNELS: [&str; 3] = ["sp_roll", "sp_pitch", "sp_yaw"];
pub const TORQUE_CHANNELS: [&str; 3] = ["tq_roll", "tq_pitch", "tq_yaw"];

pub(crate) fn input_value(row: &Row, channel: &str) -> f32 {
    match channel {
        "gx" => row.gyro[0],
        "gy" => row.gyro[1],
        "gz" => row.gyro[2],
        "ax" => row.accel[0],
        "ay" => row.accel[1],
        "az" => row.accel[2],
        "est_roll" => row.est[0],
        "est_pitch" => row.est[1],
        "est_yaw" => row.est[2],
        "sp_roll" => row.sp[0],
        "sp_pitch" => row.sp[1],
        "sp_yaw" => row.sp[2],
        other => unreachable!("not an input channel: {other}"),
    }
}

/// Per-channel corpus statistics (population convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub channels: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub rows: u64,
    /// Hash over (episode id, episode row count) pairs of the corpus the
    /// stats were built from.
    pub corpus_hash: String,
    /// Convention marker recorded for consumers.
    pub sd_convention: String,
}

impl NormStats {
    pub fn index_of(&self, channel: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == channel)
    }

    /// (offset, scale) for one channel. `zero_mean` forces the offset to 0
    /// (used for attitude channels entering the controller so the merged
    /// network stays a pure weight product).
    pub fn affine(&self, channel: &str, zero_mean: bool) -> Result<(f32, f32)> {
        let i = self
            .index_of(channel)
            .ok_or_else(|| Error::SchemaMismatch(format!("channel `{channel}` not in stats")))?;
        let offset = if zero_mean { 0.0 } else { self.mean[i] as f32 };
        Ok((offset, self.sd[i] as f32))
    }

    pub fn normalize(&self, channel: &str, zero_mean: bool, x: f32) -> Result<f32> {
        let (o, s) = self.affine(channel, zero_mean)?;
        Ok((x - o) / s)
    }

    pub fn denormalize(&self, channel: &str, zero_mean: bool, x: f32) -> Result<f32> {
        let (o, s) = self.affine(channel, zero_mean)?;
        Ok(x * s + o)
    }
}

/// Mean/SD over every input channel of every usable row. Rejects
/// zero-variance channels by name.
pub fn build_norm_stats<'a>(episodes: impl IntoIterator<Item = &'a Episode>) -> Result<NormStats> {
    let usable: Vec<&Episode> = episodes.into_iter().filter(|e| e.sidecar.usable).collect();
    if usable.is_empty() {
        return Err(Error::InvalidSequence("no usable episodes for statistics".into()));
    }
    let nch = INPUT_CHANNELS.len();
    let mut sum = vec![0.0f64; nch];
    let mut sum_sq = vec![0.0f64; nch];
    let mut rows = 0u64;
    for ep in &usable {
        for row in &ep.rows {
            for (c, name) in INPUT_CHANNELS.iter().enumerate() {
                let v = input_value(row, name) as f64;
                sum[c] += v;
                sum_sq[c] += v * v;
            }
            rows += 1;
        }
    }
    let n = rows as f64;
    let mut mean = vec![0.0f64; nch];
    let mut sd = vec![0.0f64; nch];
    for c in 0..nch {
        mean[c] = sum[c] / n;
        let var = (sum_sq[c] / n - mean[c] * mean[c]).max(0.0);
        sd[c] = var.sqrt();
        if sd[c] <= 0.0 {
            return Err(Error::ZeroVariance(INPUT_CHANNELS[c].to_string()));
        }
    }
    let ids: Vec<(String, usize)> = usable
        .iter()
        .map(|e| (e.id().to_string(), e.len()))
        .collect();
    Ok(NormStats {
        channels: INPUT_CHANNELS.iter().map(|s| s.to_string()).collect(),
        mean,
        sd,
        rows,
        corpus_hash: hashing::json_hash(&ids)?,
        sd_convention: "population".into(),
    })
}

/// Which sub-network a batch feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// IMU → filter attitude.
    Estimator,
    /// Attitude estimate + setpoints → expert torque commands (shifted).
    Controller,
    /// Attitude estimate + setpoints → expert integral terms
    /// (offset-subtracted).
    Integrator,
}

impl Role {
    pub fn input_channels(&self) -> Vec<String> {
        match self {
            Role::Estimator => IMU_CHANNELS.iter().map(|s| s.to_string()).collect(),
            Role::Controller | Role::Integrator => ATT_CHANNELS
                .iter()
                .chain(SP_CHANNELS.iter())
                .map(|s| s.to_string())
                .collect(),
        }
    }

    /// Channels normalized by scale only (offset forced to zero).
    ///
    /// Attitude channels feeding the controller keep their scale but drop the
    /// mean so the estimator→controller boundary stays purely linear. Gyro
    /// channels are rate sensors whose running integral carries the attitude:
    /// removing a corpus-mean offset would turn that integral into an
    /// unrepresentable time ramp, so they are scaled only — and the
    /// controller's error-like inputs (attitude, setpoints) are treated the
    /// same way so the integrator neurons can accumulate them without a
    /// spurious constant drive. Only the accelerometer channels carry a real
    /// offset (gravity on the z axis).
    pub fn zero_mean_channel(&self, channel: &str) -> bool {
        match self {
            Role::Estimator => ["gx", "gy", "gz"].contains(&channel),
            Role::Controller | Role::Integrator => true,
        }
    }

    pub fn target_labels(&self) -> Vec<String> {
        match self {
            Role::Estimator => vec!["att_roll".into(), "att_pitch".into(), "att_yaw".into()],
            Role::Controller => vec!["cmd_roll".into(), "cmd_pitch".into(), "cmd_yaw".into()],
            Role::Integrator => vec!["int_roll".into(), "int_pitch".into(), "int_yaw".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSource {
    pub episode_id: String,
    pub window: usize,
    pub round: String,
}

/// Fixed-length normalized training sequences for one role.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub role: Role,
    pub shift: usize,
    pub seq_len: usize,
    pub input_labels: Vec<String>,
    pub target_labels: Vec<String>,
    pub inputs: Vec<Mat<f32>>,
    pub targets: Vec<Mat<f32>>,
    pub sources: Vec<SequenceSource>,
    /// Episodes skipped (too short or unusable), for the build report.
    pub skipped_episodes: usize,
    pub stats_hash: String,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn samples(&self) -> Vec<Sample<'_>> {
        self.inputs
            .iter()
            .zip(self.targets.iter())
            .map(|(inputs, targets)| Sample { inputs, targets })
            .collect()
    }

    /// Drop every sequence except the listed indices (keeps ordering).
    pub fn subset(&self, keep: &[usize]) -> SequenceBatch {
        SequenceBatch {
            inputs: keep.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: keep.iter().map(|&i| self.targets[i].clone()).collect(),
            sources: keep.iter().map(|&i| self.sources[i].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Cut episodes into non-overlapping normalized windows.
///
/// Targets at row t hold the expert output at original time t + d. Windows
/// never straddle episodes; unusable or too-short episodes are skipped and
/// counted.
pub fn make_sequences<'a>(
    episodes: impl IntoIterator<Item = &'a Episode>,
    stats: &NormStats,
    role: Role,
    shift: usize,
    seq_len: usize,
) -> Result<SequenceBatch> {
    if seq_len < 2 {
        return Err(Error::InvalidSequence("seq_len must be >= 2".into()));
    }
    let input_labels = role.input_channels();
    let affines: Vec<(f32, f32)> = input_labels
        .iter()
        .map(|c| stats.affine(c, role.zero_mean_channel(c)))
        .collect::<Result<_>>()?;

    let mut batch = SequenceBatch {
        role,
        shift,
        seq_len,
        input_labels: input_labels.clone(),
        target_labels: role.target_labels(),
        inputs: Vec::new(),
        targets: Vec::new(),
        sources: Vec::new(),
        skipped_episodes: 0,
        stats_hash: hashing::json_hash(stats)?,
    };

    for ep in episodes {
        if !ep.sidecar.usable || ep.len() < seq_len + shift {
            batch.skipped_episodes += 1;
            continue;
        }
        let limits = ep.sidecar.model.torque_limit;
        let n_windows = (ep.len() - shift) / seq_len;
        for w in 0..n_windows {
            let start = w * seq_len;
            let mut inputs = Mat::zeros(seq_len, input_labels.len());
            for t in 0..seq_len {
                let row = &ep.rows[start + t];
                for (c, name) in input_labels.iter().enumerate() {
                    let (o, s) = affines[c];
                    inputs.set(t, c, (input_value(row, name) - o) / s);
                }
            }
            let mut targets = Mat::zeros(seq_len, 3);
            for t in 0..seq_len {
                let row = &ep.rows[start + t + shift];
                match role {
                    Role::Estimator => {
                        for a in 0..3 {
                            targets.set(t, a, row.est[a]);
                        }
                    }
                    Role::Controller => {
                        for a in 0..3 {
                            targets.set(t, a, row.expert_torque[a] / limits[a] as f32);
                        }
                    }
                    Role::Integrator => {
                        for a in 0..3 {
                            targets.set(t, a, row.integral[a] / limits[a] as f32);
                        }
                    }
                }
            }
            if role == Role::Estimator {
                // Yaw is gyro-integrated with no absolute reference: the
                // window-initial value is not recoverable from the inputs, so
                // targets carry yaw relative to the window start.
                let first = targets.get(0, 2);
                for t in 0..seq_len {
                    let v = targets.get(t, 2) - first;
                    targets.set(t, 2, v);
                }
            }
            if role == Role::Integrator {
                // The sequence-initial integral value is not recoverable from
                // the inputs; subtract it so targets start at zero.
                let first: Vec<f32> = (0..3).map(|a| targets.get(0, a)).collect();
                for t in 0..seq_len {
                    for a in 0..3 {
                        let v = targets.get(t, a) - first[a];
                        targets.set(t, a, v);
                    }
                }
            }
            batch.inputs.push(inputs);
            batch.targets.push(targets);
            batch.sources.push(SequenceSource {
                episode_id: ep.id().to_string(),
                window: w,
                round: ep.sidecar.round.clone(),
            });
        }
    }
    Ok(batch)
}

/// A multi-round corpus with statistics over the union.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub episodes: Vec<Episode>,
    pub stats: NormStats,
}

/// Concatenate data-collection rounds into one corpus. All rounds must share
/// the log schema and vehicle command scale; statistics are rebuilt over the
/// union.
pub fn aggregate_rounds(rounds: Vec<Vec<Episode>>) -> Result<Corpus> {
    let mut episodes: Vec<Episode> = Vec::new();
    let mut reference: Option<(Vec<String>, [f64; 3])> = None;
    for round in rounds {
        for ep in round {
            let key = (ep.sidecar.columns.clone(), ep.sidecar.model.torque_limit);
            match &reference {
                None => reference = Some(key),
                Some(r) => {
                    if r.0 != key.0 {
                        return Err(Error::SchemaMismatch(format!(
                            "episode {} has different columns",
                            ep.id()
                        )));
                    }
                    if r.1 != key.1 {
                        return Err(Error::SchemaMismatch(format!(
                            "episode {} was flown with different torque limits",
                            ep.id()
                        )));
                    }
                }
            }
            episodes.push(ep);
        }
    }
    let stats = build_norm_stats(&episodes)?;
    Ok(Corpus { episodes, stats })
}

/// Split episode indices into train/test by episode, never by window.
pub fn split_by_episode(episodes: &[Episode], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..episodes.len()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_test = ((episodes.len() as f64 * test_fraction).round() as usize)
        .min(episodes.len().saturating_sub(1))
        .max(if episodes.len() > 1 { 1 } else { 0 });
    let test = idx[..n_test].to_vec();
    let train = idx[n_test..].to_vec();
    (train, test)
}
