//! Staged pipeline orchestration shared by the CLI and the acceptance suite:
//! data generation rounds, role-specific batch building, sub-network
//! training with normalization attached, merging and pruning.

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::dataset::{
    build_norm_stats, make_sequences, split_by_episode, Corpus, NormStats, Role, SequenceBatch,
};
use crate::error::{Error, Result};
use crate::sim::{
    derived_rng, run_episode, Controller, Episode, EpisodeSetup, Script, VariationConfig,
};
use crate::snn::SpikingNetwork;
use crate::training::{self, TrainConfig, TrainRun};

/// Distinguishes the seed streams of the data-collection rounds.
const ROUND_SEED_STRIDE: u64 = 1 << 32;

/// Who flies during data generation.
pub enum GenController<'a> {
    Expert,
    SnnPipeline {
        estimator: &'a SpikingNetwork<f32>,
        controller: &'a SpikingNetwork<f32>,
    },
}

pub struct RoundSpec<'a> {
    pub name: &'a str,
    pub minutes: f64,
    pub controller: GenController<'a>,
    pub disturbed: bool,
    /// Independent seed stream per round (0, 1, 2, ...).
    pub round_index: u64,
}

/// Generate one round of maneuver episodes. Episodes are independent and run
/// in parallel with per-episode seeds; output order is by episode index.
pub fn generate_round(cfg: &PipelineConfig, spec: &RoundSpec<'_>) -> Result<Vec<Episode>> {
    let episode_s = cfg.dataset.episode_seconds;
    let n_episodes = ((spec.minutes * 60.0 / episode_s).ceil() as usize).max(1);
    let master = cfg.run.seed;
    let base_index = spec.round_index * ROUND_SEED_STRIDE;

    let episodes: Vec<Result<Episode>> = (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let index = base_index + i as u64;
            // Script stream kept separate from the episode condition stream.
            let mut script_rng = derived_rng(master ^ 0x5C21_77AA_11EE_0001, index);
            let script = Script::maneuver(episode_s, &mut script_rng);
            let setup = EpisodeSetup {
                id: format!("{}-{:04}", spec.name, i),
                round: spec.name.to_string(),
                script,
                master_seed: master,
                episode_index: index,
                disturbance: spec.disturbed.then(|| cfg.sim.disturbance.clone()),
                variation: cfg.sim.variation.clone(),
            };
            let controller = match &spec.controller {
                GenController::Expert => Controller::Expert,
                GenController::SnnPipeline { estimator, controller } => Controller::SnnPipeline {
                    estimator,
                    controller,
                },
            };
            run_episode(&cfg.sim.model, &cfg.sim.imu, &cfg.sim.expert, &setup, controller)
        })
        .collect();
    episodes.into_iter().collect()
}

/// Train/held-out batches for one role, split by episode.
pub struct RoleData {
    pub train: SequenceBatch,
    pub val: SequenceBatch,
}

pub fn role_data(
    corpus: &Corpus,
    role: Role,
    shift: usize,
    seq_len: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<RoleData> {
    let (train_idx, val_idx) = split_by_episode(&corpus.episodes, test_fraction, seed);
    let train = make_sequences(
        train_idx.iter().map(|&i| &corpus.episodes[i]),
        &corpus.stats,
        role,
        shift,
        seq_len,
    )?;
    let val = make_sequences(
        val_idx.iter().map(|&i| &corpus.episodes[i]),
        &corpus.stats,
        role,
        shift,
        seq_len,
    )?;
    if train.is_empty() {
        return Err(Error::InvalidSequence(format!(
            "no training sequences for {role:?} (episodes too short for seq_len {seq_len}?)"
        )));
    }
    Ok(RoleData { train, val })
}

/// Attach the deployment input preprocessing for a role to a trained net.
pub fn attach_norm(net: &mut SpikingNetwork<f32>, stats: &NormStats, role: Role) -> Result<()> {
    let channels = role.input_channels();
    let mut offset = Vec::with_capacity(channels.len());
    let mut scale = Vec::with_capacity(channels.len());
    for c in &channels {
        let (o, s) = stats.affine(c, role.zero_mean_channel(c))?;
        offset.push(o);
        scale.push(s);
    }
    net.input_norm = crate::snn::InputNorm { offset, scale };
    net.input_labels = channels;
    Ok(())
}

fn stamp_provenance(run: &mut TrainRun, cfg: &TrainConfig, stats: &NormStats) -> Result<()> {
    let p = &mut run.net.meta.provenance;
    p.insert("config_hash".into(), crate::hashing::json_hash(cfg)?);
    p.insert("dataset_hash".into(), crate::hashing::json_hash(stats)?);
    p.insert("corpus_hash".into(), stats.corpus_hash.clone());
    Ok(())
}

/// Train the estimation sub-network on a corpus.
pub fn train_estimator_stage(corpus: &Corpus, cfg: &PipelineConfig) -> Result<(TrainRun, RoleData)> {
    let tc = &cfg.training.estimator;
    let data = role_data(
        corpus,
        Role::Estimator,
        tc.target_shift,
        tc.seq_len,
        cfg.dataset.test_fraction,
        cfg.run.seed ^ 0xE57,
    )?;
    let mut run = training::train_estimator(
        &data.train.input_labels,
        &data.train.target_labels,
        &data.train.samples(),
        &data.val.samples(),
        tc,
    )?;
    attach_norm(&mut run.net, &corpus.stats, Role::Estimator)?;
    stamp_provenance(&mut run, tc, &corpus.stats)?;
    Ok((run, data))
}

/// Pretrain the integrator block on integral targets.
pub fn train_integrator_stage(corpus: &Corpus, cfg: &PipelineConfig) -> Result<(TrainRun, RoleData)> {
    let tc = &cfg.training.integrator;
    let data = role_data(
        corpus,
        Role::Integrator,
        tc.target_shift,
        tc.seq_len,
        cfg.dataset.test_fraction,
        cfg.run.seed ^ 0x117,
    )?;
    let mut run = training::pretrain_integrators(
        &data.train.input_labels,
        &data.train.target_labels,
        &data.train.samples(),
        &data.val.samples(),
        tc,
    )?;
    attach_norm(&mut run.net, &corpus.stats, Role::Integrator)?;
    stamp_provenance(&mut run, tc, &corpus.stats)?;
    Ok((run, data))
}

/// Train the control sub-network, optionally seeding its integrator tail.
pub fn train_controller_stage(
    corpus: &Corpus,
    cfg: &PipelineConfig,
    train_cfg: &TrainConfig,
    integrator_block: Option<&SpikingNetwork<f32>>,
) -> Result<(TrainRun, RoleData)> {
    let data = role_data(
        corpus,
        Role::Controller,
        train_cfg.target_shift,
        train_cfg.seq_len,
        cfg.dataset.test_fraction,
        cfg.run.seed ^ 0xC71,
    )?;
    let mut run = training::train_controller(
        &data.train.input_labels,
        &data.train.target_labels,
        &data.train.samples(),
        &data.val.samples(),
        train_cfg,
        integrator_block,
    )?;
    attach_norm(&mut run.net, &corpus.stats, Role::Controller)?;
    stamp_provenance(&mut run, train_cfg, &corpus.stats)?;
    Ok((run, data))
}

/// Build a corpus (stats over the union) from already-generated rounds.
pub fn corpus_from_rounds(rounds: Vec<Vec<Episode>>) -> Result<Corpus> {
    crate::dataset::aggregate_rounds(rounds)
}

/// Convenience: single-round corpus.
pub fn corpus_from_episodes(episodes: Vec<Episode>) -> Result<Corpus> {
    let stats = build_norm_stats(&episodes)?;
    Ok(Corpus { episodes, stats })
}

/// Deterministic variation used for closed-loop evaluation suites.
pub fn eval_variation(cfg: &PipelineConfig) -> VariationConfig {
    cfg.sim.variation.clone()
}

/// Evaluation sequences for an arbitrary checkpointed network: inputs are the
/// episode columns named by the network's input labels, normalized by the
/// network's own stored preprocessing; targets are chosen from its output
/// labels (`att_*` → filter attitude, `cmd_*` → expert torque commands,
/// `int_*` → integral terms). `shift` advances targets as in training.
pub struct EvalBatch {
    pub inputs: Vec<crate::linalg::Mat<f32>>,
    pub targets: Vec<crate::linalg::Mat<f32>>,
}

impl EvalBatch {
    pub fn samples(&self) -> Vec<crate::training::Sample<'_>> {
        self.inputs
            .iter()
            .zip(self.targets.iter())
            .map(|(inputs, targets)| crate::training::Sample { inputs, targets })
            .collect()
    }
}

pub fn eval_batch<'a>(
    net: &SpikingNetwork<f32>,
    episodes: impl IntoIterator<Item = &'a Episode>,
    shift: usize,
    seq_len: usize,
) -> Result<EvalBatch> {
    use crate::linalg::Mat;
    let labels = &net.input_labels;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let out0 = net
        .output_labels
        .first()
        .cloned()
        .unwrap_or_default();
    for ep in episodes {
        if !ep.sidecar.usable || ep.len() < seq_len + shift {
            continue;
        }
        let limits = ep.sidecar.model.torque_limit;
        let n_windows = (ep.len() - shift) / seq_len;
        for w in 0..n_windows {
            let start = w * seq_len;
            let mut x = Mat::zeros(seq_len, labels.len());
            for t in 0..seq_len {
                let row = &ep.rows[start + t];
                for (c, name) in labels.iter().enumerate() {
                    let raw = crate::dataset::input_value(row, name);
                    x.set(t, c, (raw - net.input_norm.offset[c]) / net.input_norm.scale[c]);
                }
            }
            let mut y = Mat::zeros(seq_len, net.n_outputs());
            for t in 0..seq_len {
                let row = &ep.rows[start + t + shift];
                for a in 0..net.n_outputs() {
                    let v = if out0.starts_with("att") {
                        row.est[a]
                    } else if out0.starts_with("cmd") {
                        row.expert_torque[a] / limits[a] as f32
                    } else if out0.starts_with("int") {
                        row.integral[a] / limits[a] as f32
                    } else {
                        return Err(Error::SchemaMismatch(format!(
                            "cannot derive evaluation targets for output channel `{out0}`"
                        )));
                    };
                    y.set(t, a, v);
                }
            }
            if out0.starts_with("att") {
                let first = y.get(0, 2);
                for t in 0..seq_len {
                    let v = y.get(t, 2) - first;
                    y.set(t, 2, v);
                }
            }
            if out0.starts_with("int") {
                let first: Vec<f32> = (0..net.n_outputs()).map(|a| y.get(0, a)).collect();
                for t in 0..seq_len {
                    for a in 0..net.n_outputs() {
                        let v = y.get(t, a) - first[a];
                        y.set(t, a, v);
                    }
                }
            }
            inputs.push(x);
            targets.push(y);
        }
    }
    if inputs.is_empty() {
        return Err(Error::InvalidSequence(
            "no usable evaluation sequences (episodes too short?)".into(),
        ));
    }
    Ok(EvalBatch { inputs, targets })
}
