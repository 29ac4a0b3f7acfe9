//! Declarative pipeline configuration. One file drives every subcommand;
//! unknown keys are rejected, and the defaults carry the reference constants
//! (500 Hz loop, 2000-step sequences, 6-step target shift, 150-150-130 →
//! 150-100-80 widths, 10 integrator neurons, surrogate slope 7).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sim::{DisturbanceConfig, ExpertConfig, ImuModel, QuadModel, VariationConfig};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Master seed; every stage derives from it.
    pub seed: u64,
    /// Worker threads (0 = one per core). Results do not depend on this.
    pub threads: usize,
    /// Force single-threaded reductions.
    pub deterministic: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            threads: 0,
            deterministic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub model: QuadModel,
    pub imu: ImuModel,
    pub expert: ExpertConfig,
    pub variation: VariationConfig,
    pub disturbance: DisturbanceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Flight minutes collected in the expert-flown round.
    pub round0_minutes: f64,
    /// Minutes flown by the first trained network (expert logged alongside).
    pub round1_minutes: f64,
    /// Minutes flown by the expert with command disturbances.
    pub round2_minutes: f64,
    /// Length of each recorded episode.
    pub episode_seconds: f64,
    /// Fraction of episodes held out, split by episode.
    pub test_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            round0_minutes: 20.0,
            round1_minutes: 5.0,
            round2_minutes: 5.0,
            episode_seconds: 60.0,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub estimator: TrainConfig,
    pub controller: TrainConfig,
    pub integrator: TrainConfig,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            estimator: TrainConfig::estimator(),
            controller: TrainConfig::controller(),
            integrator: TrainConfig::integrator(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComposeSection {
    /// Post-prune widths for the merged network.
    pub target_widths: Vec<usize>,
}

impl Default for ComposeSection {
    fn default() -> Self {
        ComposeSection {
            target_widths: vec![150, 100, 80],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Closed-loop repetitions per controller.
    pub n_runs: usize,
    /// Correlation-vs-shift half range (steps).
    pub max_shift: usize,
    /// Inference-benchmark step count.
    pub bench_steps: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_runs: 10,
            max_shift: 20,
            bench_steps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub run: RunSection,
    pub sim: SimSection,
    pub dataset: DatasetSection,
    pub training: TrainingSection,
    pub compose: ComposeSection,
    pub eval: EvalSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| crate::error::Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| crate::error::Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.model.validate()?;
        self.sim.imu.validate()?;
        self.training.estimator.validate()?;
        self.training.controller.validate()?;
        self.training.integrator.validate()?;
        self.sim.disturbance.validate()?;
        if self.compose.target_widths.is_empty() {
            return Err(crate::error::Error::Config("compose.target_widths empty".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> Result<String> {
        crate::hashing::json_hash(self)
    }
}
