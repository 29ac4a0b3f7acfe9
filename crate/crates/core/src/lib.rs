//! Spiking neural networks for end-to-end quadrotor attitude estimation and
//! control: CUBA-LIF dynamics, surrogate-gradient BPTT imitation training
//! against a built-in 500 Hz simulator with a PID expert, sub-network merging
//! and contribution pruning, evaluation diagnostics, and an embedded export
//! format.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod compose;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod export;
pub mod hashing;
pub mod linalg;
pub mod manifest;
pub mod pipeline;
pub mod sim;
pub mod snn;
pub mod training;

pub use error::{Error, ErrorCategory, Result};
pub use linalg::{Mat, Real};
pub use snn::{InputNorm, LayerParams, LayerState, NetworkMeta, SpikeMode, SpikingNetwork};
