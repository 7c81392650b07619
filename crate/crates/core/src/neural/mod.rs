//! Attention-based SHPP reviser: model, training and checkpoints.

pub mod model;
pub mod train;

use std::path::Path;

pub use model::{coords_length, DecodeMode, DecodeOutput, DirDecode, Direction, ModelConfig, Policy};
pub use train::{
    batch_gradient, curriculum_stage2, sample_stage1_shpp, stage2_segments, surrogate_loss,
    train_stage1, train_step, Stage2Config, Stage2SizeReport, StepStats, TrainConfig, TrainReport,
};

use crate::checkpoint::Checkpoint;
use crate::error::Result;
use crate::shpp::{Reviser, ReviserInfo};
use crate::task::ShppTask;
use crate::types::PathOrder;

pub const CHECKPOINT_KIND: &str = "reviser";

pub fn save_policy(policy: &Policy, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::new(CHECKPOINT_KIND, &policy.cfg, &policy.params)?.save(path)
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<Policy> {
    let ck = Checkpoint::load(path)?;
    ck.expect_kind(CHECKPOINT_KIND)?;
    Policy::from_params(ck.config()?, ck.params())
}

/// Reviser that proposes the better of the two greedy decodes computed on
/// the task's transformed coordinates.
#[derive(Debug, Clone)]
pub struct NeuralReviser {
    pub policy: Policy,
}

impl NeuralReviser {
    pub fn new(policy: Policy) -> Self {
        NeuralReviser { policy }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(NeuralReviser { policy: load_policy(path)? })
    }
}

impl Reviser for NeuralReviser {
    fn info(&self) -> ReviserInfo {
        ReviserInfo {
            name: format!("neural-{}", self.policy.cfg.n),
            max_size: usize::MAX,
            supports_asymmetric: false,
            reads_coords: true,
        }
    }

    fn solve(&self, task: &ShppTask) -> Result<PathOrder> {
        let proposal = self.policy.inference(&task.coords)?;
        Ok(proposal)
    }
}
