//! Non-neural stand-ins for the hierarchical policy: k-NN skill policies
//! conditioned on a subgoal, and a masked nearest-exemplar meta-controller
//! that picks the skill and the subgoal at every step.

mod meta;
mod rows;
mod skill;

use thiserror::Error;

pub use meta::{masked_skill_logits, MetaController, MetaDecision, MetaRow};
pub use rows::{make_training_rows, subgoal_range, RowConfig, SegmentView, TrainingRow};
pub use skill::{SkillConfig, SkillPolicy, Standardizer};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("no training rows for skill {0}")]
    EmptyTrainingSet(usize),
    #[error("policy {0} has not been trained")]
    Untrained(usize),
    #[error("input has {found} values, policy expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("mask width {k_c} outside 1..={k_max}")]
    BadMaskWidth { k_c: usize, k_max: usize },
    #[error("mask may not narrow from {current} to {requested}")]
    MaskNarrowing { current: usize, requested: usize },
    #[error("label {label} not below mask width {k_c}")]
    LabelOutOfRange { label: usize, k_c: usize },
}
