//! Weakly-supervised MIL training: video bags, the top-k and center losses,
//! Adam with L2 weight decay, and the balanced-batch epoch loop.

pub mod adam;
pub mod loss;
mod trainer;

use thiserror::Error;

use crate::msf::MsfError;
use crate::snn::SnnError;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{
    batch_loss_var, center_loss, dmil_loss, topk_scores, total_loss, BatchLossVars, LossBreakdown,
};
pub use trainer::{train, train_epoch, EpochMetrics, TrainConfig, VideoBag};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("score vector is empty")]
    EmptyScores,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("corpus needs both classes, got {normal} normal and {abnormal} abnormal videos")]
    ClassMissing { normal: usize, abnormal: usize },
    #[error("batch size must be an even number of at least 2, got {0}")]
    BadBatchSize(usize),
    #[error("top-k count must be at least 1")]
    BadTopK,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Model(#[from] MsfError),
    #[error(transparent)]
    Snn(#[from] SnnError),
}

/// Video-level weak label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Normal),
            1 => Some(Label::Abnormal),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Abnormal => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.as_u8() as f64
    }

    pub fn is_abnormal(self) -> bool {
        self == Label::Abnormal
    }
}
