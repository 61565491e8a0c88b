//! Differentiable spiking primitives: LIF dynamics with surrogate gradients,
//! 1D dilated/pointwise convolutions, and a reverse-mode gradient tape.

pub mod conv;
pub mod lif;
pub mod tape;

use thiserror::Error;

pub use conv::{depthwise_conv1d, dilated_conv1d, pointwise_conv};
pub use lif::{lif_sequence, lif_step, surrogate_grad, LifState, SpikeTensor};
pub use tape::{GradStore, SpikeMode, Tape, Var};

/// Default surrogate sharpness for the sigmoid-derivative spike gradient.
pub const DEFAULT_BETA: f64 = 4.0;
/// Default leak factor.
pub const DEFAULT_TAU: f64 = 0.625;
/// Default firing threshold.
pub const DEFAULT_V_TH: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("kernel width must be odd, got {0}")]
    EvenKernel(usize),
    #[error("dilation must be at least 1")]
    BadDilation,
    #[error("leak factor tau must lie in (0, 1), got {0}")]
    BadTau(f64),
    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("spike values must be binary")]
    NonBinary,
    #[error("step axis must be non-empty")]
    EmptySequence,
    #[error("gradient tape already consumed")]
    TapeConsumed,
}
