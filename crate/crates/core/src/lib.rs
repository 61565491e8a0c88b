//! Spiking-network toolkit for weakly-supervised anomaly detection on
//! event-camera streams.
//!
//! The crate follows the processing pipeline:
//!
//! - [`event`] — parse, validate, slice, and integrate raw DVS event streams
//!   into event-frame count tensors.
//! - [`snn`] — differentiable spiking primitives: LIF dynamics, dilated and
//!   pointwise 1D convolutions, and a reverse-mode gradient tape with
//!   surrogate spike gradients.
//! - [`msf`] — the multi-scale spiking fusion head: pyramidal local features,
//!   graph-based global features, a temporal interaction recurrence, and the
//!   sigmoid anomaly scorer.
//! - [`training`] — top-k MIL and center losses, Adam, balanced batching.
//! - [`eval`] — frame-level ROC AUC and false-alarm rate.
//! - [`synth`] — deterministic synthetic corpora with planted anomalies.
//! - [`checkpoint`], [`config`], [`corpus`] — on-disk formats.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod event;
pub mod msf;
pub mod snn;
pub mod synth;
pub mod training;

pub use config::RunConfig;
pub use event::{Event, EventFrameTensor, EventStream, Polarity};
pub use msf::{ModelVariant, MsfHyper, MsfModel, MsfParams};
pub use snn::{LifState, SpikeMode, SpikeTensor, Tape, Var};
pub use synth::{SynthSpec, FRAMES_PER_CLIP};
pub use training::{Label, TrainConfig, VideoBag};
