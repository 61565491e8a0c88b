//! Multi-scale spiking fusion head.
//!
//! Clip features `[T_sim, t, D]` pass through three stages and a scorer:
//! pyramidal dilated convolutions with LIF neurons (local features), a
//! two-branch spiking graph convolution mixing clips by feature similarity
//! and temporal distance (global features), residual channel concatenation,
//! a convolutional recurrence over simulation steps blending each step with
//! its predecessor, and finally rate decoding into one sigmoid anomaly score
//! per clip.

pub mod adjacency;
mod forward;

use ndarray::{ArrayD, IxDyn};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use forward::{fuse_features, ParamVars};

#[derive(Debug, Error)]
pub enum MsfError {
    #[error("invalid hyperparameter: {0}")]
    BadHyper(String),
    #[error("bad feature shape: {0}")]
    FeatureShape(String),
    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
}

/// Architecture hyperparameters, all overridable from the key=value config.
#[derive(Debug, Clone, PartialEq)]
pub struct MsfHyper {
    /// Feature channels; must be divisible by 4.
    pub d: usize,
    /// Simulation steps of generated or encoded features.
    pub t_sim: usize,
    /// Pyramid kernel width (odd).
    pub omega: usize,
    /// Dilation per pyramid level.
    pub dilations: [usize; 3],
    /// History-path kernel width (odd).
    pub omega_tim: usize,
    /// History weight of the temporal interaction recurrence, in [0, 1].
    pub alpha: f64,
    /// Distance-adjacency scale.
    pub sigma: f64,
    /// LIF leak factor.
    pub tau: f64,
    /// LIF firing threshold.
    pub v_th: f64,
    /// Surrogate-gradient sharpness.
    pub beta: f64,
}

impl Default for MsfHyper {
    fn default() -> Self {
        Self {
            d: 16,
            t_sim: 4,
            omega: 3,
            dilations: [1, 2, 4],
            omega_tim: 3,
            alpha: 0.6,
            sigma: 1.0,
            tau: crate::snn::DEFAULT_TAU,
            v_th: crate::snn::DEFAULT_V_TH,
            beta: crate::snn::DEFAULT_BETA,
        }
    }
}

impl MsfHyper {
    pub fn validate(&self) -> Result<(), MsfError> {
        let fail = |msg: String| Err(MsfError::BadHyper(msg));
        if self.d == 0 || self.d % 4 != 0 {
            return fail(format!("d must be a positive multiple of 4, got {}", self.d));
        }
        if self.t_sim == 0 {
            return fail("t_sim must be at least 1".into());
        }
        if self.omega % 2 == 0 || self.omega_tim % 2 == 0 {
            return fail(format!(
                "kernel widths must be odd, got omega={} omega_tim={}",
                self.omega, self.omega_tim
            ));
        }
        if self.dilations.iter().any(|&d| d == 0) {
            return fail("dilations must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.sigma <= 0.0 {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return fail(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if self.v_th <= 0.0 {
            return fail(format!("v_th must be positive, got {}", self.v_th));
        }
        if self.beta <= 0.0 {
            return fail(format!("beta must be positive, got {}", self.beta));
        }
        Ok(())
    }
}

/// Which stages run; disabled stages degrade to shape-preserving stand-ins
/// (width-1 convolutions for the pyramid, no graph mixing, identity instead
/// of the recurrence), used by the ablation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelVariant {
    pub lsf: bool,
    pub gsf: bool,
    pub tim: bool,
}

impl Default for ModelVariant {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelVariant {
    pub fn full() -> Self {
        Self {
            lsf: true,
            gsf: true,
            tim: true,
        }
    }

    /// Single-stage variants plus `all`, as used by the module sweep.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "lsf" => Some(Self {
                lsf: true,
                gsf: false,
                tim: false,
            }),
            "gsf" => Some(Self {
                lsf: false,
                gsf: true,
                tim: false,
            }),
            "tim" => Some(Self {
                lsf: false,
                gsf: false,
                tim: true,
            }),
            "all" => Some(Self::full()),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match (self.lsf, self.gsf, self.tim) {
            (true, true, true) => "all".into(),
            (l, g, t) => {
                let mut parts = Vec::new();
                if l {
                    parts.push("lsf");
                }
                if g {
                    parts.push("gsf");
                }
                if t {
                    parts.push("tim");
                }
                if parts.is_empty() {
                    "none".into()
                } else {
                    parts.join("+")
                }
            }
        }
    }
}

/// Learnable weights. Fixed naming and ordering back the checkpoint format
/// and the optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct MsfParams {
    /// One `[D/4, D, omega]` kernel per pyramid level.
    pub lsf_kernels: [ArrayD<f64>; 3],
    /// `[D/4, D]` channel reduction feeding the graph branches.
    pub gsf_reduce: ArrayD<f64>,
    /// `[D/4, D/4]` map shared by both graph branches.
    pub gsf_w: ArrayD<f64>,
    /// `[D, omega_tim]` depthwise history kernel.
    pub tim_kernel: ArrayD<f64>,
    /// `[D]` scorer weight.
    pub scorer_w: ArrayD<f64>,
    /// `[1]` scorer bias.
    pub scorer_b: ArrayD<f64>,
}

fn kaiming_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> ArrayD<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-bound..bound))
}

impl MsfParams {
    /// Kaiming-uniform fan-in init for convolution and scorer weights, an
    /// identity center tap for the history kernel, and zero bias.
    pub fn init(hyper: &MsfHyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, quarter) = (hyper.d, hyper.d / 4);
        let lsf_kernels = [0, 1, 2].map(|_| {
            kaiming_uniform(&mut rng, &[quarter, d, hyper.omega], d * hyper.omega)
        });
        let gsf_reduce = kaiming_uniform(&mut rng, &[quarter, d], d);
        let gsf_w = kaiming_uniform(&mut rng, &[quarter, quarter], quarter);
        let mut tim_kernel = ArrayD::<f64>::zeros(IxDyn(&[d, hyper.omega_tim]));
        let center = hyper.omega_tim / 2;
        for c in 0..d {
            tim_kernel[[c, center]] = 1.0;
        }
        let scorer_w = kaiming_uniform(&mut rng, &[d], d);
        let scorer_b = ArrayD::zeros(IxDyn(&[1]));
        Self {
            lsf_kernels,
            gsf_reduce,
            gsf_w,
            tim_kernel,
            scorer_w,
            scorer_b,
        }
    }

    pub fn d(&self) -> usize {
        self.scorer_w.len()
    }

    /// Parameters in checkpoint/optimizer order.
    pub fn named(&self) -> Vec<(&'static str, &ArrayD<f64>)> {
        vec![
            ("lsf_kernel_p1", &self.lsf_kernels[0]),
            ("lsf_kernel_p2", &self.lsf_kernels[1]),
            ("lsf_kernel_p3", &self.lsf_kernels[2]),
            ("gsf_reduce", &self.gsf_reduce),
            ("gsf_w", &self.gsf_w),
            ("tim_kernel", &self.tim_kernel),
            ("scorer_w", &self.scorer_w),
            ("scorer_b", &self.scorer_b),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut ArrayD<f64>)> {
        let [p1, p2, p3] = &mut self.lsf_kernels;
        vec![
            ("lsf_kernel_p1", p1),
            ("lsf_kernel_p2", p2),
            ("lsf_kernel_p3", p3),
            ("gsf_reduce", &mut self.gsf_reduce),
            ("gsf_w", &mut self.gsf_w),
            ("tim_kernel", &mut self.tim_kernel),
            ("scorer_w", &mut self.scorer_w),
            ("scorer_b", &mut self.scorer_b),
        ]
    }
}

/// The full model: hyperparameters, stage toggles, and weights.
#[derive(Debug, Clone)]
pub struct MsfModel {
    pub hyper: MsfHyper,
    pub variant: ModelVariant,
    pub params: MsfParams,
}

impl MsfModel {
    pub fn init(hyper: MsfHyper, variant: ModelVariant, seed: u64) -> Result<Self, MsfError> {
        hyper.validate()?;
        let params = MsfParams::init(&hyper, seed);
        Ok(Self {
            hyper,
            variant,
            params,
        })
    }
}
