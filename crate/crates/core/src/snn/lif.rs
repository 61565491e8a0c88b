//! Leaky integrate-and-fire dynamics.
//!
//! One step runs charge, fire, reset: the membrane charges as
//! `u' = tau * u + input`, fires a binary spike wherever `u' >= v_th`
//! (inclusive), and resets fired entries to zero (hard reset). Sequences fold
//! the step over axis 0 starting from a zero membrane.

use ndarray::{ArrayD, Axis, IxDyn};

use super::{SnnError, SpikeMode};

/// Membrane state of a population of LIF neurons.
#[derive(Debug, Clone)]
pub struct LifState {
    u: ArrayD<f64>,
    tau: f64,
    v_th: f64,
}

impl LifState {
    pub fn new(u: ArrayD<f64>, tau: f64, v_th: f64) -> Result<Self, SnnError> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(SnnError::BadTau(tau));
        }
        if v_th <= 0.0 {
            return Err(SnnError::BadThreshold(v_th));
        }
        Ok(Self { u, tau, v_th })
    }

    pub fn zeros(shape: &[usize], tau: f64, v_th: f64) -> Result<Self, SnnError> {
        Self::new(ArrayD::zeros(IxDyn(shape)), tau, v_th)
    }

    pub fn potentials(&self) -> &ArrayD<f64> {
        &self.u
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn v_th(&self) -> f64 {
        self.v_th
    }
}

/// A strictly binary spike array.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTensor(ArrayD<f64>);

impl SpikeTensor {
    /// Wraps values after checking every entry is exactly 0 or 1.
    pub fn from_values(values: ArrayD<f64>) -> Result<Self, SnnError> {
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(SnnError::NonBinary);
        }
        Ok(Self(values))
    }

    pub(crate) fn new_unchecked(values: ArrayD<f64>) -> Self {
        debug_assert!(values.iter().all(|&v| v == 0.0 || v == 1.0));
        Self(values)
    }

    pub fn values(&self) -> &ArrayD<f64> {
        &self.0
    }

    pub fn into_values(self) -> ArrayD<f64> {
        self.0
    }
}

/// Advances the membrane one step and returns the fired spikes with the
/// post-reset state.
pub fn lif_step(state: &LifState, input: &ArrayD<f64>) -> Result<(SpikeTensor, LifState), SnnError> {
    if state.u.shape() != input.shape() {
        return Err(SnnError::ShapeMismatch(format!(
            "state {:?} vs input {:?}",
            state.u.shape(),
            input.shape()
        )));
    }
    let mut charged = state.u.clone();
    charged.zip_mut_with(input, |u, &x| *u = state.tau * *u + x);
    let spikes = charged.mapv(|c| if c >= state.v_th { 1.0 } else { 0.0 });
    let mut reset = charged;
    reset.zip_mut_with(&spikes, |u, &o| *u *= 1.0 - o);
    Ok((
        SpikeTensor::new_unchecked(spikes),
        LifState {
            u: reset,
            tau: state.tau,
            v_th: state.v_th,
        },
    ))
}

/// Runs LIF over axis 0 of `inputs` from a zero membrane; equals folding
/// [`lif_step`] step by step.
pub fn lif_sequence(inputs: &ArrayD<f64>, tau: f64, v_th: f64) -> Result<SpikeTensor, SnnError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SnnError::BadTau(tau));
    }
    if v_th <= 0.0 {
        return Err(SnnError::BadThreshold(v_th));
    }
    if inputs.ndim() == 0 || inputs.shape()[0] == 0 {
        return Err(SnnError::EmptySequence);
    }
    let (spikes, _) = lif_forward_trace(inputs, tau, v_th, 1.0, SpikeMode::Binary);
    Ok(SpikeTensor::new_unchecked(spikes))
}

/// Derivative of the smoothed Heaviside `sigma(beta * x)`:
/// `beta * sigma * (1 - sigma)`. Used only in backward passes; forward spikes
/// stay exact.
pub fn surrogate_grad(u_minus_vth: &ArrayD<f64>, beta: f64) -> ArrayD<f64> {
    u_minus_vth.mapv(|x| surrogate_grad_scalar(x, beta))
}

pub(crate) fn surrogate_grad_scalar(x: f64, beta: f64) -> f64 {
    let s = sigmoid(beta * x);
    beta * s * (1.0 - s)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Shared forward recurrence over axis 0: returns per-step outputs and the
/// pre-reset membrane charges needed for backprop through time.
///
/// `Binary` emits exact Heaviside spikes; `Smoothed` replaces the spike
/// nonlinearity (including the reset factor) with `sigma(beta * (u - v_th))`,
/// giving a fully differentiable surrogate of the same recurrence.
pub(crate) fn lif_forward_trace(
    inputs: &ArrayD<f64>,
    tau: f64,
    v_th: f64,
    beta: f64,
    mode: SpikeMode,
) -> (ArrayD<f64>, ArrayD<f64>) {
    let steps = inputs.shape()[0];
    let mut outputs = ArrayD::<f64>::zeros(inputs.raw_dim());
    let mut charges = ArrayD::<f64>::zeros(inputs.raw_dim());
    let rest: Vec<usize> = inputs.shape()[1..].to_vec();
    let mut u = ArrayD::<f64>::zeros(IxDyn(&rest));
    for s in 0..steps {
        let x = inputs.index_axis(Axis(0), s);
        u.zip_mut_with(&x, |uv, &xv| *uv = tau * *uv + xv);
        charges.index_axis_mut(Axis(0), s).assign(&u);
        let o = match mode {
            SpikeMode::Binary => u.mapv(|c| if c >= v_th { 1.0 } else { 0.0 }),
            SpikeMode::Smoothed => u.mapv(|c| sigmoid(beta * (c - v_th))),
        };
        outputs.index_axis_mut(Axis(0), s).assign(&o);
        u.zip_mut_with(&o, |uv, &ov| *uv *= 1.0 - ov);
    }
    (outputs, charges)
}
