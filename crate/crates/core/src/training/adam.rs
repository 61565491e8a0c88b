//! Adam with classic L2 weight decay folded into the gradient.

use ndarray::ArrayD;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// First/second moment estimates, one pair per parameter array.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[&ArrayD<f64>]) -> Self {
        Self {
            m: params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect(),
            v: params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update over aligned parameter/gradient lists.
pub fn adam_step(
    params: &mut [&mut ArrayD<f64>],
    grads: &[ArrayD<f64>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} params vs {} grads vs {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.shape() != grads[i].shape() || p.shape() != state.m[i].shape() {
            return Err(TrainError::ShapeMismatch(format!(
                "param {i}: {:?} vs grad {:?}",
                p.shape(),
                grads[i].shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for (i, param) in params.iter_mut().enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        ndarray::Zip::from(&mut **param)
            .and(&grads[i])
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                let g = g + cfg.weight_decay * *p;
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_without_decay_is_a_fixed_point() {
        let mut p = ArrayD::from_elem(IxDyn(&[3]), 1.5);
        let g = ArrayD::zeros(IxDyn(&[3]));
        let mut state = AdamState::new(&[&p]);
        let cfg = AdamConfig::new(0.1, 0.0);
        adam_step(&mut [&mut p], &[g], &mut state, &cfg).unwrap();
        assert!(p.iter().all(|&v| v == 1.5));
    }

    #[test]
    fn first_step_moves_by_roughly_lr() {
        let mut p = ArrayD::from_elem(IxDyn(&[1]), 0.0);
        let g = ArrayD::from_elem(IxDyn(&[1]), 1.0);
        let mut state = AdamState::new(&[&p]);
        let cfg = AdamConfig::new(0.1, 0.0);
        adam_step(&mut [&mut p], &[g], &mut state, &cfg).unwrap();
        // Bias-corrected m_hat / sqrt(v_hat) = 1, so the step is lr up to eps.
        assert!((p[[0]] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn matches_scalar_reference_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let n = 6;
        let p0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut p = ArrayD::from_shape_vec(IxDyn(&[n]), p0.clone()).unwrap();
        let mut state = AdamState::new(&[&p]);
        let cfg = AdamConfig::new(0.01, 0.005);

        let mut ref_p = p0;
        let mut ref_m = vec![0.0; n];
        let mut ref_v = vec![0.0; n];
        for step in 1..=5 {
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ga = ArrayD::from_shape_vec(IxDyn(&[n]), g.clone()).unwrap();
            adam_step(&mut [&mut p], &[ga], &mut state, &cfg).unwrap();
            for j in 0..n {
                let gd = g[j] + cfg.weight_decay * ref_p[j];
                ref_m[j] = cfg.beta1 * ref_m[j] + (1.0 - cfg.beta1) * gd;
                ref_v[j] = cfg.beta2 * ref_v[j] + (1.0 - cfg.beta2) * gd * gd;
                let m_hat = ref_m[j] / (1.0 - cfg.beta1.powi(step));
                let v_hat = ref_v[j] / (1.0 - cfg.beta2.powi(step));
                ref_p[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
            for j in 0..n {
                assert!((p[[j]] - ref_p[j]).abs() < 1e-14, "step {step} lane {j}");
            }
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut p = ArrayD::from_elem(IxDyn(&[2]), 0.0);
        let g = ArrayD::zeros(IxDyn(&[3]));
        let mut state = AdamState::new(&[&p]);
        let cfg = AdamConfig::new(0.1, 0.0);
        assert!(matches!(
            adam_step(&mut [&mut p], &[g], &mut state, &cfg),
            Err(TrainError::ShapeMismatch(_))
        ));
    }
}
