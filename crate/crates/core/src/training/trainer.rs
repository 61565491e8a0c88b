//! Balanced-batch epoch loop.
//!
//! Each batch draws the same number of normal and abnormal videos; one epoch
//! issues `ceil(max(class sizes) / half_batch)` batches, sampling without
//! replacement inside each class and reshuffling a class when it runs out.
//! One trainer owns the parameters for the duration of an epoch.

use ndarray::{Array3, ArrayD};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::msf::MsfModel;
use crate::snn::{SpikeMode, Tape};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::batch_loss_var;
use super::{Label, TrainError};

/// One video as a bag of clip instances with its weak label.
#[derive(Debug, Clone)]
pub struct VideoBag {
    pub video_id: String,
    pub label: Label,
    /// `[T_sim, t, D]` clip features.
    pub features: Array3<f64>,
}

impl VideoBag {
    pub fn clip_count(&self) -> usize {
        self.features.dim().1
    }
}

/// Optimization settings; the non-obvious defaults are the published ones
/// (top-4 selection, center weight 20, Adam at 1e-4 with 5e-4 decay, and
/// 60-video batches split 30/30).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            k: 4,
            lambda: 20.0,
            lr: 1e-4,
            weight_decay: 5e-4,
            batch: 60,
            epochs,
            seed,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.batch < 2 || self.batch % 2 != 0 {
            return Err(TrainError::BadBatchSize(self.batch));
        }
        if self.k == 0 {
            return Err(TrainError::BadTopK);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub loss_dmil: f64,
    pub loss_center: f64,
    pub loss_total: f64,
}

/// Without-replacement sampler over one class, reshuffled on exhaustion.
struct ClassSampler {
    indices: Vec<usize>,
    pos: usize,
}

impl ClassSampler {
    fn new(mut indices: Vec<usize>, rng: &mut ChaCha8Rng) -> Self {
        indices.shuffle(rng);
        Self { indices, pos: 0 }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.indices.len() {
            self.indices.shuffle(rng);
            self.pos = 0;
        }
        let idx = self.indices[self.pos];
        self.pos += 1;
        idx
    }
}

fn plan_batches(
    normal: &[usize],
    abnormal: &[usize],
    half: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let n_batches = normal.len().max(abnormal.len()).div_ceil(half);
    let mut normals = ClassSampler::new(normal.to_vec(), rng);
    let mut abnormals = ClassSampler::new(abnormal.to_vec(), rng);
    (0..n_batches)
        .map(|_| {
            let mut batch: Vec<usize> = (0..half).map(|_| normals.next(rng)).collect();
            batch.extend((0..half).map(|_| abnormals.next(rng)));
            batch
        })
        .collect()
}

/// One pass over the corpus: balanced batches, forward, top-k/center loss,
/// backprop through time, Adam. Returns mean loss terms over the epoch's
/// batches. Fully deterministic given the caller's RNG state.
pub fn train_epoch(
    model: &mut MsfModel,
    corpus: &[VideoBag],
    cfg: &TrainConfig,
    adam: &mut AdamState,
    rng: &mut ChaCha8Rng,
) -> Result<EpochMetrics, TrainError> {
    cfg.validate()?;
    let normal: Vec<usize> = (0..corpus.len())
        .filter(|&i| !corpus[i].label.is_abnormal())
        .collect();
    let abnormal: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus[i].label.is_abnormal())
        .collect();
    if normal.is_empty() || abnormal.is_empty() {
        return Err(TrainError::ClassMissing {
            normal: normal.len(),
            abnormal: abnormal.len(),
        });
    }
    // The published half-batch of 30 assumes a corpus with hundreds of
    // videos per class; smaller corpora shrink it while keeping the split.
    let half = (cfg.batch / 2).min(normal.len()).min(abnormal.len());
    let batches = plan_batches(&normal, &abnormal, half, rng);
    let adam_cfg = AdamConfig::new(cfg.lr, cfg.weight_decay);

    let (mut dmil_sum, mut center_sum, mut total_sum) = (0.0, 0.0, 0.0);
    for batch in &batches {
        let bags: Vec<&VideoBag> = batch.iter().map(|&i| &corpus[i]).collect();
        let mut tape = Tape::new();
        let pv = model.bind_params(&mut tape, true);
        let losses =
            batch_loss_var(&mut tape, model, &pv, &bags, cfg.k, cfg.lambda, SpikeMode::Binary)?;
        dmil_sum += tape.scalar(losses.dmil);
        center_sum += tape.scalar(losses.center);
        total_sum += tape.scalar(losses.total);
        let store = tape.backward(losses.total)?;

        // ParamVars and MsfParams::named_mut list weights in the same order.
        let param_vars = [
            pv.lsf[0],
            pv.lsf[1],
            pv.lsf[2],
            pv.gsf_reduce,
            pv.gsf_w,
            pv.tim_kernel,
            pv.scorer_w,
            pv.scorer_b,
        ];
        let shapes: Vec<_> = model
            .params
            .named()
            .iter()
            .map(|(_, p)| p.raw_dim())
            .collect();
        let grads: Vec<ArrayD<f64>> = param_vars
            .iter()
            .zip(shapes)
            .map(|(v, shape)| {
                store
                    .wrt(*v)
                    .cloned()
                    .unwrap_or_else(|| ArrayD::zeros(shape))
            })
            .collect();
        let mut named = model.params.named_mut();
        let mut params: Vec<&mut ArrayD<f64>> =
            named.iter_mut().map(|(_, p)| &mut **p).collect();
        adam_step(&mut params, &grads, adam, &adam_cfg)?;
    }
    let n = batches.len() as f64;
    Ok(EpochMetrics {
        loss_dmil: dmil_sum / n,
        loss_center: center_sum / n,
        loss_total: total_sum / n,
    })
}

/// Runs `cfg.epochs` epochs from a fresh optimizer and the seed in `cfg`.
pub fn train(
    model: &mut MsfModel,
    corpus: &[VideoBag],
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>, TrainError> {
    cfg.validate()?;
    let param_refs: Vec<&ArrayD<f64>> = model.params.named().iter().map(|(_, p)| *p).collect();
    let mut adam = AdamState::new(&param_refs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        history.push(train_epoch(model, corpus, cfg, &mut adam, &mut rng)?);
    }
    Ok(history)
}
