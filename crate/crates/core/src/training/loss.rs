//! MIL objectives.
//!
//! The top-k loss pushes the strongest instances of each bag toward the
//! video label (binary cross-entropy over the largest scores); the center
//! loss shrinks the score spread of normal videos (their population
//! variance) and is identically zero for abnormal ones. The total objective
//! is `mean(dmil) + lambda * mean(center)` over a batch.

use crate::msf::{MsfModel, ParamVars};
use crate::snn::tape::SCORE_CLAMP;
use crate::snn::{SpikeMode, Tape, Var};

use super::trainer::VideoBag;
use super::{Label, TrainError};

/// The `min(k, t)` largest scores, descending; ties resolve to the lower
/// clip index.
pub fn topk_scores(scores: &[f64], k: usize) -> Result<Vec<f64>, TrainError> {
    if scores.is_empty() {
        return Err(TrainError::EmptyScores);
    }
    if k == 0 {
        return Err(TrainError::BadTopK);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores must be finite")
            .then(a.cmp(&b))
    });
    order.truncate(k.min(scores.len()));
    Ok(order.into_iter().map(|i| scores[i]).collect())
}

/// Mean binary cross-entropy of the selected scores against the video
/// label, with scores clamped away from 0 and 1 to keep logs finite.
pub fn dmil_loss(selected: &[f64], label: Label) -> f64 {
    assert!(!selected.is_empty(), "loss over empty selection");
    let y = label.as_f64();
    let total: f64 = selected
        .iter()
        .map(|&s| {
            let sc = s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
            -(y * sc.ln() + (1.0 - y) * (1.0 - sc).ln())
        })
        .sum();
    total / selected.len() as f64
}

/// Population variance of a normal video's scores; exactly zero for
/// abnormal videos.
pub fn center_loss(scores: &[f64], label: Label) -> f64 {
    assert!(!scores.is_empty(), "loss over empty scores");
    if label.is_abnormal() {
        return 0.0;
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    scores.iter().map(|&s| (s - mean) * (s - mean)).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub dmil: f64,
    pub center: f64,
    pub total: f64,
}

/// Loss terms of a batch, recorded on a tape for backprop.
pub struct BatchLossVars {
    pub total: Var,
    pub dmil: Var,
    pub center: Var,
}

/// Builds the batch objective on the tape: forward every bag, select its
/// top-k scores, and combine the per-bag terms into batch means.
pub fn batch_loss_var(
    tape: &mut Tape,
    model: &MsfModel,
    pv: &ParamVars,
    batch: &[&VideoBag],
    k: usize,
    lambda: f64,
    mode: SpikeMode,
) -> Result<BatchLossVars, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if k == 0 {
        return Err(TrainError::BadTopK);
    }
    let n = batch.len() as f64;
    let mut dmil_acc: Option<Var> = None;
    let mut center_acc: Option<Var> = None;
    for bag in batch {
        let scores = model.scores_var(tape, pv, &bag.features, mode)?;
        let top = tape.topk(scores, k);
        let bce = tape.bce_mean(top, bag.label.as_f64());
        dmil_acc = Some(match dmil_acc {
            Some(acc) => tape.add(acc, bce),
            None => bce,
        });
        if !bag.label.is_abnormal() {
            let var = tape.variance(scores);
            center_acc = Some(match center_acc {
                Some(acc) => tape.add(acc, var),
                None => var,
            });
        }
    }
    let dmil = tape.scale(dmil_acc.expect("non-empty batch"), 1.0 / n);
    let center = match center_acc {
        Some(acc) => tape.scale(acc, 1.0 / n),
        None => tape.constant(ndarray::ArrayD::zeros(ndarray::IxDyn(&[]))),
    };
    let weighted = tape.scale(center, lambda);
    let total = tape.add(dmil, weighted);
    Ok(BatchLossVars {
        total,
        dmil,
        center,
    })
}

/// Batch objective without gradients: forwards every bag and reports the
/// mean loss terms.
pub fn total_loss(
    model: &MsfModel,
    batch: &[&VideoBag],
    k: usize,
    lambda: f64,
) -> Result<LossBreakdown, TrainError> {
    total_loss_with_mode(model, batch, k, lambda, SpikeMode::Binary)
}

/// Same as [`total_loss`] under the chosen spike semantics; the smoothed
/// variant backs finite-difference verification of the training gradients.
pub fn total_loss_with_mode(
    model: &MsfModel,
    batch: &[&VideoBag],
    k: usize,
    lambda: f64,
    mode: SpikeMode,
) -> Result<LossBreakdown, TrainError> {
    let mut tape = Tape::new();
    let pv = model.bind_params(&mut tape, false);
    let vars = batch_loss_var(&mut tape, model, &pv, batch, k, lambda, mode)?;
    Ok(LossBreakdown {
        dmil: tape.scalar(vars.dmil),
        center: tape.scalar(vars.center),
        total: tape.scalar(vars.total),
    })
}
