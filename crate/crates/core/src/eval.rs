//! Frame-level metrics: ROC AUC via the rank statistic and false-alarm rate
//! at a fixed threshold, with clip-to-frame score expansion.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("score vector is empty")]
    EmptyScores,
    #[error("frames per clip must be at least 1")]
    ZeroFramesPerClip,
    #[error("{clips} clips x {frames_per_clip} frames cannot cover {total} frames")]
    BadCoverage {
        clips: usize,
        frames_per_clip: usize,
        total: usize,
    },
    #[error("scores ({scores}) and labels ({labels}) disagree in length")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("AUC undefined: labels contain a single class")]
    SingleClass,
    #[error("false-alarm rate undefined without negative frames")]
    NoNegatives,
}

/// Replicates each clip score `frames_per_clip` times, truncating or padding
/// with the last score to exactly `total_frames`.
pub fn expand_scores(
    clip_scores: &[f64],
    frames_per_clip: usize,
    total_frames: usize,
) -> Result<Vec<f64>, EvalError> {
    if clip_scores.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    if frames_per_clip == 0 {
        return Err(EvalError::ZeroFramesPerClip);
    }
    if clip_scores.len() * frames_per_clip + frames_per_clip < total_frames {
        return Err(EvalError::BadCoverage {
            clips: clip_scores.len(),
            frames_per_clip,
            total: total_frames,
        });
    }
    let mut out = Vec::with_capacity(total_frames);
    for frame in 0..total_frames {
        let clip = (frame / frames_per_clip).min(clip_scores.len() - 1);
        out.push(clip_scores[clip]);
    }
    Ok(out)
}

/// Exact area under the ROC curve via the Mann-Whitney rank statistic; tied
/// scores contribute half credit through mid-ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Mid-ranks over tie groups, 1-based.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += mid_rank;
            }
        }
        i = j;
    }
    let np = positives as f64;
    let nn = negatives as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}

/// Fraction of normal frames scored at or above the threshold.
pub fn far(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let negatives = labels.iter().filter(|&&l| !l).count();
    if negatives == 0 {
        return Err(EvalError::NoNegatives);
    }
    let false_alarms = scores
        .iter()
        .zip(labels)
        .filter(|(s, &l)| !l && **s >= threshold)
        .count();
    Ok(false_alarms as f64 / negatives as f64)
}

/// Pooled frame-level report at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub auc: f64,
    pub far: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

pub fn report(scores: &[f64], labels: &[bool], threshold: f64) -> Result<MetricReport, EvalError> {
    let auc = roc_auc(scores, labels)?;
    let far = far(scores, labels, threshold)?;
    let mut counts = [0usize; 4];
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        match (l, predicted) {
            (true, true) => counts[0] += 1,
            (false, true) => counts[1] += 1,
            (false, false) => counts[2] += 1,
            (true, false) => counts[3] += 1,
        }
    }
    Ok(MetricReport {
        auc,
        far,
        true_positives: counts[0],
        false_positives: counts[1],
        true_negatives: counts[2],
        false_negatives: counts[3],
    })
}
