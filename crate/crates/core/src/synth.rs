//! Deterministic synthetic corpora with planted anomaly spans.
//!
//! Two generators share one spec: binary clip features drawn per-channel
//! (standing in for a pre-trained feature extractor) and raw event streams
//! with Poisson background plus a moving high-rate cluster inside anomalous
//! spans. A fixed, untrained spiking encoder turns event frames back into
//! clip features for end-to-end runs.

use ndarray::{Array2, Array3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::event::{Event, EventFrameTensor, EventStream, Polarity};
use crate::snn::{lif_sequence, DEFAULT_TAU, DEFAULT_V_TH};
use crate::training::{Label, VideoBag};

/// Clip granularity: one clip covers this many event frames.
pub const FRAMES_PER_CLIP: usize = 16;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    BadSpec(String),
    #[error("anomaly span {span_min}..={span_max} cannot fit in {clips_min}-clip videos")]
    InfeasibleSpan {
        span_min: usize,
        span_max: usize,
        clips_min: usize,
    },
    #[error("frame tensor has no frames")]
    EmptyFrames,
}

/// Corpus shape and anomaly-planting parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub clips_min: usize,
    pub clips_max: usize,
    pub d: usize,
    pub t_sim: usize,
    /// Fraction of videos carrying one anomalous span.
    pub anomaly_fraction: f64,
    pub span_min: usize,
    pub span_max: usize,
    /// Background spike probability (features) or window intensity scale
    /// (events).
    pub base_rate: f64,
    /// Spike probability on the planted channels inside the span.
    pub anomaly_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_train: 40,
            n_test: 20,
            clips_min: 30,
            clips_max: 60,
            d: 16,
            t_sim: 4,
            anomaly_fraction: 0.5,
            span_min: 5,
            span_max: 15,
            base_rate: 0.05,
            anomaly_rate: 0.5,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(SynthError::BadSpec("corpus sizes must be positive".into()));
        }
        if self.clips_min == 0 || self.clips_min > self.clips_max {
            return Err(SynthError::BadSpec(format!(
                "clip range {}..={} is empty",
                self.clips_min, self.clips_max
            )));
        }
        if self.d == 0 || self.d % 4 != 0 {
            return Err(SynthError::BadSpec(format!(
                "d must be a positive multiple of 4, got {}",
                self.d
            )));
        }
        if self.t_sim == 0 {
            return Err(SynthError::BadSpec("t_sim must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.anomaly_fraction) {
            return Err(SynthError::BadSpec(format!(
                "anomaly_fraction must lie in [0, 1], got {}",
                self.anomaly_fraction
            )));
        }
        if !(0.0 <= self.base_rate && self.base_rate < self.anomaly_rate && self.anomaly_rate <= 1.0)
        {
            return Err(SynthError::BadSpec(format!(
                "rates must satisfy 0 <= base ({}) < anomaly ({}) <= 1",
                self.base_rate, self.anomaly_rate
            )));
        }
        if self.span_min == 0 || self.span_min > self.span_max || self.span_max > self.clips_min {
            return Err(SynthError::InfeasibleSpan {
                span_min: self.span_min,
                span_max: self.span_max,
                clips_min: self.clips_min,
            });
        }
        Ok(())
    }
}

/// A generated video: the bag plus its planted span (inclusive clip range).
#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub bag: VideoBag,
    pub span: Option<(usize, usize)>,
}

impl SynthVideo {
    /// Per-clip ground truth derived from the span.
    pub fn clip_labels(&self) -> Vec<bool> {
        let t = self.bag.clip_count();
        let mut labels = vec![false; t];
        if let Some((start, end)) = self.span {
            for l in labels.iter_mut().take(end + 1).skip(start) {
                *l = true;
            }
        }
        labels
    }
}

#[derive(Debug, Clone)]
pub struct FeatureCorpus {
    pub train: Vec<SynthVideo>,
    pub test: Vec<SynthVideo>,
    /// Channel subset carrying the planted anomalies (one quarter of D).
    pub planted_channels: Vec<usize>,
}

fn gen_feature_video(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    planted: &[usize],
    video_id: String,
    abnormal: bool,
    intermittent: bool,
) -> SynthVideo {
    let clips = rng.random_range(spec.clips_min..=spec.clips_max);
    let mut features = Array3::from_shape_fn((spec.t_sim, clips, spec.d), |_| {
        if rng.random_bool(spec.base_rate) {
            1.0
        } else {
            0.0
        }
    });
    let span = abnormal.then(|| {
        let len = rng.random_range(spec.span_min..=spec.span_max);
        let start = rng.random_range(0..=clips - len);
        let end = start + len - 1;
        for s in 0..spec.t_sim {
            for clip in start..=end {
                if intermittent && (clip - start) % 2 == 1 {
                    continue;
                }
                for &c in planted {
                    features[[s, clip, c]] = if rng.random_bool(spec.anomaly_rate) {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
        }
        (start, end)
    });
    SynthVideo {
        bag: VideoBag {
            video_id,
            label: if abnormal {
                Label::Abnormal
            } else {
                Label::Normal
            },
            features,
        },
        span,
    }
}

/// Generates the train/test feature corpus. Every draw derives from
/// `spec.seed`; per-video RNGs split off the master stream so the corpus is
/// byte-reproducible.
pub fn gen_feature_corpus(spec: &SynthSpec) -> Result<FeatureCorpus, SynthError> {
    gen_feature_corpus_impl(spec, false)
}

/// Variant with intermittently visible anomalies: only every other span
/// clip carries the elevated activity while the whole span stays labeled
/// anomalous. Events that go quiet mid-anomaly are common in recorded
/// streams; detectors need temporal context to bridge the gaps, which makes
/// this corpus the direction probe for the module ablations.
pub fn gen_feature_corpus_intermittent(spec: &SynthSpec) -> Result<FeatureCorpus, SynthError> {
    gen_feature_corpus_impl(spec, true)
}

fn gen_feature_corpus_impl(
    spec: &SynthSpec,
    intermittent: bool,
) -> Result<FeatureCorpus, SynthError> {
    spec.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut channels: Vec<usize> = (0..spec.d).collect();
    channels.shuffle(&mut master);
    let mut planted: Vec<usize> = channels.into_iter().take(spec.d / 4).collect();
    planted.sort_unstable();

    let mut split = |prefix: &str, n: usize| -> Vec<SynthVideo> {
        let n_abnormal = (n as f64 * spec.anomaly_fraction).round() as usize;
        (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(master.random());
                gen_feature_video(
                    &mut rng,
                    spec,
                    &planted,
                    format!("{prefix}_{i:03}"),
                    i < n_abnormal,
                    intermittent,
                )
            })
            .collect()
    };
    let train = split("train", spec.n_train);
    let test = split("test", spec.n_test);
    Ok(FeatureCorpus {
        train,
        test,
        planted_channels: planted,
    })
}

/// A generated raw event-stream video.
#[derive(Debug, Clone)]
pub struct EventVideo {
    pub video_id: String,
    pub label: Label,
    pub span: Option<(usize, usize)>,
    pub clips: usize,
    pub stream: EventStream,
}

#[derive(Debug, Clone)]
pub struct EventCorpus {
    pub train: Vec<EventVideo>,
    pub test: Vec<EventVideo>,
    pub width: u16,
    pub height: u16,
    pub window_us: u64,
}

fn poisson(rng: &mut ChaCha8Rng, mut lambda: f64) -> usize {
    // Knuth's method, split to keep exp(-lambda) representable.
    let mut count = 0usize;
    while lambda > 400.0 {
        count += poisson(rng, 400.0);
        lambda -= 400.0;
    }
    if lambda <= 0.0 {
        return count;
    }
    let limit = (-lambda).exp();
    let mut product: f64 = rng.random();
    while product > limit {
        count += 1;
        product *= rng.random::<f64>();
    }
    count
}

fn gen_event_video(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    width: u16,
    height: u16,
    window_us: u64,
    video_id: String,
    abnormal: bool,
) -> EventVideo {
    let clips = rng.random_range(spec.clips_min..=spec.clips_max);
    let windows = clips * FRAMES_PER_CLIP;
    let span = abnormal.then(|| {
        let len = rng.random_range(spec.span_min..=spec.span_max);
        let start = rng.random_range(0..=clips - len);
        (start, start + len - 1)
    });
    let area = width as f64 * height as f64;
    let base_intensity = spec.base_rate * area;
    let cluster_intensity = spec.anomaly_rate * area;
    let (box_w, box_h) = ((width / 4).max(1), (height / 4).max(1));

    let mut events: Vec<Event> = Vec::new();
    for window in 0..windows {
        let t_base = window as u64 * window_us;
        for _ in 0..poisson(rng, base_intensity) {
            events.push(Event {
                t: t_base + rng.random_range(0..window_us),
                x: rng.random_range(0..width),
                y: rng.random_range(0..height),
                p: if rng.random_bool(0.5) {
                    Polarity::On
                } else {
                    Polarity::Off
                },
            });
        }
        let clip = window / FRAMES_PER_CLIP;
        let in_span = span.is_some_and(|(s, e)| clip >= s && clip <= e);
        if in_span {
            // High-rate cluster drifting across the sensor, one box position
            // per window.
            let x0 = ((window * 3) % (width - box_w + 1) as usize) as u16;
            let y0 = ((window * 2) % (height - box_h + 1) as usize) as u16;
            for _ in 0..poisson(rng, cluster_intensity) {
                events.push(Event {
                    t: t_base + rng.random_range(0..window_us),
                    x: x0 + rng.random_range(0..box_w),
                    y: y0 + rng.random_range(0..box_h),
                    p: if rng.random_bool(0.5) {
                        Polarity::On
                    } else {
                        Polarity::Off
                    },
                });
            }
        }
    }
    events.sort_by_key(|e| e.t);
    let stream = EventStream::new(width, height, events).expect("generated events are in bounds");
    EventVideo {
        video_id,
        label: if abnormal {
            Label::Abnormal
        } else {
            Label::Normal
        },
        span,
        clips,
        stream,
    }
}

/// Generates raw event-stream corpora exercising the parse/integrate/encode
/// path end to end.
pub fn gen_event_corpus(
    spec: &SynthSpec,
    width: u16,
    height: u16,
    window_us: u64,
) -> Result<EventCorpus, SynthError> {
    spec.validate()?;
    if width == 0 || height == 0 || window_us == 0 {
        return Err(SynthError::BadSpec(
            "sensor dimensions and window length must be positive".into(),
        ));
    }
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = |prefix: &str, n: usize| -> Vec<EventVideo> {
        let n_abnormal = (n as f64 * spec.anomaly_fraction).round() as usize;
        (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(master.random());
                gen_event_video(
                    &mut rng,
                    spec,
                    width,
                    height,
                    window_us,
                    format!("{prefix}_{i:03}"),
                    i < n_abnormal,
                )
            })
            .collect()
    };
    let train = split("train", spec.n_train);
    let test = split("test", spec.n_test);
    Ok(EventCorpus {
        train,
        test,
        width,
        height,
        window_us,
    })
}

/// Current gain of the fixed encoder; chosen so background activity spikes
/// sparsely and cluster activity saturates.
const ENCODER_GAIN: f64 = 20.0;
const ENCODER_SEED: u64 = 0x5EED_CAFE;
const POOL_GRID: usize = 4;

/// Fixed, untrained spiking encoder: pools each event frame's polarity
/// counts onto a 4x4 grid, projects the pooled vector to `d` channels with a
/// seeded non-negative matrix, groups frames into clips of
/// [`FRAMES_PER_CLIP`], and repeats each clip current over `t_sim` LIF steps.
///
/// Counts enter linearly with non-negative weights, so scaling all counts up
/// never decreases a clip's spike totals.
pub fn toy_encoder(
    frames: &EventFrameTensor,
    t_sim: usize,
    d: usize,
) -> Result<Array3<f64>, SynthError> {
    if frames.num_frames() == 0 {
        return Err(SynthError::EmptyFrames);
    }
    if t_sim == 0 || d == 0 {
        return Err(SynthError::BadSpec(
            "encoder needs t_sim >= 1 and d >= 1".into(),
        ));
    }
    let (j_total, h, w) = (frames.num_frames(), frames.height(), frames.width());
    let pooled_dim = 2 * POOL_GRID * POOL_GRID;

    // Per-frame pooled polarity counts, mean per cell within each band.
    let mut pooled = Array2::<f64>::zeros((j_total, pooled_dim));
    for j in 0..j_total {
        for p in 0..2 {
            for by in 0..POOL_GRID {
                for bx in 0..POOL_GRID {
                    let y0 = by * h / POOL_GRID;
                    let y1 = ((by + 1) * h / POOL_GRID).max(y0 + 1).min(h);
                    let x0 = bx * w / POOL_GRID;
                    let x1 = ((bx + 1) * w / POOL_GRID).max(x0 + 1).min(w);
                    let mut total = 0.0;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            total += frames.frames()[[j, p, y, x]] as f64;
                        }
                    }
                    let cells = ((y1 - y0) * (x1 - x0)) as f64;
                    pooled[[j, p * POOL_GRID * POOL_GRID + by * POOL_GRID + bx]] = total / cells;
                }
            }
        }
    }

    // Seeded non-negative projection with rows normalized to sum 1.
    let mut rng = ChaCha8Rng::seed_from_u64(ENCODER_SEED);
    let mut projection = Array2::<f64>::from_shape_fn((d, pooled_dim), |_| rng.random::<f64>());
    for mut row in projection.rows_mut() {
        let total: f64 = row.sum();
        row.mapv_inplace(|v| v / total);
    }

    let clips = j_total.div_ceil(FRAMES_PER_CLIP);
    let mut currents = Array2::<f64>::zeros((clips, d));
    for clip in 0..clips {
        let lo = clip * FRAMES_PER_CLIP;
        let hi = (lo + FRAMES_PER_CLIP).min(j_total);
        let group = (hi - lo) as f64;
        for c in 0..d {
            let mut acc = 0.0;
            for j in lo..hi {
                for i in 0..pooled_dim {
                    acc += projection[[c, i]] * pooled[[j, i]];
                }
            }
            currents[[clip, c]] = ENCODER_GAIN * acc / group;
        }
    }

    let mut input = Array3::<f64>::zeros((t_sim, clips, d));
    for s in 0..t_sim {
        input.index_axis_mut(ndarray::Axis(0), s).assign(&currents);
    }
    let spikes = lif_sequence(&input.clone().into_dyn(), DEFAULT_TAU, DEFAULT_V_TH)
        .expect("validated dims");
    Ok(spikes
        .into_values()
        .into_dimensionality::<ndarray::Ix3>()
        .expect("3-d spikes"))
}
