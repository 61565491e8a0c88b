//! Corpus directories on disk.
//!
//! A corpus is a directory holding `meta.csv`
//! (`video_id,label,t_i,span_start,span_end`, span fields empty for normal
//! videos) plus one payload subdirectory: `features/` with one named-array
//! file per video, `events/` with raw EVS1 streams, or `frames/` with EVF1
//! frame tensors. Video ids are prefixed `train_` / `test_`. Loading an
//! event or frame corpus runs the fixed spiking encoder to recover clip
//! features.

use std::path::Path;

use ndarray::Ix3;
use thiserror::Error;

use crate::checkpoint::{load_named_arrays, write_named_arrays, CheckpointError};
use crate::event::{
    frame_tensor_from_bytes, frame_tensor_to_bytes, integrate_frames, parse_events, serialize_bin,
    EventError, EventFormat,
};
use crate::synth::{toy_encoder, EventCorpus, FeatureCorpus, SynthError, FRAMES_PER_CLIP};
use crate::training::{Label, VideoBag};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("meta.csv line {line}: {reason}")]
    Meta { line: usize, reason: String },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("missing {0}")]
    Missing(String),
    #[error("shape error: {0}")]
    Shape(String),
}

/// One `meta.csv` row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaRow {
    pub video_id: String,
    pub label: Label,
    pub clip_count: usize,
    pub span: Option<(usize, usize)>,
}

const META_HEADER: &str = "video_id,label,t_i,span_start,span_end";

pub fn write_meta(path: &Path, rows: &[MetaRow]) -> Result<(), CorpusError> {
    let mut out = String::from(META_HEADER);
    out.push('\n');
    for row in rows {
        let (s, e) = match row.span {
            Some((s, e)) => (s.to_string(), e.to_string()),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.video_id,
            row.label.as_u8(),
            row.clip_count,
            s,
            e
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<Vec<MetaRow>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if idx == 0 {
            if line.trim() != META_HEADER {
                return Err(CorpusError::Meta {
                    line: 1,
                    reason: format!("expected header {META_HEADER:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CorpusError::Meta {
                line: line_no,
                reason: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let err = |reason: String| CorpusError::Meta {
            line: line_no,
            reason,
        };
        let label_raw: u8 = fields[1]
            .parse()
            .map_err(|e| err(format!("label: {e}")))?;
        let label =
            Label::from_u8(label_raw).ok_or_else(|| err(format!("label {label_raw} not 0/1")))?;
        let clip_count: usize = fields[2]
            .parse()
            .map_err(|e| err(format!("t_i: {e}")))?;
        let span = match (fields[3].is_empty(), fields[4].is_empty()) {
            (true, true) => None,
            (false, false) => {
                let s: usize = fields[3]
                    .parse()
                    .map_err(|e| err(format!("span_start: {e}")))?;
                let e_: usize = fields[4]
                    .parse()
                    .map_err(|e| err(format!("span_end: {e}")))?;
                if s > e_ || e_ >= clip_count {
                    return Err(err(format!(
                        "span {s}..={e_} does not fit {clip_count} clips"
                    )));
                }
                Some((s, e_))
            }
            _ => {
                return Err(err(
                    "span_start and span_end must both be present or both empty".into(),
                ))
            }
        };
        if label.is_abnormal() != span.is_some() {
            return Err(err("label and span presence disagree".into()));
        }
        rows.push(MetaRow {
            video_id: fields[0].to_string(),
            label,
            clip_count,
            span,
        });
    }
    Ok(rows)
}

/// Writes `meta.csv` plus `features/<id>.msfw` files.
pub fn save_feature_corpus(dir: &Path, corpus: &FeatureCorpus) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir.join("features"))?;
    let mut rows = Vec::new();
    for video in corpus.train.iter().chain(&corpus.test) {
        rows.push(MetaRow {
            video_id: video.bag.video_id.clone(),
            label: video.bag.label,
            clip_count: video.bag.clip_count(),
            span: video.span,
        });
        let path = dir
            .join("features")
            .join(format!("{}.msfw", video.bag.video_id));
        write_named_arrays(&path, &[("features", &video.bag.features.clone().into_dyn())])?;
    }
    write_meta(&dir.join("meta.csv"), &rows)?;
    Ok(())
}

/// Writes `meta.csv` plus `events/<id>.evs` streams.
pub fn save_event_corpus(dir: &Path, corpus: &EventCorpus) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir.join("events"))?;
    let mut rows = Vec::new();
    for video in corpus.train.iter().chain(&corpus.test) {
        rows.push(MetaRow {
            video_id: video.video_id.clone(),
            label: video.label,
            clip_count: video.clips,
            span: video.span,
        });
        let path = dir.join("events").join(format!("{}.evs", video.video_id));
        std::fs::write(path, serialize_bin(&video.stream))?;
    }
    write_meta(&dir.join("meta.csv"), &rows)?;
    Ok(())
}

/// A test video with its frame-granularity ground truth still at clip
/// resolution.
#[derive(Debug, Clone)]
pub struct TestVideo {
    pub bag: VideoBag,
    pub clip_labels: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub train: Vec<VideoBag>,
    pub test: Vec<TestVideo>,
}

fn clip_labels_from(row: &MetaRow) -> Vec<bool> {
    let mut labels = vec![false; row.clip_count];
    if let Some((s, e)) = row.span {
        for l in labels.iter_mut().take(e + 1).skip(s) {
            *l = true;
        }
    }
    labels
}

fn split_rows(
    rows: Vec<MetaRow>,
    mut load_bag: impl FnMut(&MetaRow) -> Result<VideoBag, CorpusError>,
) -> Result<LoadedCorpus, CorpusError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for row in &rows {
        let bag = load_bag(row)?;
        if row.video_id.starts_with("train_") {
            train.push(bag);
        } else if row.video_id.starts_with("test_") {
            test.push(TestVideo {
                bag,
                clip_labels: clip_labels_from(row),
            });
        } else {
            return Err(CorpusError::Meta {
                line: 0,
                reason: format!(
                    "video id {:?} must start with train_ or test_",
                    row.video_id
                ),
            });
        }
    }
    Ok(LoadedCorpus { train, test })
}

pub fn load_feature_corpus(dir: &Path) -> Result<LoadedCorpus, CorpusError> {
    let rows = read_meta(&dir.join("meta.csv"))?;
    split_rows(rows, |row| {
        let path = dir.join("features").join(format!("{}.msfw", row.video_id));
        if !path.exists() {
            return Err(CorpusError::Missing(path.display().to_string()));
        }
        let arrays = load_named_arrays(&path)?;
        let features = arrays
            .into_iter()
            .find(|(n, _)| n == "features")
            .map(|(_, a)| a)
            .ok_or_else(|| CorpusError::Missing(format!("features array in {path:?}")))?;
        let features = features
            .into_dimensionality::<Ix3>()
            .map_err(|e| CorpusError::Shape(e.to_string()))?;
        if features.dim().1 != row.clip_count {
            return Err(CorpusError::Shape(format!(
                "{}: meta says {} clips, file has {}",
                row.video_id,
                row.clip_count,
                features.dim().1
            )));
        }
        Ok(VideoBag {
            video_id: row.video_id.clone(),
            label: row.label,
            features,
        })
    })
}

/// Integrates every event stream of `events_dir` into an EVF1 frame file
/// under `out_dir/frames`, carrying `meta.csv` over. Returns the number of
/// converted streams.
pub fn convert_events_to_frames(
    events_dir: &Path,
    out_dir: &Path,
    window_us: u64,
) -> Result<usize, CorpusError> {
    let rows = read_meta(&events_dir.join("meta.csv"))?;
    std::fs::create_dir_all(out_dir.join("frames"))?;
    for row in &rows {
        let path = events_dir.join("events").join(format!("{}.evs", row.video_id));
        if !path.exists() {
            return Err(CorpusError::Missing(path.display().to_string()));
        }
        let stream = parse_events(&std::fs::read(&path)?, EventFormat::Bin)?;
        let tensor = integrate_frames(&stream, window_us)?;
        std::fs::write(
            out_dir.join("frames").join(format!("{}.evf", row.video_id)),
            frame_tensor_to_bytes(&tensor),
        )?;
    }
    write_meta(&out_dir.join("meta.csv"), &rows)?;
    Ok(rows.len())
}

fn encoded_bag(
    row: &MetaRow,
    tensor: &crate::event::EventFrameTensor,
    t_sim: usize,
    d: usize,
) -> Result<VideoBag, CorpusError> {
    let features = toy_encoder(tensor, t_sim, d)?;
    let encoded_clips = features.dim().1;
    let expected = tensor.num_frames().div_ceil(FRAMES_PER_CLIP);
    if encoded_clips != expected {
        return Err(CorpusError::Shape(format!(
            "{}: encoder produced {} clips for {} frames",
            row.video_id,
            encoded_clips,
            tensor.num_frames()
        )));
    }
    if encoded_clips > row.clip_count {
        return Err(CorpusError::Shape(format!(
            "{}: meta says {} clips, stream encodes {}",
            row.video_id, row.clip_count, encoded_clips
        )));
    }
    Ok(VideoBag {
        video_id: row.video_id.clone(),
        label: row.label,
        features,
    })
}

/// Loads whatever payload the directory carries: `features/` directly,
/// `frames/` through the fixed encoder, or `events/` via integration plus
/// the encoder.
pub fn load_corpus_auto(
    dir: &Path,
    t_sim: usize,
    d: usize,
    window_us: u64,
) -> Result<LoadedCorpus, CorpusError> {
    if dir.join("features").is_dir() {
        return load_feature_corpus(dir);
    }
    let rows = read_meta(&dir.join("meta.csv"))?;
    if dir.join("frames").is_dir() {
        return split_rows(rows, |row| {
            let path = dir.join("frames").join(format!("{}.evf", row.video_id));
            if !path.exists() {
                return Err(CorpusError::Missing(path.display().to_string()));
            }
            let tensor = frame_tensor_from_bytes(&std::fs::read(&path)?)?;
            encoded_bag(row, &tensor, t_sim, d)
        });
    }
    if dir.join("events").is_dir() {
        return split_rows(rows, |row| {
            let path = dir.join("events").join(format!("{}.evs", row.video_id));
            if !path.exists() {
                return Err(CorpusError::Missing(path.display().to_string()));
            }
            let stream = parse_events(&std::fs::read(&path)?, EventFormat::Bin)?;
            let tensor = integrate_frames(&stream, window_us)?;
            encoded_bag(row, &tensor, t_sim, d)
        });
    }
    Err(CorpusError::Missing(format!(
        "{}: no features/, frames/, or events/ subdirectory",
        dir.display()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_event_corpus, gen_feature_corpus, SynthSpec};

    fn small_spec() -> SynthSpec {
        SynthSpec {
            n_train: 4,
            n_test: 3,
            clips_min: 6,
            clips_max: 9,
            span_min: 2,
            span_max: 3,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn meta_round_trips_with_and_without_spans() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            MetaRow {
                video_id: "train_000".into(),
                label: Label::Normal,
                clip_count: 12,
                span: None,
            },
            MetaRow {
                video_id: "test_001".into(),
                label: Label::Abnormal,
                clip_count: 9,
                span: Some((2, 5)),
            },
        ];
        let path = dir.path().join("meta.csv");
        write_meta(&path, &rows).unwrap();
        assert_eq!(read_meta(&path).unwrap(), rows);
    }

    #[test]
    fn meta_rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.csv");
        std::fs::write(&path, "wrong_header\n").unwrap();
        assert!(matches!(
            read_meta(&path),
            Err(CorpusError::Meta { line: 1, .. })
        ));
        std::fs::write(
            &path,
            format!("{META_HEADER}\ntrain_000,1,5,4,2\n"),
        )
        .unwrap();
        assert!(matches!(
            read_meta(&path),
            Err(CorpusError::Meta { line: 2, .. })
        ));
        std::fs::write(
            &path,
            format!("{META_HEADER}\ntrain_000,0,5,1,2\n"),
        )
        .unwrap();
        // A normal label cannot carry a span.
        assert!(read_meta(&path).is_err());
    }

    #[test]
    fn feature_corpus_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = gen_feature_corpus(&small_spec()).unwrap();
        save_feature_corpus(dir.path(), &corpus).unwrap();
        let loaded = load_feature_corpus(dir.path()).unwrap();
        assert_eq!(loaded.train.len(), 4);
        assert_eq!(loaded.test.len(), 3);
        for (orig, back) in corpus.train.iter().zip(&loaded.train) {
            assert_eq!(orig.bag.video_id, back.video_id);
            assert_eq!(orig.bag.label, back.label);
            // Feature values are binary, exact under the f32 round trip.
            assert_eq!(orig.bag.features, back.features);
        }
        for (orig, back) in corpus.test.iter().zip(&loaded.test) {
            assert_eq!(orig.clip_labels(), back.clip_labels);
        }
    }

    #[test]
    fn missing_feature_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = gen_feature_corpus(&small_spec()).unwrap();
        save_feature_corpus(dir.path(), &corpus).unwrap();
        std::fs::remove_file(dir.path().join("features/train_001.msfw")).unwrap();
        assert!(matches!(
            load_feature_corpus(dir.path()),
            Err(CorpusError::Missing(_))
        ));
    }

    #[test]
    fn event_corpus_converts_to_frames_and_loads_either_way() {
        let spec = SynthSpec {
            n_train: 2,
            n_test: 2,
            clips_min: 2,
            clips_max: 3,
            span_min: 1,
            span_max: 2,
            ..SynthSpec::default()
        };
        let corpus = gen_event_corpus(&spec, 16, 16, 1000).unwrap();
        let events_dir = tempfile::tempdir().unwrap();
        save_event_corpus(events_dir.path(), &corpus).unwrap();

        let frames_dir = tempfile::tempdir().unwrap();
        let converted =
            convert_events_to_frames(events_dir.path(), frames_dir.path(), 1000).unwrap();
        assert_eq!(converted, 4);

        let from_events = load_corpus_auto(events_dir.path(), 4, 16, 1000).unwrap();
        let from_frames = load_corpus_auto(frames_dir.path(), 4, 16, 1000).unwrap();
        assert_eq!(from_events.train.len(), from_frames.train.len());
        for (a, b) in from_events.train.iter().zip(&from_frames.train) {
            assert_eq!(a.features, b.features);
        }
    }
}
