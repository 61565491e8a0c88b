// Scratch probe: intermittent anomaly spans (every other span clip active).
//   cargo run --release -p spikevad-core --example calibrate2 -- <lr> <epochs> <seed> <alpha>

use ndarray::Array3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use spikevad_core::eval::{expand_scores, far, roc_auc};
use spikevad_core::synth::{SynthSpec, FRAMES_PER_CLIP};
use spikevad_core::training::{train, Label, TrainConfig, VideoBag};
use spikevad_core::{ModelVariant, MsfHyper, MsfModel};

struct V {
    bag: VideoBag,
    labels: Vec<bool>,
}

fn gen(spec: &SynthSpec) -> (Vec<V>, Vec<V>, Vec<usize>) {
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut channels: Vec<usize> = (0..spec.d).collect();
    channels.shuffle(&mut master);
    let mut planted: Vec<usize> = channels.into_iter().take(spec.d / 4).collect();
    planted.sort_unstable();
    let mut split = |n: usize| -> Vec<V> {
        let n_abn = (n as f64 * spec.anomaly_fraction).round() as usize;
        (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(master.random());
                let clips = rng.random_range(spec.clips_min..=spec.clips_max);
                let mut f = Array3::from_shape_fn((spec.t_sim, clips, spec.d), |_| {
                    if rng.random_bool(spec.base_rate) { 1.0 } else { 0.0 }
                });
                let mut labels = vec![false; clips];
                if i < n_abn {
                    let len = rng.random_range(spec.span_min..=spec.span_max);
                    let start = rng.random_range(0..=clips - len);
                    for c in start..start + len {
                        labels[c] = true;
                        // Intermittent: only every other span clip is active.
                        if (c - start) % 2 == 0 {
                            for s in 0..spec.t_sim {
                                for &ch in &planted {
                                    f[[s, c, ch]] =
                                        if rng.random_bool(spec.anomaly_rate) { 1.0 } else { 0.0 };
                                }
                            }
                        }
                    }
                }
                V {
                    bag: VideoBag {
                        video_id: format!("v{i}"),
                        label: if i < n_abn { Label::Abnormal } else { Label::Normal },
                        features: f,
                    },
                    labels,
                }
            })
            .collect()
    };
    let train_v = split(spec.n_train);
    let test_v = split(spec.n_test);
    (train_v, test_v, planted)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(100);
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(7);
    let alpha: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.6);

    let spec = SynthSpec::default();
    let (train_v, test_v, _) = gen(&spec);
    let hyper = MsfHyper { alpha, ..MsfHyper::default() };
    let mut model = MsfModel::init(hyper, ModelVariant::full(), seed).unwrap();
    let bags: Vec<VideoBag> = train_v.iter().map(|v| v.bag.clone()).collect();
    let cfg = TrainConfig { lr, epochs, ..TrainConfig::new(epochs, seed) };
    train(&mut model, &bags, &cfg).unwrap();

    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for v in &test_v {
        let clip_scores = model.forward(&v.bag.features).unwrap();
        let total = clip_scores.len() * FRAMES_PER_CLIP;
        scores.extend(expand_scores(&clip_scores, FRAMES_PER_CLIP, total).unwrap());
        labels.extend((0..total).map(|f| v.labels[f / FRAMES_PER_CLIP]));
    }
    let auc = roc_auc(&scores, &labels).unwrap();
    let far_v = far(&scores, &labels, 0.5).unwrap();
    println!("intermittent: lr {lr} epochs {epochs} seed {seed} alpha {alpha}: AUC {auc:.4} FAR {far_v:.4}");
}
