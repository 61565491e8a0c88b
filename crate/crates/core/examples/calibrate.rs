// Scratch probe for picking desk-scale training settings. Not part of the
// deliverable surface; run with
//   cargo run --release -p spikevad-core --example calibrate -- <lr> <epochs> [seed]

use spikevad_core::eval::{expand_scores, far, roc_auc};
use spikevad_core::synth::{gen_feature_corpus, SynthSpec, FRAMES_PER_CLIP};
use spikevad_core::training::{train, TrainConfig, VideoBag};
use spikevad_core::{ModelVariant, MsfHyper, MsfModel};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(100);
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(7);
    let alpha: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.6);

    let start = std::time::Instant::now();
    let corpus = gen_feature_corpus(&SynthSpec::default()).unwrap();
    let hyper = MsfHyper {
        alpha,
        ..MsfHyper::default()
    };
    let mut model = MsfModel::init(hyper, ModelVariant::full(), seed).unwrap();
    let bags: Vec<VideoBag> = corpus.train.iter().map(|v| v.bag.clone()).collect();
    let cfg = TrainConfig {
        lr,
        epochs,
        ..TrainConfig::new(epochs, seed)
    };
    let history = train(&mut model, &bags, &cfg).unwrap();
    println!(
        "first loss {:.4} last loss {:.4}",
        history.first().unwrap().loss_total,
        history.last().unwrap().loss_total
    );

    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for v in &corpus.test {
        let clip_scores = model.forward(&v.bag.features).unwrap();
        let total = clip_scores.len() * FRAMES_PER_CLIP;
        scores.extend(expand_scores(&clip_scores, FRAMES_PER_CLIP, total).unwrap());
        let clip_labels = v.clip_labels();
        labels.extend((0..total).map(|f| clip_labels[f / FRAMES_PER_CLIP]));
    }
    let auc = roc_auc(&scores, &labels).unwrap();
    let far_v = far(&scores, &labels, 0.5).unwrap();
    println!(
        "lr {lr} epochs {epochs} seed {seed} alpha {alpha}: AUC {auc:.4} FAR {far_v:.4} in {:.1}s",
        start.elapsed().as_secs_f64()
    );
}
