//! Stage-by-stage forward pass of the fusion head, recorded on a gradient
//! tape. Array-level entry points run the same code on a throwaway tape.

use ndarray::{Array3, ArrayD, Axis, Ix3};

use crate::snn::{SpikeMode, Tape, Var};

use super::adjacency::{distance_adjacency, row_softmax};
use super::{MsfError, MsfModel};

/// Tape handles of the learnable parameters, in checkpoint order.
pub struct ParamVars {
    pub lsf: [Var; 3],
    pub gsf_reduce: Var,
    pub gsf_w: Var,
    pub tim_kernel: Var,
    pub scorer_w: Var,
    pub scorer_b: Var,
}

fn to3(a: &ArrayD<f64>) -> Array3<f64> {
    a.clone().into_dimensionality::<Ix3>().expect("3-d value")
}

/// Residual channel concatenation of the pyramid block (three quarters of
/// the channels) with the graph block (the remaining quarter).
pub fn fuse_features(
    local: &Array3<f64>,
    global: &Array3<f64>,
) -> Result<Array3<f64>, MsfError> {
    let (ls, lt, lc) = local.dim();
    let (gs, gt, gc) = global.dim();
    if ls != gs || lt != gt {
        return Err(MsfError::FeatureShape(format!(
            "local {:?} and global {:?} disagree on steps or clips",
            local.dim(),
            global.dim()
        )));
    }
    if lc != 3 * gc {
        return Err(MsfError::ChannelMismatch {
            expected: 3 * gc,
            got: lc,
        });
    }
    let mut out = Array3::<f64>::zeros((ls, lt, lc + gc));
    out.slice_mut(ndarray::s![.., .., ..lc]).assign(local);
    out.slice_mut(ndarray::s![.., .., lc..]).assign(global);
    Ok(out)
}

impl MsfModel {
    /// Registers every learnable parameter on the tape; `trainable` decides
    /// whether gradients are retained for them.
    pub fn bind_params(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let put = |arr: &ArrayD<f64>, tape: &mut Tape| {
            if trainable {
                tape.param(arr.clone())
            } else {
                tape.constant(arr.clone())
            }
        };
        ParamVars {
            lsf: [
                put(&self.params.lsf_kernels[0], tape),
                put(&self.params.lsf_kernels[1], tape),
                put(&self.params.lsf_kernels[2], tape),
            ],
            gsf_reduce: put(&self.params.gsf_reduce, tape),
            gsf_w: put(&self.params.gsf_w, tape),
            tim_kernel: put(&self.params.tim_kernel, tape),
            scorer_w: put(&self.params.scorer_w, tape),
            scorer_b: put(&self.params.scorer_b, tape),
        }
    }

    pub fn validate_features(&self, f: &Array3<f64>) -> Result<(), MsfError> {
        let (steps, clips, d) = f.dim();
        if steps == 0 || clips == 0 {
            return Err(MsfError::FeatureShape(format!(
                "features need at least one step and one clip, got {:?}",
                f.dim()
            )));
        }
        if d != self.hyper.d {
            return Err(MsfError::ChannelMismatch {
                expected: self.hyper.d,
                got: d,
            });
        }
        Ok(())
    }

    /// Pyramid stage: per level, a dilated convolution over the clip axis
    /// followed by LIF over the step axis; levels concatenate to three
    /// quarters of the channels. With the stage disabled each level shrinks
    /// to its center tap.
    pub fn local_features_var(
        &self,
        tape: &mut Tape,
        pv: &ParamVars,
        f: Var,
        mode: SpikeMode,
    ) -> Var {
        let h = &self.hyper;
        let mut level_outputs = Vec::with_capacity(3);
        for level in 0..3 {
            let (kernel, dilation) = if self.variant.lsf {
                (pv.lsf[level], h.dilations[level])
            } else {
                (tape.center_tap(pv.lsf[level]), 1)
            };
            let conv = tape.conv1d(f, kernel, dilation);
            level_outputs.push(tape.lif(conv, h.tau, h.v_th, h.beta, mode));
        }
        tape.concat_channels(&level_outputs)
    }

    /// Graph stage: reduce channels, mix clips through the softmax-normalized
    /// similarity and distance adjacencies sharing one learnable map, average
    /// the two branches, then LIF over the step axis. With the stage disabled
    /// the reduced features feed LIF directly.
    pub fn global_features_var(
        &self,
        tape: &mut Tape,
        pv: &ParamVars,
        f: Var,
        mode: SpikeMode,
    ) -> Var {
        let h = &self.hyper;
        let (steps, clips) = {
            let shape = tape.value(f).shape();
            (shape[0], shape[1])
        };
        let reduced = tape.pointwise(f, pv.gsf_reduce);
        let pre = if self.variant.gsf {
            let sim = tape.cosine_rows(reduced);
            let a_sim = tape.softmax_rows(sim);
            let dis = row_softmax(
                distance_adjacency(clips, h.sigma)
                    .expect("validated upstream")
                    .view(),
            );
            let mut dis_full = Array3::<f64>::zeros((steps, clips, clips));
            for s in 0..steps {
                dis_full.index_axis_mut(Axis(0), s).assign(&dis);
            }
            let a_dis = tape.constant(dis_full.into_dyn());
            let mixed_sim = tape.bmm(a_sim, reduced);
            let mixed_dis = tape.bmm(a_dis, reduced);
            let branch_sim = tape.matmul_right(mixed_sim, pv.gsf_w);
            let branch_dis = tape.matmul_right(mixed_dis, pv.gsf_w);
            let both = tape.add(branch_sim, branch_dis);
            tape.scale(both, 0.5)
        } else {
            reduced
        };
        tape.lif(pre, h.tau, h.v_th, h.beta, mode)
    }

    /// Step-axis recurrence blending each step with a depthwise convolution
    /// of the previous state. `alpha = 0` (or a disabled stage) passes the
    /// input through untouched.
    pub fn temporal_interaction_var(&self, tape: &mut Tape, pv: &ParamVars, fused: Var) -> Var {
        let alpha = self.hyper.alpha;
        if !self.variant.tim || alpha == 0.0 {
            return fused;
        }
        let steps = tape.value(fused).shape()[0];
        let first = tape.slice_step(fused, 0);
        let mut state = tape.scale(first, 1.0 - alpha);
        let mut states = vec![state];
        for s in 1..steps {
            let conv = tape.dwconv(state, pv.tim_kernel);
            let history = tape.scale(conv, alpha);
            let current = tape.slice_step(fused, s);
            let current = tape.scale(current, 1.0 - alpha);
            state = tape.add(history, current);
            states.push(state);
        }
        tape.stack_steps(&states)
    }

    /// Rate decoding over the step axis, affine map, sigmoid.
    pub fn score_var(&self, tape: &mut Tape, pv: &ParamVars, features: Var) -> Var {
        let rate = tape.mean_axis0(features);
        let logits = tape.affine_vec(rate, pv.scorer_w, pv.scorer_b);
        tape.sigmoid(logits)
    }

    /// Full head on the tape: scores of every clip for one video.
    pub fn scores_var(
        &self,
        tape: &mut Tape,
        pv: &ParamVars,
        f: &Array3<f64>,
        mode: SpikeMode,
    ) -> Result<Var, MsfError> {
        self.validate_features(f)?;
        let fv = tape.constant(f.clone().into_dyn());
        let local = self.local_features_var(tape, pv, fv, mode);
        let global = self.global_features_var(tape, pv, fv, mode);
        let fused = tape.concat_channels(&[local, global]);
        let mixed = self.temporal_interaction_var(tape, pv, fused);
        Ok(self.score_var(tape, pv, mixed))
    }

    fn run_stage(
        &self,
        f: &Array3<f64>,
        stage: impl FnOnce(&Self, &mut Tape, &ParamVars, Var) -> Var,
    ) -> Array3<f64> {
        let mut tape = Tape::new();
        let pv = self.bind_params(&mut tape, false);
        let fv = tape.constant(f.clone().into_dyn());
        let out = stage(self, &mut tape, &pv, fv);
        to3(tape.value(out))
    }

    /// Binary local spiking features, `[T_sim, t, 3D/4]`.
    pub fn local_features(&self, f: &Array3<f64>) -> Result<Array3<f64>, MsfError> {
        self.validate_features(f)?;
        Ok(self.run_stage(f, |m, tape, pv, fv| {
            m.local_features_var(tape, pv, fv, SpikeMode::Binary)
        }))
    }

    /// Binary global spiking features, `[T_sim, t, D/4]`.
    pub fn global_features(&self, f: &Array3<f64>) -> Result<Array3<f64>, MsfError> {
        self.validate_features(f)?;
        Ok(self.run_stage(f, |m, tape, pv, fv| {
            m.global_features_var(tape, pv, fv, SpikeMode::Binary)
        }))
    }

    /// Real-valued output of the temporal recurrence on fused features.
    pub fn temporal_interaction(&self, fused: &Array3<f64>) -> Result<Array3<f64>, MsfError> {
        let (steps, clips, d) = fused.dim();
        if steps == 0 || clips == 0 {
            return Err(MsfError::FeatureShape(format!(
                "fused features need at least one step and one clip, got {:?}",
                fused.dim()
            )));
        }
        if d != self.hyper.d {
            return Err(MsfError::ChannelMismatch {
                expected: self.hyper.d,
                got: d,
            });
        }
        Ok(self.run_stage(fused, |m, tape, pv, fv| {
            m.temporal_interaction_var(tape, pv, fv)
        }))
    }

    /// Per-clip anomaly scores in `(0, 1)` for already-mixed features.
    pub fn score(&self, features: &Array3<f64>) -> Result<Vec<f64>, MsfError> {
        let (steps, clips, d) = features.dim();
        if steps == 0 || clips == 0 {
            return Err(MsfError::FeatureShape(format!(
                "features need at least one step and one clip, got {:?}",
                features.dim()
            )));
        }
        if d != self.hyper.d {
            return Err(MsfError::ChannelMismatch {
                expected: self.hyper.d,
                got: d,
            });
        }
        let mut tape = Tape::new();
        let pv = self.bind_params(&mut tape, false);
        let fv = tape.constant(features.clone().into_dyn());
        let scores = self.score_var(&mut tape, &pv, fv);
        Ok(tape.value(scores).iter().copied().collect())
    }

    /// End-to-end forward: one anomaly score per clip.
    pub fn forward(&self, f: &Array3<f64>) -> Result<Vec<f64>, MsfError> {
        let mut tape = Tape::new();
        let pv = self.bind_params(&mut tape, false);
        let scores = self.scores_var(&mut tape, &pv, f, SpikeMode::Binary)?;
        Ok(tape.value(scores).iter().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msf::adjacency::similarity_adjacency;
    use crate::msf::{ModelVariant, MsfHyper};
    use crate::snn::{dilated_conv1d, pointwise_conv};
    use ndarray::{Array2, Array3};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn model_with(d: usize, t_sim: usize, seed: u64) -> MsfModel {
        let hyper = MsfHyper {
            d,
            t_sim,
            ..MsfHyper::default()
        };
        MsfModel::init(hyper, ModelVariant::full(), seed).unwrap()
    }

    fn random_binary(rng: &mut ChaCha8Rng, steps: usize, clips: usize, d: usize) -> Array3<f64> {
        Array3::from_shape_fn((steps, clips, d), |_| {
            if rng.random_bool(0.4) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Scalar LIF reference: integrates over axis 0 independently per cell.
    fn lif_loop(input: &Array3<f64>, tau: f64, v_th: f64) -> Array3<f64> {
        let (steps, t, c) = input.dim();
        let mut out = Array3::<f64>::zeros((steps, t, c));
        for i in 0..t {
            for j in 0..c {
                let mut u = 0.0f64;
                for s in 0..steps {
                    u = tau * u + input[[s, i, j]];
                    let o = if u >= v_th { 1.0 } else { 0.0 };
                    out[[s, i, j]] = o;
                    u *= 1.0 - o;
                }
            }
        }
        out
    }

    #[test]
    fn zero_input_stays_silent_through_both_spiking_stages() {
        let model = model_with(16, 4, 1);
        let f = Array3::<f64>::zeros((4, 6, 16));
        assert!(model
            .local_features(&f)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        assert!(model
            .global_features(&f)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        // Zero rates meet a zero-initialized bias: every score is 1/2.
        for s in model.forward(&f).unwrap() {
            assert_eq!(s, 0.5);
        }
    }

    #[test]
    fn single_clip_video_scores_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = model_with(16, 3, 3);
        let f = random_binary(&mut rng, 3, 1, 16);
        let scores = model.forward(&f).unwrap();
        assert_eq!(scores.len(), 1);
        assert!(scores[0] > 0.0 && scores[0] < 1.0);
    }

    #[test]
    fn local_features_match_conv_plus_scalar_lif_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = model_with(16, 2, 5);
        let f = random_binary(&mut rng, 2, 8, 16);
        let got = model.local_features(&f).unwrap();
        let h = &model.hyper;
        for level in 0..3 {
            let kernel = model.params.lsf_kernels[level]
                .clone()
                .into_dimensionality::<ndarray::Ix3>()
                .unwrap();
            let mut conv = Array3::<f64>::zeros((2, 8, 4));
            for s in 0..2 {
                let res = dilated_conv1d(
                    f.index_axis(Axis(0), s),
                    kernel.view(),
                    h.dilations[level],
                )
                .unwrap();
                conv.index_axis_mut(Axis(0), s).assign(&res);
            }
            let spikes = lif_loop(&conv, h.tau, h.v_th);
            let block = got.slice(ndarray::s![.., .., level * 4..(level + 1) * 4]);
            assert_eq!(block, spikes.view());
        }
    }

    #[test]
    fn local_features_on_single_clip_equal_center_tap_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = model_with(16, 3, 7);
        let f = random_binary(&mut rng, 3, 1, 16);
        let got = model.local_features(&f).unwrap();
        let h = &model.hyper;
        for level in 0..3 {
            let kernel = &model.params.lsf_kernels[level];
            let center = h.omega / 2;
            let weight = Array2::from_shape_fn((4, 16), |(p, d)| kernel[[p, d, center]]);
            let mut conv = Array3::<f64>::zeros((3, 1, 4));
            for s in 0..3 {
                let res = pointwise_conv(f.index_axis(Axis(0), s), weight.view()).unwrap();
                conv.index_axis_mut(Axis(0), s).assign(&res);
            }
            let spikes = lif_loop(&conv, h.tau, h.v_th);
            let block = got.slice(ndarray::s![.., .., level * 4..(level + 1) * 4]);
            assert_eq!(block, spikes.view());
        }
    }

    #[test]
    fn global_features_match_stepwise_reference_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = model_with(16, 2, 9);
        let f = random_binary(&mut rng, 2, 5, 16);
        let got = model.global_features(&f).unwrap();
        let h = &model.hyper;

        let reduce = model
            .params
            .gsf_reduce
            .clone()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let w = model
            .params
            .gsf_w
            .clone()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let a_dis = row_softmax(distance_adjacency(5, h.sigma).unwrap().view());
        let mut pre = Array3::<f64>::zeros((2, 5, 4));
        for s in 0..2 {
            let reduced = pointwise_conv(f.index_axis(Axis(0), s), reduce.view()).unwrap();
            let a_sim = row_softmax(similarity_adjacency(reduced.view()).view());
            let branch_sim = a_sim.dot(&reduced).dot(&w);
            let branch_dis = a_dis.dot(&reduced).dot(&w);
            pre.index_axis_mut(Axis(0), s)
                .assign(&(0.5 * (&branch_sim + &branch_dis)));
        }
        let expect = lif_loop(&pre, h.tau, h.v_th);
        assert_eq!(got, expect);
    }

    #[test]
    fn global_features_on_single_clip_reduce_to_mapped_features() {
        // With one clip both softmaxed adjacencies are [[1]].
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let model = model_with(16, 3, 11);
        let f = random_binary(&mut rng, 3, 1, 16);
        let got = model.global_features(&f).unwrap();
        let reduce = model
            .params
            .gsf_reduce
            .clone()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let w = model
            .params
            .gsf_w
            .clone()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap();
        let mut pre = Array3::<f64>::zeros((3, 1, 4));
        for s in 0..3 {
            let reduced = pointwise_conv(f.index_axis(Axis(0), s), reduce.view()).unwrap();
            pre.index_axis_mut(Axis(0), s).assign(&reduced.dot(&w));
        }
        let expect = lif_loop(&pre, model.hyper.tau, model.hyper.v_th);
        assert_eq!(got, expect);
    }

    #[test]
    fn fuse_concatenates_and_splits_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let local = Array3::from_shape_fn((2, 4, 12), |_| rng.random_range(-1.0..1.0));
        let global = Array3::from_shape_fn((2, 4, 4), |_| rng.random_range(-1.0..1.0));
        let fused = fuse_features(&local, &global).unwrap();
        assert_eq!(fused.dim(), (2, 4, 16));
        assert_eq!(fused.slice(ndarray::s![.., .., ..12]), local.view());
        assert_eq!(fused.slice(ndarray::s![.., .., 12..]), global.view());
        for (s, t, c) in [(0usize, 1usize, 3usize), (1, 2, 14)] {
            let expect = if c < 12 {
                local[[s, t, c]]
            } else {
                global[[s, t, c - 12]]
            };
            assert_eq!(fused[[s, t, c]], expect);
        }

        let ones = Array3::<f64>::ones((1, 2, 6));
        let ones_g = Array3::<f64>::ones((1, 2, 2));
        assert!(fuse_features(&ones, &ones_g)
            .unwrap()
            .iter()
            .all(|&v| v == 1.0));

        let bad = Array3::<f64>::zeros((2, 4, 10));
        assert!(matches!(
            fuse_features(&bad, &global),
            Err(MsfError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn temporal_interaction_with_zero_alpha_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut model = model_with(16, 4, 15);
        model.hyper.alpha = 0.0;
        let fused = Array3::from_shape_fn((4, 5, 16), |_| rng.random_range(-2.0..2.0));
        let out = model.temporal_interaction(&fused).unwrap();
        assert_eq!(out, fused);
    }

    #[test]
    fn temporal_interaction_single_step_scales_first_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let model = model_with(16, 1, 17);
        let fused = Array3::from_shape_fn((1, 3, 16), |_| rng.random_range(-1.0..1.0));
        let out = model.temporal_interaction(&fused).unwrap();
        let expect = fused.mapv(|v| 0.4 * v);
        for (a, b) in out.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn temporal_interaction_matches_hand_unrolled_recurrence() {
        // Identity history kernel makes conv(state) = state away from
        // boundaries; with a width-3 center-tap kernel it holds everywhere.
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let model = model_with(16, 3, 19);
        assert_eq!(model.hyper.alpha, 0.6);
        let fused = Array3::from_shape_fn((3, 4, 16), |_| rng.random_range(-1.0..1.0));
        let out = model.temporal_interaction(&fused).unwrap();
        let alpha = 0.6;
        let mut state = fused.index_axis(Axis(0), 0).mapv(|v| (1.0 - alpha) * v);
        for (a, b) in out.index_axis(Axis(0), 0).iter().zip(state.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        for s in 1..3 {
            state = state.mapv(|v| alpha * v)
                + fused.index_axis(Axis(0), s).mapv(|v| (1.0 - alpha) * v);
            for (a, b) in out.index_axis(Axis(0), s).iter().zip(state.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scorer_on_zero_features_with_zero_params_gives_half() {
        let mut model = model_with(16, 2, 20);
        model.params.scorer_w.fill(0.0);
        model.params.scorer_b.fill(0.0);
        let features = Array3::<f64>::zeros((2, 7, 16));
        for s in model.score(&features).unwrap() {
            assert_eq!(s, 0.5);
        }
    }

    #[test]
    fn scorer_saturates_on_large_logits() {
        let mut model = model_with(16, 1, 21);
        model.params.scorer_w.fill(10.0);
        model.params.scorer_b.fill(0.0);
        let features = Array3::<f64>::ones((1, 2, 16));
        for s in model.score(&features).unwrap() {
            assert!(s > 1.0 - 1e-9);
        }
    }

    #[test]
    fn scorer_matches_rate_affine_sigmoid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let model = model_with(16, 3, 23);
        let features = Array3::from_shape_fn((3, 5, 16), |_| rng.random_range(-1.0..1.0));
        let got = model.score(&features).unwrap();
        for i in 0..5 {
            let mut logit = model.params.scorer_b[[0]];
            for d in 0..16 {
                let rate: f64 = (0..3).map(|s| features[[s, i, d]]).sum::<f64>() / 3.0;
                logit += model.params.scorer_w[[d]] * rate;
            }
            let expect = 1.0 / (1.0 + (-logit).exp());
            assert!((got[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_equals_stage_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let model = model_with(16, 2, 25);
        let f = random_binary(&mut rng, 2, 6, 16);
        let direct = model.forward(&f).unwrap();
        let local = model.local_features(&f).unwrap();
        let global = model.global_features(&f).unwrap();
        let fused = fuse_features(&local, &global).unwrap();
        let mixed = model.temporal_interaction(&fused).unwrap();
        let composed = model.score(&mixed).unwrap();
        assert_eq!(direct, composed);
    }

    #[test]
    fn local_features_shift_with_the_clip_axis_away_from_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let model = model_with(16, 2, 27);
        let t = 20;
        let f = random_binary(&mut rng, 2, t, 16);
        let mut shifted = Array3::<f64>::zeros((2, t, 16));
        shifted
            .slice_mut(ndarray::s![.., 1.., ..])
            .assign(&f.slice(ndarray::s![.., ..t - 1, ..]));
        let out = model.local_features(&f).unwrap();
        let out_shifted = model.local_features(&shifted).unwrap();
        // Widest level: (omega - 1) * 4 / 2 + 1 = 5 boundary columns.
        let margin = 5;
        for i in margin..t - margin {
            assert_eq!(
                out_shifted.slice(ndarray::s![.., i, ..]),
                out.slice(ndarray::s![.., i - 1, ..])
            );
        }
    }

    #[test]
    fn forward_rejects_wrong_channel_count() {
        let model = model_with(16, 2, 28);
        let f = Array3::<f64>::zeros((2, 4, 12));
        assert!(matches!(
            model.forward(&f),
            Err(MsfError::ChannelMismatch {
                expected: 16,
                got: 12
            })
        ));
        let empty = Array3::<f64>::zeros((2, 0, 16));
        assert!(matches!(
            model.forward(&empty),
            Err(MsfError::FeatureShape(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn shape_contract_and_binarity(
            seed in 0u64..500,
            steps in 1usize..4,
            clips in 1usize..10,
            quarter in 1usize..4,
        ) {
            let d = quarter * 4;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hyper = MsfHyper { d, t_sim: steps, ..MsfHyper::default() };
            let model = MsfModel::init(hyper, ModelVariant::full(), seed).unwrap();
            let f = random_binary(&mut rng, steps, clips, d);

            let local = model.local_features(&f).unwrap();
            prop_assert_eq!(local.dim(), (steps, clips, 3 * quarter));
            prop_assert!(local.iter().all(|&v| v == 0.0 || v == 1.0));

            let global = model.global_features(&f).unwrap();
            prop_assert_eq!(global.dim(), (steps, clips, quarter));
            prop_assert!(global.iter().all(|&v| v == 0.0 || v == 1.0));

            let scores = model.forward(&f).unwrap();
            prop_assert_eq!(scores.len(), clips);
            prop_assert!(scores.iter().all(|&s| s > 0.0 && s < 1.0));
        }
    }
}
