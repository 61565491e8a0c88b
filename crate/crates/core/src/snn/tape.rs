//! Reverse-mode gradient tape.
//!
//! Records the forward operations the fusion head and losses need, then
//! replays them backwards to accumulate `dloss/dparam`. Spiking
//! nonlinearities come in two flavours:
//!
//! - [`SpikeMode::Binary`] — exact Heaviside spikes forward, the sigmoid
//!   surrogate derivative backward, and the reset factor treated as a
//!   constant. This is the training path.
//! - [`SpikeMode::Smoothed`] — the spike (and reset) replaced by
//!   `sigma(beta * (u - v_th))` throughout, making the whole pipeline a
//!   smooth function whose tape gradients can be verified against central
//!   finite differences.
//!
//! Shapes are validated by the model layer; tape ops assert.

use ndarray::{Array2, ArrayD, Axis, Ix1, Ix2, Ix3, IxDyn, Slice, Zip};

use super::lif::{lif_forward_trace, sigmoid, surrogate_grad_scalar};
use super::SnnError;

/// Scores are clamped to `[SCORE_CLAMP, 1 - SCORE_CLAMP]` inside BCE to keep
/// logs finite; gradients vanish outside the clamp range.
pub const SCORE_CLAMP: f64 = 1e-7;

/// Forward semantics of spiking nonlinearities on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeMode {
    Binary,
    Smoothed,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackFn = Box<dyn Fn(&ArrayD<f64>, &mut GradStore)>;

/// Accumulated gradients keyed by tape variable.
pub struct GradStore {
    slots: Vec<Option<ArrayD<f64>>>,
}

impl GradStore {
    fn accumulate(&mut self, var: Var, delta: ArrayD<f64>) {
        match &mut self.slots[var.0] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    /// Gradient with respect to `var`, if any path reached it.
    pub fn wrt(&self, var: Var) -> Option<&ArrayD<f64>> {
        self.slots[var.0].as_ref()
    }
}

/// Recorded forward pass supporting one reverse sweep.
#[derive(Default)]
pub struct Tape {
    vals: Vec<ArrayD<f64>>,
    needs: Vec<bool>,
    backs: Vec<Option<BackFn>>,
    consumed: bool,
}

fn as2(a: &ArrayD<f64>) -> ndarray::ArrayView2<'_, f64> {
    a.view().into_dimensionality::<Ix2>().expect("2-d value")
}

fn as3(a: &ArrayD<f64>) -> ndarray::ArrayView3<'_, f64> {
    a.view().into_dimensionality::<Ix3>().expect("3-d value")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, val: ArrayD<f64>, needs: bool, back: Option<BackFn>) -> Var {
        self.vals.push(val);
        self.needs.push(needs);
        self.backs.push(back);
        Var(self.vals.len() - 1)
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, false, None)
    }

    /// Leaf whose gradient is retained by [`Tape::backward`].
    pub fn param(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, true, None)
    }

    pub fn value(&self, var: Var) -> &ArrayD<f64> {
        &self.vals[var.0]
    }

    /// Value of a single-element variable.
    pub fn scalar(&self, var: Var) -> f64 {
        let v = &self.vals[var.0];
        assert_eq!(v.len(), 1, "expected scalar, got shape {:?}", v.shape());
        *v.first().unwrap()
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.vals[a.0].shape(), self.vals[b.0].shape());
        let val = &self.vals[a.0] + &self.vals[b.0];
        let needs = self.needs[a.0] || self.needs[b.0];
        let (na, nb) = (self.needs[a.0], self.needs[b.0]);
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                if na {
                    store.accumulate(a, g.clone());
                }
                if nb {
                    store.accumulate(b, g.clone());
                }
            })
        });
        self.push(val, needs, back)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let val = self.vals[a.0].mapv(|v| v * factor);
        let needs = self.needs[a.0];
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| store.accumulate(a, g.mapv(|v| v * factor)))
        });
        self.push(val, needs, back)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let total: f64 = self.vals[a.0].iter().sum();
        let shape = self.vals[a.0].raw_dim();
        let needs = self.needs[a.0];
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let seed = *g.first().unwrap();
                store.accumulate(a, ArrayD::from_elem(shape.clone(), seed));
            })
        });
        self.push(ArrayD::from_elem(IxDyn(&[]), total), needs, back)
    }

    /// Channel-reducing 1x1 convolution: `[T, t, d_in] x [c, d_in] -> [T, t, c]`.
    pub fn pointwise(&mut self, x: Var, w: Var) -> Var {
        let xv = as3(&self.vals[x.0]);
        let wv = as2(&self.vals[w.0]);
        let (steps, t, d_in) = xv.dim();
        let (c_out, wd) = wv.dim();
        assert_eq!(wd, d_in);
        let mut out = ndarray::Array3::<f64>::zeros((steps, t, c_out));
        for s in 0..steps {
            out.index_axis_mut(Axis(0), s)
                .assign(&xv.index_axis(Axis(0), s).dot(&wv.t()));
        }
        let needs = self.needs[x.0] || self.needs[w.0];
        let (nx, nw) = (self.needs[x.0], self.needs[w.0]);
        let x_saved = self.vals[x.0].clone();
        let w_saved = self.vals[w.0].clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let gv = as3(g);
                let xs = as3(&x_saved);
                let ws = as2(&w_saved);
                if nx {
                    let mut dx = ndarray::Array3::<f64>::zeros(xs.dim());
                    for s in 0..gv.dim().0 {
                        dx.index_axis_mut(Axis(0), s)
                            .assign(&gv.index_axis(Axis(0), s).dot(&ws));
                    }
                    store.accumulate(x, dx.into_dyn());
                }
                if nw {
                    let mut dw = Array2::<f64>::zeros(ws.dim());
                    for s in 0..gv.dim().0 {
                        dw += &gv
                            .index_axis(Axis(0), s)
                            .t()
                            .dot(&xs.index_axis(Axis(0), s));
                    }
                    store.accumulate(w, dw.into_dyn());
                }
            })
        });
        self.push(out.into_dyn(), needs, back)
    }

    /// Right multiplication by a shared matrix: `[T, t, c] x [c, c2]`.
    pub fn matmul_right(&mut self, x: Var, w: Var) -> Var {
        let xv = as3(&self.vals[x.0]);
        let wv = as2(&self.vals[w.0]);
        let (steps, t, c) = xv.dim();
        assert_eq!(wv.dim().0, c);
        let c2 = wv.dim().1;
        let mut out = ndarray::Array3::<f64>::zeros((steps, t, c2));
        for s in 0..steps {
            out.index_axis_mut(Axis(0), s)
                .assign(&xv.index_axis(Axis(0), s).dot(&wv));
        }
        let needs = self.needs[x.0] || self.needs[w.0];
        let (nx, nw) = (self.needs[x.0], self.needs[w.0]);
        let x_saved = self.vals[x.0].clone();
        let w_saved = self.vals[w.0].clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let gv = as3(g);
                let xs = as3(&x_saved);
                let ws = as2(&w_saved);
                if nx {
                    let mut dx = ndarray::Array3::<f64>::zeros(xs.dim());
                    for s in 0..gv.dim().0 {
                        dx.index_axis_mut(Axis(0), s)
                            .assign(&gv.index_axis(Axis(0), s).dot(&ws.t()));
                    }
                    store.accumulate(x, dx.into_dyn());
                }
                if nw {
                    let mut dw = Array2::<f64>::zeros(ws.dim());
                    for s in 0..gv.dim().0 {
                        dw += &xs
                            .index_axis(Axis(0), s)
                            .t()
                            .dot(&gv.index_axis(Axis(0), s));
                    }
                    store.accumulate(w, dw.into_dyn());
                }
            })
        });
        self.push(out.into_dyn(), needs, back)
    }

    /// Per-step matrix product: `[T, m, k] x [T, k, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Var {
        let av = as3(&self.vals[a.0]);
        let bv = as3(&self.vals[b.0]);
        let (steps, m, k) = av.dim();
        assert_eq!(bv.dim().0, steps);
        assert_eq!(bv.dim().1, k);
        let n = bv.dim().2;
        let mut out = ndarray::Array3::<f64>::zeros((steps, m, n));
        for s in 0..steps {
            out.index_axis_mut(Axis(0), s)
                .assign(&av.index_axis(Axis(0), s).dot(&bv.index_axis(Axis(0), s)));
        }
        let needs = self.needs[a.0] || self.needs[b.0];
        let (na, nb) = (self.needs[a.0], self.needs[b.0]);
        let a_saved = self.vals[a.0].clone();
        let b_saved = self.vals[b.0].clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let gv = as3(g);
                let asv = as3(&a_saved);
                let bsv = as3(&b_saved);
                if na {
                    let mut da = ndarray::Array3::<f64>::zeros(asv.dim());
                    for s in 0..gv.dim().0 {
                        da.index_axis_mut(Axis(0), s).assign(
                            &gv.index_axis(Axis(0), s)
                                .dot(&bsv.index_axis(Axis(0), s).t()),
                        );
                    }
                    store.accumulate(a, da.into_dyn());
                }
                if nb {
                    let mut db = ndarray::Array3::<f64>::zeros(bsv.dim());
                    for s in 0..gv.dim().0 {
                        db.index_axis_mut(Axis(0), s).assign(
                            &asv.index_axis(Axis(0), s)
                                .t()
                                .dot(&gv.index_axis(Axis(0), s)),
                        );
                    }
                    store.accumulate(b, db.into_dyn());
                }
            })
        });
        self.push(out.into_dyn(), needs, back)
    }

    /// Dilated conv over the middle axis, applied independently per leading
    /// step: `[T, t, c_in] * [c_out, c_in, w] -> [T, t, c_out]`.
    pub fn conv1d(&mut self, x: Var, kernel: Var, dilation: usize) -> Var {
        let xv = as3(&self.vals[x.0]);
        let kv = as3(&self.vals[kernel.0]);
        let (steps, t, _) = xv.dim();
        let c_out = kv.dim().0;
        let mut out = ndarray::Array3::<f64>::zeros((steps, t, c_out));
        for s in 0..steps {
            let conv = super::conv::dilated_conv1d(xv.index_axis(Axis(0), s), kv, dilation)
                .expect("conv shapes validated upstream");
            out.index_axis_mut(Axis(0), s).assign(&conv);
        }
        let needs = self.needs[x.0] || self.needs[kernel.0];
        let (nx, nk) = (self.needs[x.0], self.needs[kernel.0]);
        let x_saved = self.vals[x.0].clone();
        let k_saved = self.vals[kernel.0].clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let gv = as3(g);
                let xs = as3(&x_saved);
                let ks = as3(&k_saved);
                let (steps, t, _) = xs.dim();
                let (c_out, c_in, width) = ks.dim();
                let half = (width as isize - 1) / 2;
                let mut dx = nx.then(|| ndarray::Array3::<f64>::zeros(xs.dim()));
                let mut dk = nk.then(|| ndarray::Array3::<f64>::zeros(ks.dim()));
                for s in 0..steps {
                    for i in 0..t as isize {
                        for m in 0..width as isize {
                            let src = i + (m - half) * dilation as isize;
                            if src < 0 || src >= t as isize {
                                continue;
                            }
                            let (iu, su, mu) = (i as usize, src as usize, m as usize);
                            for p in 0..c_out {
                                let gval = gv[[s, iu, p]];
                                if gval == 0.0 {
                                    continue;
                                }
                                for d in 0..c_in {
                                    if let Some(dx) = dx.as_mut() {
                                        dx[[s, su, d]] += gval * ks[[p, d, mu]];
                                    }
                                    if let Some(dk) = dk.as_mut() {
                                        dk[[p, d, mu]] += gval * xs[[s, su, d]];
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(dx) = dx {
                    store.accumulate(x, dx.into_dyn());
                }
                if let Some(dk) = dk {
                    store.accumulate(kernel, dk.into_dyn());
                }
            })
        });
        self.push(out.into_dyn(), needs, back)
    }

    /// Depthwise width-`w` conv along axis 0 of a `[t, d]` value.
    pub fn dwconv(&mut self, x: Var, kernel: Var) -> Var {
        let xv = as2(&self.vals[x.0]);
        let kv = as2(&self.vals[kernel.0]);
        let out = super::conv::depthwise_conv1d(xv, kv)
            .expect("dwconv shapes validated upstream")
            .into_dyn();
        let needs = self.needs[x.0] || self.needs[kernel.0];
        let (nx, nk) = (self.needs[x.0], self.needs[kernel.0]);
        let x_saved = self.vals[x.0].clone();
        let k_saved = self.vals[kernel.0].clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let gv = as2(g);
                let xs = as2(&x_saved);
                let ks = as2(&k_saved);
                let (t, d) = xs.dim();
                let width = ks.dim().1;
                let half = (width as isize - 1) / 2;
                let mut dx = nx.then(|| Array2::<f64>::zeros((t, d)));
                let mut dk = nk.then(|| Array2::<f64>::zeros(ks.dim()));
                for i in 0..t as isize {
                    for m in 0..width as isize {
                        let src = i + m - half;
                        if src < 0 || src >= t as isize {
                            continue;
                        }
                        let (iu, su, mu) = (i as usize, src as usize, m as usize);
                        for c in 0..d {
                            let gval = gv[[iu, c]];
                            if let Some(dx) = dx.as_mut() {
                                dx[[su, c]] += gval * ks[[c, mu]];
                            }
                            if let Some(dk) = dk.as_mut() {
                                dk[[c, mu]] += gval * xs[[su, c]];
                            }
                        }
                    }
                }
                if let Some(dx) = dx {
                    store.accumulate(x, dx.into_dyn());
                }
                if let Some(dk) = dk {
                    store.accumulate(kernel, dk.into_dyn());
                }
            })
        });
        self.push(out, needs, back)
    }

    /// Keeps only the center tap of a `[c_out, c_in, w]` kernel, yielding a
    /// width-1 kernel.
    pub fn center_tap(&mut self, kernel: Var) -> Var {
        let kv = &self.vals[kernel.0];
        assert_eq!(kv.ndim(), 3);
        let width = kv.shape()[2];
        let center = width / 2;
        let val = kv
            .slice_axis(Axis(2), Slice::from(center..center + 1))
            .to_owned();
        let needs = self.needs[kernel.0];
        let full_shape = kv.raw_dim();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let mut dk = ArrayD::<f64>::zeros(full_shape.clone());
                dk.slice_axis_mut(Axis(2), Slice::from(center..center + 1))
                    .assign(g);
                store.accumulate(kernel, dk);
            })
        });
        self.push(val, needs, back)
    }

    /// Pairwise cosine similarity of the row vectors of each step:
    /// `[T, t, c] -> [T, t, t]`. Zero-norm rows read as all-zero similarity.
    pub fn cosine_rows(&mut self, x: Var) -> Var {
        let xv = as3(&self.vals[x.0]);
        let (steps, t, c) = xv.dim();
        let mut out = ndarray::Array3::<f64>::zeros((steps, t, t));
        let mut norms = Array2::<f64>::zeros((steps, t));
        for s in 0..steps {
            for i in 0..t {
                let mut sq = 0.0;
                for d in 0..c {
                    sq += xv[[s, i, d]] * xv[[s, i, d]];
                }
                norms[[s, i]] = sq.sqrt();
            }
            for i in 0..t {
                for j in 0..t {
                    if norms[[s, i]] > 0.0 && norms[[s, j]] > 0.0 {
                        let mut dot = 0.0;
                        for d in 0..c {
                            dot += xv[[s, i, d]] * xv[[s, j, d]];
                        }
                        out[[s, i, j]] = dot / (norms[[s, i]] * norms[[s, j]]);
                    }
                }
            }
        }
        let needs = self.needs[x.0];
        let x_saved = self.vals[x.0].clone();
        let out_saved = out.clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let gv = as3(g);
                let xs = as3(&x_saved);
                let (steps, t, c) = xs.dim();
                let mut dx = ndarray::Array3::<f64>::zeros((steps, t, c));
                for s in 0..steps {
                    let mut norms = vec![0.0f64; t];
                    for (i, norm) in norms.iter_mut().enumerate() {
                        let mut sq = 0.0;
                        for d in 0..c {
                            sq += xs[[s, i, d]] * xs[[s, i, d]];
                        }
                        *norm = sq.sqrt();
                    }
                    for i in 0..t {
                        if norms[i] == 0.0 {
                            continue;
                        }
                        for j in 0..t {
                            if norms[j] == 0.0 {
                                continue;
                            }
                            let gij = gv[[s, i, j]];
                            if gij == 0.0 {
                                continue;
                            }
                            let cij = out_saved[[s, i, j]];
                            let inv = 1.0 / (norms[i] * norms[j]);
                            let inv_i2 = 1.0 / (norms[i] * norms[i]);
                            let inv_j2 = 1.0 / (norms[j] * norms[j]);
                            for d in 0..c {
                                dx[[s, i, d]] +=
                                    gij * (xs[[s, j, d]] * inv - cij * xs[[s, i, d]] * inv_i2);
                                dx[[s, j, d]] +=
                                    gij * (xs[[s, i, d]] * inv - cij * xs[[s, j, d]] * inv_j2);
                            }
                        }
                    }
                }
                store.accumulate(x, dx.into_dyn());
            })
        });
        self.push(out.into_dyn(), needs, back)
    }

    /// Numerically stable softmax along the last axis.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = &self.vals[x.0];
        let last = xv.ndim() - 1;
        let mut out = xv.clone();
        for mut row in out.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let _ = last;
        let needs = self.needs[x.0];
        let y_saved = out.clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let mut dx = ArrayD::<f64>::zeros(y_saved.raw_dim());
                for ((mut dxr, gr), yr) in dx
                    .rows_mut()
                    .into_iter()
                    .zip(g.rows())
                    .zip(y_saved.rows())
                {
                    let dot: f64 = gr.iter().zip(yr.iter()).map(|(a, b)| a * b).sum();
                    for ((dv, &gv), &yv) in dxr.iter_mut().zip(gr.iter()).zip(yr.iter()) {
                        *dv = yv * (gv - dot);
                    }
                }
                store.accumulate(x, dx);
            })
        });
        self.push(out, needs, back)
    }

    /// LIF recurrence over axis 0 with the chosen spike semantics.
    pub fn lif(&mut self, x: Var, tau: f64, v_th: f64, beta: f64, mode: SpikeMode) -> Var {
        let (outputs, charges) = lif_forward_trace(&self.vals[x.0], tau, v_th, beta, mode);
        let needs = self.needs[x.0];
        let out_saved = outputs.clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let steps = charges.shape()[0];
                let rest: Vec<usize> = charges.shape()[1..].to_vec();
                let mut carried = ArrayD::<f64>::zeros(IxDyn(&rest));
                let mut dx = ArrayD::<f64>::zeros(charges.raw_dim());
                for s in (0..steps).rev() {
                    let go = g.index_axis(Axis(0), s);
                    let cs = charges.index_axis(Axis(0), s);
                    let os = out_saved.index_axis(Axis(0), s);
                    let mut dc = ArrayD::<f64>::zeros(IxDyn(&rest));
                    Zip::from(&mut dc)
                        .and(&go)
                        .and(&cs)
                        .and(&os)
                        .and(&carried)
                        .for_each(|dcv, &gov, &cv, &ov, &guv| {
                            let sg = surrogate_grad_scalar(cv - v_th, beta);
                            *dcv = match mode {
                                // Reset factor detached: the membrane path is
                                // cut where the neuron fired.
                                SpikeMode::Binary => gov * sg + guv * (1.0 - ov),
                                SpikeMode::Smoothed => {
                                    gov * sg + guv * ((1.0 - ov) - cv * sg)
                                }
                            };
                        });
                    dx.index_axis_mut(Axis(0), s).assign(&dc);
                    dc.mapv_inplace(|v| v * tau);
                    carried = dc;
                }
                store.accumulate(x, dx);
            })
        });
        self.push(outputs, needs, back)
    }

    /// Extracts step `s` from a `[T, ...]` value.
    pub fn slice_step(&mut self, x: Var, s: usize) -> Var {
        let val = self.vals[x.0].index_axis(Axis(0), s).to_owned();
        let needs = self.needs[x.0];
        let full_shape = self.vals[x.0].raw_dim();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let mut dx = ArrayD::<f64>::zeros(full_shape.clone());
                dx.index_axis_mut(Axis(0), s).assign(g);
                store.accumulate(x, dx);
            })
        });
        self.push(val, needs, back)
    }

    /// Stacks equally shaped values along a new leading axis.
    pub fn stack_steps(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rest = self.vals[parts[0].0].shape().to_vec();
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&rest);
        let mut out = ArrayD::<f64>::zeros(IxDyn(&shape));
        for (i, part) in parts.iter().enumerate() {
            assert_eq!(self.vals[part.0].shape(), &rest[..]);
            out.index_axis_mut(Axis(0), i).assign(&self.vals[part.0]);
        }
        let needs = parts.iter().any(|p| self.needs[p.0]);
        let parts_saved: Vec<(Var, bool)> = parts.iter().map(|&p| (p, self.needs[p.0])).collect();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                for (i, &(part, needed)) in parts_saved.iter().enumerate() {
                    if needed {
                        store.accumulate(part, g.index_axis(Axis(0), i).to_owned());
                    }
                }
            })
        });
        self.push(out, needs, back)
    }

    /// Concatenates values along their last axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.vals[p.0].view()).collect();
        let last = views[0].ndim() - 1;
        let out = ndarray::concatenate(Axis(last), &views).expect("concat shapes");
        let needs = parts.iter().any(|p| self.needs[p.0]);
        let spans: Vec<(Var, bool, usize)> = parts
            .iter()
            .map(|&p| (p, self.needs[p.0], self.vals[p.0].shape()[last]))
            .collect();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let last = g.ndim() - 1;
                let mut offset = 0usize;
                for &(part, needed, width) in &spans {
                    if needed {
                        let slice = g
                            .slice_axis(Axis(last), Slice::from(offset..offset + width))
                            .to_owned();
                        store.accumulate(part, slice);
                    }
                    offset += width;
                }
            })
        });
        self.push(out, needs, back)
    }

    /// Mean over axis 0 (rate decoding of the step axis).
    pub fn mean_axis0(&mut self, x: Var) -> Var {
        let steps = self.vals[x.0].shape()[0];
        assert!(steps > 0);
        let val = self.vals[x.0].mean_axis(Axis(0)).expect("non-empty axis");
        let needs = self.needs[x.0];
        let full_shape = self.vals[x.0].raw_dim();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let mut dx = ArrayD::<f64>::zeros(full_shape.clone());
                let scaled = g.mapv(|v| v / steps as f64);
                for s in 0..steps {
                    dx.index_axis_mut(Axis(0), s).assign(&scaled);
                }
                store.accumulate(x, dx);
            })
        });
        self.push(val, needs, back)
    }

    /// Per-row affine map to one logit: `[t, d] x [d] + [1] -> [t]`.
    pub fn affine_vec(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xv = as2(&self.vals[x.0]);
        let wv = self.vals[w.0]
            .view()
            .into_dimensionality::<Ix1>()
            .expect("1-d weight");
        assert_eq!(self.vals[b.0].len(), 1);
        let bias = *self.vals[b.0].first().unwrap();
        let out = xv.dot(&wv).mapv(|v| v + bias);
        let needs = self.needs[x.0] || self.needs[w.0] || self.needs[b.0];
        let (nx, nw, nb) = (self.needs[x.0], self.needs[w.0], self.needs[b.0]);
        let x_saved = self.vals[x.0].clone();
        let w_saved = self.vals[w.0].clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let gv = g.view().into_dimensionality::<Ix1>().expect("1-d grad");
                let xs = as2(&x_saved);
                let ws = w_saved
                    .view()
                    .into_dimensionality::<Ix1>()
                    .expect("1-d weight");
                if nx {
                    let (t, d) = xs.dim();
                    let mut dx = Array2::<f64>::zeros((t, d));
                    for i in 0..t {
                        for j in 0..d {
                            dx[[i, j]] = gv[i] * ws[j];
                        }
                    }
                    store.accumulate(x, dx.into_dyn());
                }
                if nw {
                    let dw = xs.t().dot(&gv);
                    store.accumulate(w, dw.into_dyn());
                }
                if nb {
                    let db = ArrayD::from_elem(IxDyn(&[1]), gv.sum());
                    store.accumulate(b, db);
                }
            })
        });
        self.push(out.into_dyn(), needs, back)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.vals[x.0].mapv(sigmoid);
        let needs = self.needs[x.0];
        let y_saved = out.clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let mut dx = y_saved.mapv(|y| y * (1.0 - y));
                dx *= g;
                store.accumulate(x, dx);
            })
        });
        self.push(out, needs, back)
    }

    /// Largest `min(k, t)` entries of a score vector in descending order;
    /// ties resolve to the lower index.
    pub fn topk(&mut self, x: Var, k: usize) -> Var {
        let xv = self.vals[x.0]
            .view()
            .into_dimensionality::<Ix1>()
            .expect("1-d scores");
        let t = xv.len();
        assert!(t > 0, "top-k of empty scores");
        assert!(k > 0);
        let mut order: Vec<usize> = (0..t).collect();
        order.sort_by(|&a, &b| {
            xv[b]
                .partial_cmp(&xv[a])
                .expect("scores must be finite")
                .then(a.cmp(&b))
        });
        order.truncate(k.min(t));
        let picked: Vec<f64> = order.iter().map(|&i| xv[i]).collect();
        let needs = self.needs[x.0];
        let indices = order.clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let gv = g.view().into_dimensionality::<Ix1>().expect("1-d grad");
                let mut dx = ArrayD::<f64>::zeros(IxDyn(&[t]));
                for (slot, &src) in indices.iter().enumerate() {
                    dx[[src]] += gv[slot];
                }
                store.accumulate(x, dx);
            })
        });
        self.push(ArrayD::from_shape_vec(IxDyn(&[k.min(t)]), picked).unwrap(), needs, back)
    }

    /// Mean binary cross-entropy of scores against a constant 0/1 label,
    /// with scores clamped to keep logs finite.
    pub fn bce_mean(&mut self, scores: Var, label: f64) -> Var {
        let sv = &self.vals[scores.0];
        let n = sv.len();
        assert!(n > 0);
        let clamped = |s: f64| s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
        let total: f64 = sv
            .iter()
            .map(|&s| {
                let sc = clamped(s);
                -(label * sc.ln() + (1.0 - label) * (1.0 - sc).ln())
            })
            .sum();
        let loss = total / n as f64;
        let needs = self.needs[scores.0];
        let s_saved = sv.clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let seed = *g.first().unwrap();
                let dx = s_saved.mapv(|s| {
                    if (SCORE_CLAMP..=1.0 - SCORE_CLAMP).contains(&s) {
                        seed * (-label / s + (1.0 - label) / (1.0 - s)) / n as f64
                    } else {
                        0.0
                    }
                });
                store.accumulate(scores, dx);
            })
        });
        self.push(ArrayD::from_elem(IxDyn(&[]), loss), needs, back)
    }

    /// Population variance of a score vector (the center loss of a normal
    /// video).
    pub fn variance(&mut self, scores: Var) -> Var {
        let sv = &self.vals[scores.0];
        let n = sv.len();
        assert!(n > 0);
        let mean: f64 = sv.iter().sum::<f64>() / n as f64;
        let var: f64 = sv.iter().map(|&s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
        let needs = self.needs[scores.0];
        let s_saved = sv.clone();
        let back = needs.then(|| -> BackFn {
            Box::new(move |g, store| {
                let seed = *g.first().unwrap();
                let dx = s_saved.mapv(|s| seed * 2.0 * (s - mean) / n as f64);
                store.accumulate(scores, dx);
            })
        });
        self.push(ArrayD::from_elem(IxDyn(&[]), var), needs, back)
    }

    /// Replays the recorded graph backwards from a scalar loss.
    ///
    /// A tape supports exactly one reverse sweep; a second call reports the
    /// tape as consumed.
    pub fn backward(&mut self, loss: Var) -> Result<GradStore, SnnError> {
        if self.consumed {
            return Err(SnnError::TapeConsumed);
        }
        self.consumed = true;
        assert_eq!(
            self.vals[loss.0].len(),
            1,
            "backward expects a scalar loss"
        );
        let mut store = GradStore {
            slots: vec![None; self.vals.len()],
        };
        store.slots[loss.0] = Some(ArrayD::ones(self.vals[loss.0].raw_dim()));
        for i in (0..=loss.0).rev() {
            if let Some(back) = &self.backs[i] {
                if let Some(g) = store.slots[i].take() {
                    back(&g, &mut store);
                }
            }
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_dyn(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> ArrayD<f64> {
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(lo..hi))
    }

    /// Checks tape gradients of `build` against central finite differences
    /// over every parameter entry.
    fn fd_check(
        params: &[ArrayD<f64>],
        build: impl Fn(&mut Tape, &[Var]) -> Var,
        tol: f64,
    ) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = build(&mut tape, &vars);
        let grads = tape.backward(loss).unwrap();

        let eval = |ps: &[ArrayD<f64>]| -> f64 {
            let mut t = Tape::new();
            let vs: Vec<Var> = ps.iter().map(|p| t.constant(p.clone())).collect();
            let l = build(&mut t, &vs);
            t.scalar(l)
        };

        let h = 1e-5;
        for (pi, p) in params.iter().enumerate() {
            let ad = grads
                .wrt(vars[pi])
                .cloned()
                .unwrap_or_else(|| ArrayD::zeros(p.raw_dim()));
            for idx in 0..p.len() {
                let mut plus = params.to_vec();
                let mut minus = params.to_vec();
                plus[pi].as_slice_mut().unwrap()[idx] += h;
                minus[pi].as_slice_mut().unwrap()[idx] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let advl = ad.as_slice().unwrap()[idx];
                let denom = advl.abs().max(fd.abs()).max(1e-6);
                assert!(
                    (advl - fd).abs() / denom < tol,
                    "param {pi} entry {idx}: ad {advl} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn sum_of_params_gives_unit_gradients() {
        let mut tape = Tape::new();
        let p = tape.param(arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn());
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(
            grads.wrt(p).unwrap(),
            &ArrayD::<f64>::ones(IxDyn(&[2, 2]))
        );
    }

    #[test]
    fn backward_twice_reports_consumed_tape() {
        let mut tape = Tape::new();
        let p = tape.param(arr1(&[1.0]).into_dyn());
        let loss = tape.sum(p);
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(SnnError::TapeConsumed)));
    }

    #[test]
    fn conv_lif_scorer_path_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = rand_dyn(&mut rng, &[2, 5, 3], -0.5, 1.2);
        let k1 = rand_dyn(&mut rng, &[2, 3, 3], -0.6, 0.6);
        let k2 = rand_dyn(&mut rng, &[2, 3, 3], -0.6, 0.6);
        let w = rand_dyn(&mut rng, &[4], -0.8, 0.8);
        let b = rand_dyn(&mut rng, &[1], -0.1, 0.1);
        let x_outer = x.clone();
        fd_check(
            &[k1, k2, w, b],
            move |tape, vars| {
                let xv = tape.constant(x_outer.clone());
                let c1 = tape.conv1d(xv, vars[0], 1);
                let c2 = tape.conv1d(xv, vars[1], 2);
                let cat = tape.concat_channels(&[c1, c2]);
                let spikes = tape.lif(cat, 0.625, 1.0, 4.0, SpikeMode::Smoothed);
                let rate = tape.mean_axis0(spikes);
                let logits = tape.affine_vec(rate, vars[2], vars[3]);
                let scores = tape.sigmoid(logits);
                let top = tape.topk(scores, 3);
                tape.bce_mean(top, 1.0)
            },
            1e-4,
        );
    }

    #[test]
    fn graph_attention_path_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let x = rand_dyn(&mut rng, &[2, 4, 3], 0.1, 1.0);
        let w_reduce = rand_dyn(&mut rng, &[2, 3], -0.7, 0.7);
        let w_mix = rand_dyn(&mut rng, &[2, 2], -0.7, 0.7);
        let w = rand_dyn(&mut rng, &[2], -0.8, 0.8);
        let b = rand_dyn(&mut rng, &[1], -0.1, 0.1);
        let x_outer = x.clone();
        fd_check(
            &[w_reduce, w_mix, w, b],
            move |tape, vars| {
                let xv = tape.constant(x_outer.clone());
                let reduced = tape.pointwise(xv, vars[0]);
                let sim = tape.cosine_rows(reduced);
                let adj = tape.softmax_rows(sim);
                let mixed = tape.bmm(adj, reduced);
                let mapped = tape.matmul_right(mixed, vars[1]);
                let spikes = tape.lif(mapped, 0.625, 1.0, 4.0, SpikeMode::Smoothed);
                let rate = tape.mean_axis0(spikes);
                let logits = tape.affine_vec(rate, vars[2], vars[3]);
                let scores = tape.sigmoid(logits);
                let a = tape.variance(scores);
                let bce = tape.bce_mean(scores, 0.0);
                let scaled = tape.scale(a, 3.0);
                tape.add(scaled, bce)
            },
            1e-4,
        );
    }

    #[test]
    fn recurrent_mixing_path_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let x = rand_dyn(&mut rng, &[3, 4, 2], -0.5, 0.8);
        let kernel = rand_dyn(&mut rng, &[2, 3], -0.5, 0.5);
        let w = rand_dyn(&mut rng, &[2], -0.8, 0.8);
        let b = rand_dyn(&mut rng, &[1], -0.1, 0.1);
        let alpha = 0.6;
        let x_outer = x.clone();
        fd_check(
            &[kernel, w, b],
            move |tape, vars| {
                let xv = tape.constant(x_outer.clone());
                let first = tape.slice_step(xv, 0);
                let mut state = tape.scale(first, 1.0 - alpha);
                let mut states = vec![state];
                for s in 1..3 {
                    let conv = tape.dwconv(state, vars[0]);
                    let hist = tape.scale(conv, alpha);
                    let cur = tape.slice_step(xv, s);
                    let cur = tape.scale(cur, 1.0 - alpha);
                    state = tape.add(hist, cur);
                    states.push(state);
                }
                let stacked = tape.stack_steps(&states);
                let rate = tape.mean_axis0(stacked);
                let logits = tape.affine_vec(rate, vars[1], vars[2]);
                let scores = tape.sigmoid(logits);
                tape.bce_mean(scores, 1.0)
            },
            1e-4,
        );
    }

    #[test]
    fn zero_weights_zero_input_give_zero_gradients_beyond_first_layer() {
        let mut tape = Tape::new();
        let x = tape.constant(ArrayD::zeros(IxDyn(&[2, 3, 4])));
        let w1 = tape.param(ArrayD::zeros(IxDyn(&[5, 4])));
        let w2 = tape.param(ArrayD::zeros(IxDyn(&[2, 5])));
        let h1 = tape.pointwise(x, w1);
        let o1 = tape.lif(h1, 0.625, 1.0, 4.0, SpikeMode::Binary);
        let h2 = tape.pointwise(o1, w2);
        let o2 = tape.lif(h2, 0.625, 1.0, 4.0, SpikeMode::Binary);
        let loss = tape.sum(o2);
        let grads = tape.backward(loss).unwrap();
        // o1 is all-zero, so dW2 vanishes; dW1 chains through W2 = 0.
        assert!(grads.wrt(w2).unwrap().iter().all(|&v| v == 0.0));
        assert!(grads.wrt(w1).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_layer_spiking_mlp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let x = rand_dyn(&mut rng, &[2, 3, 4], -0.5, 1.5);
        let w1 = rand_dyn(&mut rng, &[5, 4], -0.7, 0.7);
        let w2 = rand_dyn(&mut rng, &[2, 5], -0.7, 0.7);
        let x_outer = x.clone();
        fd_check(
            &[w1, w2],
            move |tape, vars| {
                let xv = tape.constant(x_outer.clone());
                let h1 = tape.pointwise(xv, vars[0]);
                let o1 = tape.lif(h1, 0.625, 1.0, 4.0, SpikeMode::Smoothed);
                let h2 = tape.pointwise(o1, vars[1]);
                let o2 = tape.lif(h2, 0.625, 1.0, 4.0, SpikeMode::Smoothed);
                tape.sum(o2)
            },
            1e-3,
        );
    }

    #[test]
    fn binary_lif_tape_output_matches_pure_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let x = rand_dyn(&mut rng, &[4, 6], -1.0, 2.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let spikes = tape.lif(xv, 0.625, 1.0, 4.0, SpikeMode::Binary);
        let pure = super::super::lif_sequence(&x, 0.625, 1.0).unwrap();
        assert_eq!(tape.value(spikes), pure.values());
    }

    #[test]
    fn topk_orders_and_breaks_ties_by_index() {
        let mut tape = Tape::new();
        let x = tape.constant(arr1(&[0.3, 0.9, 0.9, 0.1]).into_dyn());
        let top = tape.topk(x, 3);
        assert_eq!(
            tape.value(top).as_slice().unwrap(),
            &[0.9, 0.9, 0.3]
        );
    }
}
