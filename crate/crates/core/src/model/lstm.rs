//! Batched LSTM and bidirectional LSTM layers with hand-written BPTT.
//!
//! Sequences are laid out time-major as `(w, batch, features)`. Gate columns
//! are ordered input, forget, cell candidate, output.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView3, Axis};
use rand::Rng;

use super::{init_uniform, matmul};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// Input kernel, `inputs x 4H`.
    pub wx: Array2<f64>,
    /// Recurrent kernel, `H x 4H`.
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

/// Activations kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// Activated gates `(w, batch, 4H)`.
    gates: Array3<f64>,
    c: Array3<f64>,
    tanh_c: Array3<f64>,
    /// Hidden states `(w, batch, H)`, indexed by real time.
    pub h: Array3<f64>,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((inputs + hidden) as f64).sqrt();
        let mut b = Array1::zeros(4 * hidden);
        // forget gate starts open
        b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        Self {
            wx: init_uniform((inputs, 4 * hidden), bound, rng),
            wh: init_uniform((hidden, 4 * hidden), bound, rng),
            b,
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            wx: Array2::zeros((inputs, 4 * hidden)),
            wh: Array2::zeros((hidden, 4 * hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.wx.nrows()
    }

    /// Runs the recurrence over `x` (`(w, batch, inputs)`), from the last
    /// step to the first when `reverse` is set.
    pub fn forward(&self, x: ArrayView3<f64>, reverse: bool) -> LstmCache {
        let (w, batch, inputs) = x.dim();
        let hidden = self.hidden();
        let g4 = 4 * hidden;
        let x_flat = x.to_shape((w * batch, inputs)).expect("time-major input reshapes");
        let mut z = Array2::from_shape_fn((w * batch, g4), |(_, j)| self.b[j]);
        general_mat_mul(1.0, &x_flat, &self.wx, 1.0, &mut z);
        let mut gates = z.into_shape_with_order((w, batch, g4)).expect("gate buffer reshapes");
        let mut c = Array3::<f64>::zeros((w, batch, hidden));
        let mut tanh_c = Array3::<f64>::zeros((w, batch, hidden));
        let mut h = Array3::<f64>::zeros((w, batch, hidden));
        let mut c_state = vec![0.0; batch * hidden];

        let mut prev: Option<usize> = None;
        for step in 0..w {
            let t = if reverse { w - 1 - step } else { step };
            let mut zt = gates.index_axis_mut(Axis(0), t);
            if let Some(p) = prev {
                general_mat_mul(1.0, &h.index_axis(Axis(0), p), &self.wh, 1.0, &mut zt);
            }
            let z = zt.as_slice_mut().expect("contiguous gates");
            let mut ct_view = c.index_axis_mut(Axis(0), t);
            let ct = ct_view.as_slice_mut().expect("contiguous state");
            let mut tc_view = tanh_c.index_axis_mut(Axis(0), t);
            let tc = tc_view.as_slice_mut().expect("contiguous state");
            let mut ht_view = h.index_axis_mut(Axis(0), t);
            let ht = ht_view.as_slice_mut().expect("contiguous state");
            for bi in 0..batch {
                let zr = &mut z[bi * g4..(bi + 1) * g4];
                let (ifg, rest) = zr.split_at_mut(2 * hidden);
                let (gg, og) = rest.split_at_mut(hidden);
                for v in ifg.iter_mut() {
                    *v = sigmoid(*v);
                }
                for v in gg.iter_mut() {
                    *v = v.tanh();
                }
                for v in og.iter_mut() {
                    *v = sigmoid(*v);
                }
                let (ig, fg) = ifg.split_at(hidden);
                let row = bi * hidden..(bi + 1) * hidden;
                let cs = &mut c_state[row.clone()];
                let (ct, tc, ht) = (&mut ct[row.clone()], &mut tc[row.clone()], &mut ht[row]);
                for k in 0..hidden {
                    let cn = fg[k] * cs[k] + ig[k] * gg[k];
                    cs[k] = cn;
                    ct[k] = cn;
                    let th = cn.tanh();
                    tc[k] = th;
                    ht[k] = og[k] * th;
                }
            }
            prev = Some(t);
        }
        LstmCache { gates, c, tanh_c, h }
    }

    /// Back-propagates `dh` (gradient w.r.t. every hidden output) through
    /// the recurrence, accumulating into `grad` and returning the gradient
    /// w.r.t. the input sequence.
    pub fn backward(
        &self,
        x: ArrayView3<f64>,
        cache: &LstmCache,
        dh: ArrayView3<f64>,
        grad: &mut Lstm,
        reverse: bool,
    ) -> Array3<f64> {
        let (w, batch, inputs) = x.dim();
        let hidden = self.hidden();
        let g4 = 4 * hidden;
        let mut dz = Array3::<f64>::zeros((w, batch, g4));
        let mut dh_next = Array2::<f64>::zeros((batch, hidden));
        let mut dc_next = vec![0.0; batch * hidden];
        let zeros = vec![0.0; batch * hidden];
        let wh_t = self.wh.t();
        let dh = dh.as_standard_layout();

        for step in 0..w {
            // walk the recurrence backwards
            let t = if reverse { step } else { w - 1 - step };
            let prev = if reverse {
                (t + 1 < w).then_some(t + 1)
            } else {
                t.checked_sub(1)
            };
            let gates = cache.gates.index_axis(Axis(0), t);
            let gates = gates.as_slice().expect("contiguous gates");
            let tc_view = cache.tanh_c.index_axis(Axis(0), t);
            let tc = tc_view.as_slice().expect("contiguous state");
            let c_prev_view = prev.map(|p| cache.c.index_axis(Axis(0), p));
            let c_prev = c_prev_view
                .as_ref()
                .map_or(&zeros[..], |v| v.as_slice().expect("contiguous state"));
            let dh_view = dh.index_axis(Axis(0), t);
            let dh_t = dh_view.as_slice().expect("contiguous gradient");
            let dhn = dh_next.as_slice().expect("contiguous gradient");
            let mut dz_view = dz.index_axis_mut(Axis(0), t);
            let dzt = dz_view.as_slice_mut().expect("contiguous gradient");
            for bi in 0..batch {
                let gr = &gates[bi * g4..(bi + 1) * g4];
                let dzr = &mut dzt[bi * g4..(bi + 1) * g4];
                let off = bi * hidden;
                for k in 0..hidden {
                    let ig = gr[k];
                    let fg = gr[hidden + k];
                    let gg = gr[2 * hidden + k];
                    let og = gr[3 * hidden + k];
                    let th = tc[off + k];
                    let dht = dh_t[off + k] + dhn[off + k];
                    let d_o = dht * th;
                    let dc = dc_next[off + k] + dht * og * (1.0 - th * th);
                    dc_next[off + k] = dc * fg;
                    dzr[k] = dc * gg * ig * (1.0 - ig);
                    dzr[hidden + k] = dc * c_prev[off + k] * fg * (1.0 - fg);
                    dzr[2 * hidden + k] = dc * ig * (1.0 - gg * gg);
                    dzr[3 * hidden + k] = d_o * og * (1.0 - og);
                }
            }
            let dzt = dz.index_axis(Axis(0), t);
            general_mat_mul(1.0, &dzt, &wh_t, 0.0, &mut dh_next);
            if let Some(p) = prev {
                general_mat_mul(1.0, &cache.h.index_axis(Axis(0), p).t(), &dzt, 1.0, &mut grad.wh);
            }
        }

        let dz_flat = dz
            .into_shape_with_order((w * batch, g4))
            .expect("gate gradient reshapes");
        let x_flat = x.to_shape((w * batch, inputs)).expect("time-major input reshapes");
        general_mat_mul(1.0, &x_flat.t(), &dz_flat, 1.0, &mut grad.wx);
        grad.b += &dz_flat.sum_axis(Axis(0));
        matmul(&dz_flat, &self.wx.t())
            .into_shape_with_order((w, batch, inputs))
            .expect("input gradient reshapes")
    }
}

/// Two LSTMs over opposite directions, outputs concatenated
/// `[forward, backward]` along the feature axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            fwd: Lstm::new(inputs, hidden, rng),
            bwd: Lstm::new(inputs, hidden, rng),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            fwd: Lstm::zeros(inputs, hidden),
            bwd: Lstm::zeros(inputs, hidden),
        }
    }

    pub fn output_width(&self) -> usize {
        2 * self.fwd.hidden()
    }

    pub fn forward(&self, x: ArrayView3<f64>) -> (Array3<f64>, BiLstmCache) {
        let fwd = self.fwd.forward(x, false);
        let bwd = self.bwd.forward(x, true);
        let out = ndarray::concatenate(Axis(2), &[fwd.h.view(), bwd.h.view()]).expect("directions share (w, batch)");
        (out, BiLstmCache { fwd, bwd })
    }

    pub fn backward(
        &self,
        x: ArrayView3<f64>,
        cache: &BiLstmCache,
        dout: ArrayView3<f64>,
        grad: &mut BiLstm,
    ) -> Array3<f64> {
        let hidden = self.fwd.hidden();
        let dh_f = dout.slice(s![.., .., ..hidden]);
        let dh_b = dout.slice(s![.., .., hidden..]);
        let mut dx = self.fwd.backward(x, &cache.fwd, dh_f, &mut grad.fwd, false);
        dx += &self.bwd.backward(x, &cache.bwd, dh_b, &mut grad.bwd, true);
        dx
    }
}

/// Time-distributed affine map applied to every `(t, batch)` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            w: init_uniform((inputs, outputs), bound, rng),
            b: Array1::zeros(outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn forward(&self, x: ArrayView3<f64>) -> Array3<f64> {
        let (w, batch, inputs) = x.dim();
        let flat = x.to_shape((w * batch, inputs)).expect("reshape");
        let mut out = Array2::from_shape_fn((w * batch, self.b.len()), |(_, j)| self.b[j]);
        general_mat_mul(1.0, &flat, &self.w, 1.0, &mut out);
        out.into_shape_with_order((w, batch, self.b.len())).expect("reshape")
    }

    pub fn backward(&self, x: ArrayView3<f64>, dout: ArrayView3<f64>, grad: &mut Dense) -> Array3<f64> {
        let (w, batch, inputs) = x.dim();
        let outputs = self.b.len();
        let flat = x.to_shape((w * batch, inputs)).expect("reshape");
        let dflat = dout.to_shape((w * batch, outputs)).expect("reshape");
        general_mat_mul(1.0, &flat.t(), &dflat, 1.0, &mut grad.w);
        grad.b += &dflat.sum_axis(Axis(0));
        matmul(&dflat, &self.w.t())
            .into_shape_with_order((w, batch, inputs))
            .expect("reshape")
    }
}
