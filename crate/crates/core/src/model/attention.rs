//! Multi-head scaled dot-product attention with queries and keys projected
//! from the input window and values projected from a separate source
//! (the latent matrix).

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use super::{init_uniform, matmul};

/// Per-head projections stored as column blocks: head `i` owns columns
/// `i*key_dim .. (i+1)*key_dim` of `wq`, `wk` and `wv`, and rows of the same
/// range in `wo`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub heads: usize,
    pub key_dim: usize,
    /// `d_D x (h*d_K)`
    pub wq: Array2<f64>,
    /// `d_D x (h*d_K)`
    pub wk: Array2<f64>,
    /// `d_Z x (h*d_K)`
    pub wv: Array2<f64>,
    /// `(h*d_K) x d_Z`
    pub wo: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    q: Array3<f64>,
    k: Array3<f64>,
    v: Array3<f64>,
    concat: Array3<f64>,
    /// Row-stochastic score matrices `(batch, heads, w, w)`.
    pub scores: Array4<f64>,
}

impl AttentionParams {
    pub fn new<R: Rng + ?Sized>(channels: usize, latent: usize, heads: usize, key_dim: usize, rng: &mut R) -> Self {
        let width = heads * key_dim;
        let b_in = 1.0 / (channels as f64).sqrt();
        let b_lat = 1.0 / (latent as f64).sqrt();
        let b_out = 1.0 / (width as f64).sqrt();
        Self {
            heads,
            key_dim,
            wq: init_uniform((channels, width), b_in, rng),
            wk: init_uniform((channels, width), b_in, rng),
            wv: init_uniform((latent, width), b_lat, rng),
            wo: init_uniform((width, latent), b_out, rng),
        }
    }

    pub fn zeros(channels: usize, latent: usize, heads: usize, key_dim: usize) -> Self {
        let width = heads * key_dim;
        Self {
            heads,
            key_dim,
            wq: Array2::zeros((channels, width)),
            wk: Array2::zeros((channels, width)),
            wv: Array2::zeros((latent, width)),
            wo: Array2::zeros((width, latent)),
        }
    }

    pub fn head_query(&self, head: usize) -> ArrayView2<'_, f64> {
        self.wq.slice(s![.., self.head_cols(head)])
    }

    pub fn head_key(&self, head: usize) -> ArrayView2<'_, f64> {
        self.wk.slice(s![.., self.head_cols(head)])
    }

    pub fn head_value(&self, head: usize) -> ArrayView2<'_, f64> {
        self.wv.slice(s![.., self.head_cols(head)])
    }

    fn head_cols(&self, head: usize) -> std::ops::Range<usize> {
        head * self.key_dim..(head + 1) * self.key_dim
    }

    fn project(x: ArrayView3<f64>, w: &Array2<f64>) -> Array3<f64> {
        let (steps, batch, f) = x.dim();
        let flat = x.to_shape((steps * batch, f)).expect("reshape");
        matmul(&flat, w)
            .into_shape_with_order((steps, batch, w.ncols()))
            .expect("reshape")
    }

    /// `x`: `(w, batch, d_D)` drives queries and keys; `values`:
    /// `(w, batch, d_Z)` drives the value matrices. Returns the context
    /// `(w, batch, d_Z)`.
    pub fn forward(&self, x: ArrayView3<f64>, values: ArrayView3<f64>) -> (Array3<f64>, AttentionCache) {
        let (steps, batch, _) = x.dim();
        let q = Self::project(x, &self.wq);
        let k = Self::project(x, &self.wk);
        let v = Self::project(values, &self.wv);
        let scale = 1.0 / (self.key_dim as f64).sqrt();
        let width = self.heads * self.key_dim;
        let mut concat = Array3::<f64>::zeros((steps, batch, width));
        let mut scores = Array4::<f64>::zeros((batch, self.heads, steps, steps));

        for bi in 0..batch {
            for head in 0..self.heads {
                let cols = self.head_cols(head);
                let qh = q.slice(s![.., bi, cols.clone()]);
                let kh = k.slice(s![.., bi, cols.clone()]);
                let vh = v.slice(s![.., bi, cols.clone()]);
                let mut a = scores.slice_mut(s![bi, head, .., ..]);
                general_mat_mul(scale, &qh, &kh.t(), 0.0, &mut a);
                softmax_rows(a.view_mut());
                let mut ctx = concat.slice_mut(s![.., bi, cols]);
                general_mat_mul(1.0, &a, &vh, 0.0, &mut ctx);
            }
        }

        let out = Self::project(concat.view(), &self.wo);
        (
            out,
            AttentionCache {
                q,
                k,
                v,
                concat,
                scores,
            },
        )
    }

    /// Returns the gradient w.r.t. the value source; queries/keys come from
    /// the (non-trainable) input window so no input gradient is produced.
    pub fn backward(
        &self,
        x: ArrayView3<f64>,
        values: ArrayView3<f64>,
        cache: &AttentionCache,
        dout: ArrayView3<f64>,
        grad: &mut AttentionParams,
    ) -> Array3<f64> {
        let (steps, batch, channels) = x.dim();
        let latent = values.dim().2;
        let width = self.heads * self.key_dim;
        let scale = 1.0 / (self.key_dim as f64).sqrt();

        let cat_flat = cache.concat.to_shape((steps * batch, width)).expect("reshape");
        let dout_flat = dout.to_shape((steps * batch, latent)).expect("reshape");
        general_mat_mul(1.0, &cat_flat.t(), &dout_flat, 1.0, &mut grad.wo);
        let dcat = matmul(&dout_flat, &self.wo.t())
            .into_shape_with_order((steps, batch, width))
            .expect("reshape");

        let mut dq = Array3::<f64>::zeros((steps, batch, width));
        let mut dk = Array3::<f64>::zeros((steps, batch, width));
        let mut dv = Array3::<f64>::zeros((steps, batch, width));
        let mut da = Array2::<f64>::zeros((steps, steps));
        for bi in 0..batch {
            for head in 0..self.heads {
                let cols = self.head_cols(head);
                let a = cache.scores.slice(s![bi, head, .., ..]);
                let dctx = dcat.slice(s![.., bi, cols.clone()]);
                let vh = cache.v.slice(s![.., bi, cols.clone()]);
                let qh = cache.q.slice(s![.., bi, cols.clone()]);
                let kh = cache.k.slice(s![.., bi, cols.clone()]);
                general_mat_mul(1.0, &dctx, &vh.t(), 0.0, &mut da);
                general_mat_mul(1.0, &a.t(), &dctx, 0.0, &mut dv.slice_mut(s![.., bi, cols.clone()]));
                // softmax Jacobian, row by row
                for r in 0..steps {
                    let dot: f64 = (0..steps).map(|c| da[[r, c]] * a[[r, c]]).sum();
                    for c in 0..steps {
                        da[[r, c]] = a[[r, c]] * (da[[r, c]] - dot) * scale;
                    }
                }
                general_mat_mul(1.0, &da, &kh, 0.0, &mut dq.slice_mut(s![.., bi, cols.clone()]));
                general_mat_mul(1.0, &da.t(), &qh, 0.0, &mut dk.slice_mut(s![.., bi, cols]));
            }
        }

        let x_flat = x.to_shape((steps * batch, channels)).expect("reshape");
        let v_flat = values.to_shape((steps * batch, latent)).expect("reshape");
        let dq_flat = dq.to_shape((steps * batch, width)).expect("reshape");
        let dk_flat = dk.to_shape((steps * batch, width)).expect("reshape");
        let dv_flat = dv.to_shape((steps * batch, width)).expect("reshape");
        general_mat_mul(1.0, &x_flat.t(), &dq_flat, 1.0, &mut grad.wq);
        general_mat_mul(1.0, &x_flat.t(), &dk_flat, 1.0, &mut grad.wk);
        general_mat_mul(1.0, &v_flat.t(), &dv_flat, 1.0, &mut grad.wv);
        matmul(&dv_flat, &self.wv.t())
            .into_shape_with_order((steps, batch, latent))
            .expect("reshape")
    }
}

/// In-place softmax over the last axis with row-max subtraction.
pub fn softmax_rows(mut m: ndarray::ArrayViewMut2<f64>) {
    for mut row in m.axis_iter_mut(Axis(0)) {
        match row.as_slice_mut() {
            Some(r) => softmax_slice(r),
            None => {
                let mut tmp = row.to_vec();
                softmax_slice(&mut tmp);
                row.assign(&ndarray::ArrayView1::from(&tmp[..]));
            }
        }
    }
}

fn softmax_slice(r: &mut [f64]) {
    let max = r.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    for v in r.iter_mut() {
        *v = (*v - max).exp();
    }
    let inv = 1.0 / r.iter().sum::<f64>();
    for v in r.iter_mut() {
        *v *= inv;
    }
}
