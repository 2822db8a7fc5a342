//! The TeVAE network.
//!
//! Encoder: two stacked BiLSTMs (outer then inner) followed by two
//! time-distributed affine heads for `mu_Z` and `logvar_Z`. Bridge:
//! multi-head attention with `Q, K` from the input window and `V` from the
//! latent matrix (`Z` while training, `mu_Z` at inference). Decoder: the
//! mirror-image BiLSTM stack and two heads for `mu_X`, `logvar_X`.
//!
//! The `NoMa` variant feeds the latent matrix straight into the decoder.
//!
//! All tensors are time-major `(w, batch, features)`.

mod attention;
mod checkpoint;
mod lstm;

pub use attention::{softmax_rows, AttentionCache, AttentionParams};
pub use checkpoint::{Checkpoint, TensorRecord};
pub use lstm::{BiLstm, Dense, Lstm};

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

use lstm::BiLstmCache;

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Row-major `a * b`.
pub(crate) fn matmul<S1, S2>(
    a: &ndarray::ArrayBase<S1, ndarray::Ix2>,
    b: &ndarray::ArrayBase<S2, ndarray::Ix2>,
) -> Array2<f64>
where
    S1: ndarray::Data<Elem = f64>,
    S2: ndarray::Data<Elem = f64>,
{
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    ndarray::linalg::general_mat_mul(1.0, a, b, 0.0, &mut out);
    out
}

pub(crate) fn init_uniform<R: Rng + ?Sized>(shape: (usize, usize), bound: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Tevae,
    /// Attention removed, latent matrix fed directly to the decoder.
    Noma,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Tevae => f.write_str("tevae"),
            Variant::Noma => f.write_str("noma"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tevae" => Ok(Variant::Tevae),
            "noma" => Ok(Variant::Noma),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Window length `w` in time steps.
    pub window: usize,
    /// Channel count `d_D`.
    pub channels: usize,
    /// Latent width `d_Z`.
    pub latent: usize,
    pub heads: usize,
    /// Key width `d_K`.
    pub key_dim: usize,
    /// Encoder hidden sizes per direction, `(outer, inner)`.
    pub enc_hidden: (usize, usize),
    /// Decoder hidden sizes per direction, `(inner, outer)`.
    pub dec_hidden: (usize, usize),
    #[serde(default)]
    pub variant: Variant,
}

impl ModelConfig {
    /// Full-size configuration: `w=256, d_Z=64, h=8, d_K=floor(d_D/h)`,
    /// encoder `(512, 256)`, decoder `(256, 512)`.
    pub fn full_size(channels: usize) -> Self {
        let heads = 8;
        Self {
            window: 256,
            channels,
            latent: 64,
            heads,
            key_dim: (channels / heads).max(1),
            enc_hidden: (512, 256),
            dec_hidden: (256, 512),
            variant: Variant::Tevae,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("window", self.window),
            ("channels", self.channels),
            ("latent", self.latent),
            ("heads", self.heads),
            ("key_dim", self.key_dim),
            ("enc_hidden.0", self.enc_hidden.0),
            ("enc_hidden.1", self.enc_hidden.1),
            ("dec_hidden.0", self.dec_hidden.0),
            ("dec_hidden.1", self.dec_hidden.1),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Latent distribution parameters, each `(w, batch, d_Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentParams {
    pub mu: Array3<f64>,
    pub logvar: Array3<f64>,
}

/// Output distribution parameters, each `(w, batch, d_D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputParams {
    pub mu: Array3<f64>,
    pub logvar: Array3<f64>,
}

impl LatentParams {
    pub fn window(&self, b: usize) -> (Array2<f64>, Array2<f64>) {
        (
            self.mu.index_axis(Axis(1), b).to_owned(),
            self.logvar.index_axis(Axis(1), b).to_owned(),
        )
    }
}

impl OutputParams {
    pub fn window(&self, b: usize) -> (Array2<f64>, Array2<f64>) {
        (
            self.mu.index_axis(Axis(1), b).to_owned(),
            self.logvar.index_axis(Axis(1), b).to_owned(),
        )
    }
}

/// Loss terms averaged over the windows of a batch (per-window values for a
/// batch of one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub nll: f64,
    pub kl: f64,
    pub beta: f64,
    pub total: f64,
}

/// Stacks `(w, d)` windows into a time-major `(w, batch, d)` batch.
pub fn stack_windows<'a, I>(windows: I) -> Result<Array3<f64>>
where
    I: IntoIterator<Item = ArrayView2<'a, f64>>,
{
    let views: Vec<_> = windows.into_iter().map(|w| w.insert_axis(Axis(1))).collect();
    if views.is_empty() {
        return Err(Error::Empty("window batch"));
    }
    ndarray::concatenate(Axis(1), &views).map_err(|_| Error::ShapeMismatch {
        context: "stack_windows",
        expected: vec![views[0].dim().0, views[0].dim().2],
        got: vec![],
    })
}

#[inline]
fn clamp_logvar(v: f64) -> f64 {
    v.clamp(LOGVAR_MIN, LOGVAR_MAX)
}

#[inline]
fn inside_clamp(raw: f64) -> bool {
    raw > LOGVAR_MIN && raw < LOGVAR_MAX
}

/// Z = mu + exp(0.5 logvar) * noise
pub fn sample_latent(lp: &LatentParams, noise: ArrayView3<f64>) -> Result<Array3<f64>> {
    if lp.mu.dim() != noise.dim() {
        let (a, b, c) = lp.mu.dim();
        let (x, y, z) = noise.dim();
        return Err(Error::ShapeMismatch {
            context: "sample_latent",
            expected: vec![a, b, c],
            got: vec![x, y, z],
        });
    }
    Ok(Zip::from(&lp.mu)
        .and(&lp.logvar)
        .and(noise)
        .map_collect(|&m, &lv, &e| m + (0.5 * lv).exp() * e))
}

/// Gaussian NLL summed over all elements of each window, averaged over the
/// batch; KL of the diagonal latent Gaussian to N(0, I) likewise.
pub fn elbo_loss(target: ArrayView3<f64>, out: &OutputParams, lat: &LatentParams, beta: f64) -> LossBreakdown {
    let batch = target.dim().1.max(1) as f64;
    let nll: f64 = Zip::from(target)
        .and(&out.mu)
        .and(&out.logvar)
        .fold(0.0, |acc, &x, &m, &lv| {
            let d = x - m;
            acc + 0.5 * (LN_2PI + lv + d * d * (-lv).exp())
        })
        / batch;
    let kl = kl_divergence(lat) / batch;
    LossBreakdown {
        nll,
        kl,
        beta,
        total: nll + beta * kl,
    }
}

/// Closed-form `KL(N(mu, exp(logvar)) || N(0, 1))` summed over all elements.
pub fn kl_divergence(lat: &LatentParams) -> f64 {
    Zip::from(&lat.mu)
        .and(&lat.logvar)
        .fold(0.0, |acc, &m, &lv| acc + 0.5 * (lv.exp() + m * m - 1.0 - lv))
}

/// What feeds the value path (or the decoder, for `NoMa`).
#[derive(Debug, Clone, Copy)]
pub enum LatentInput<'a> {
    /// `Z = mu + sigma * noise` with the given standard-normal draws.
    Sample(ArrayView3<'a, f64>),
    /// `Z = mu_Z`.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeVae {
    pub config: ModelConfig,
    pub enc_outer: BiLstm,
    pub enc_inner: BiLstm,
    pub enc_mu: Dense,
    pub enc_logvar: Dense,
    pub attention: Option<AttentionParams>,
    pub dec_inner: BiLstm,
    pub dec_outer: BiLstm,
    pub dec_mu: Dense,
    pub dec_logvar: Dense,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Array3<f64>,
    enc_outer_out: Array3<f64>,
    enc_outer: BiLstmCache,
    enc_inner_out: Array3<f64>,
    enc_inner: BiLstmCache,
    raw_z_logvar: Array3<f64>,
    noise: Option<Array3<f64>>,
    z: Array3<f64>,
    attention: Option<AttentionCache>,
    context: Array3<f64>,
    dec_inner_out: Array3<f64>,
    dec_inner: BiLstmCache,
    dec_outer_out: Array3<f64>,
    dec_outer: BiLstmCache,
    raw_x_logvar: Array3<f64>,
}

impl ForwardCache {
    /// Attention scores `(batch, heads, w, w)` when the bridge is present.
    pub fn attention_scores(&self) -> Option<&ndarray::Array4<f64>> {
        self.attention.as_ref().map(|a| &a.scores)
    }
}

impl TeVae {
    /// Fresh weights drawn from `seed` (uniform fan-in scaling, forget-gate
    /// bias 1).
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let c = &config;
        let enc_outer = BiLstm::new(c.channels, c.enc_hidden.0, &mut rng);
        let enc_inner = BiLstm::new(2 * c.enc_hidden.0, c.enc_hidden.1, &mut rng);
        let enc_mu = Dense::new(2 * c.enc_hidden.1, c.latent, &mut rng);
        let enc_logvar = Dense::new(2 * c.enc_hidden.1, c.latent, &mut rng);
        let attention = (c.variant == Variant::Tevae)
            .then(|| AttentionParams::new(c.channels, c.latent, c.heads, c.key_dim, &mut rng));
        let dec_inner = BiLstm::new(c.latent, c.dec_hidden.0, &mut rng);
        let dec_outer = BiLstm::new(2 * c.dec_hidden.0, c.dec_hidden.1, &mut rng);
        let dec_mu = Dense::new(2 * c.dec_hidden.1, c.channels, &mut rng);
        let dec_logvar = Dense::new(2 * c.dec_hidden.1, c.channels, &mut rng);
        Ok(Self {
            config,
            enc_outer,
            enc_inner,
            enc_mu,
            enc_logvar,
            attention,
            dec_inner,
            dec_outer,
            dec_mu,
            dec_logvar,
        })
    }

    /// Same architecture, all weights zero (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let c = &self.config;
        Self {
            config: c.clone(),
            enc_outer: BiLstm::zeros(c.channels, c.enc_hidden.0),
            enc_inner: BiLstm::zeros(2 * c.enc_hidden.0, c.enc_hidden.1),
            enc_mu: Dense::zeros(2 * c.enc_hidden.1, c.latent),
            enc_logvar: Dense::zeros(2 * c.enc_hidden.1, c.latent),
            attention: self
                .attention
                .as_ref()
                .map(|_| AttentionParams::zeros(c.channels, c.latent, c.heads, c.key_dim)),
            dec_inner: BiLstm::zeros(c.latent, c.dec_hidden.0),
            dec_outer: BiLstm::zeros(2 * c.dec_hidden.0, c.dec_hidden.1),
            dec_mu: Dense::zeros(2 * c.dec_hidden.1, c.channels),
            dec_logvar: Dense::zeros(2 * c.dec_hidden.1, c.channels),
        }
    }

    fn check_input(&self, x: ArrayView3<f64>) -> Result<()> {
        let (w, _, d) = x.dim();
        if w != self.config.window || d != self.config.channels || x.dim().1 == 0 {
            return Err(Error::ShapeMismatch {
                context: "model input",
                expected: vec![self.config.window, x.dim().1.max(1), self.config.channels],
                got: vec![w, x.dim().1, d],
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite model input".into()));
        }
        Ok(())
    }

    /// Encoder: `X -> (mu_Z, logvar_Z)`.
    pub fn encode(&self, x: ArrayView3<f64>) -> Result<LatentParams> {
        self.check_input(x)?;
        let (h1, _) = self.enc_outer.forward(x);
        let (h2, _) = self.enc_inner.forward(h1.view());
        Ok(LatentParams {
            mu: self.enc_mu.forward(h2.view()),
            logvar: self.enc_logvar.forward(h2.view()).mapv(clamp_logvar),
        })
    }

    /// Attention bridge: `C = [C_1 .. C_h] W^O` with queries/keys from `x`
    /// and values from `values`.
    pub fn attend(&self, x: ArrayView3<f64>, values: ArrayView3<f64>) -> Result<Array3<f64>> {
        let ap = self
            .attention
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model has no attention bridge".into()))?;
        self.check_input(x)?;
        let expected = (x.dim().0, x.dim().1, self.config.latent);
        if values.dim() != expected {
            return Err(Error::ShapeMismatch {
                context: "attention values",
                expected: vec![expected.0, expected.1, expected.2],
                got: vec![values.dim().0, values.dim().1, values.dim().2],
            });
        }
        Ok(ap.forward(x, values).0)
    }

    /// Decoder: `C -> (mu_X, logvar_X)`.
    pub fn decode(&self, context: ArrayView3<f64>) -> Result<OutputParams> {
        let (w, _, d) = context.dim();
        if w != self.config.window || d != self.config.latent {
            return Err(Error::ShapeMismatch {
                context: "decoder input",
                expected: vec![self.config.window, context.dim().1, self.config.latent],
                got: vec![w, context.dim().1, d],
            });
        }
        let (h1, _) = self.dec_inner.forward(context);
        let (h2, _) = self.dec_outer.forward(h1.view());
        Ok(OutputParams {
            mu: self.dec_mu.forward(h2.view()),
            logvar: self.dec_logvar.forward(h2.view()).mapv(clamp_logvar),
        })
    }

    /// Full forward pass keeping activations for [`TeVae::backward`].
    pub fn forward(
        &self,
        x: ArrayView3<f64>,
        latent: LatentInput<'_>,
    ) -> Result<(OutputParams, LatentParams, ForwardCache)> {
        self.check_input(x)?;
        let (enc_outer_out, enc_outer) = self.enc_outer.forward(x);
        let (enc_inner_out, enc_inner) = self.enc_inner.forward(enc_outer_out.view());
        let mu_z = self.enc_mu.forward(enc_inner_out.view());
        let raw_z_logvar = self.enc_logvar.forward(enc_inner_out.view());
        let lat = LatentParams {
            mu: mu_z,
            logvar: raw_z_logvar.mapv(clamp_logvar),
        };
        let (z, noise) = match latent {
            LatentInput::Sample(noise) => (sample_latent(&lat, noise)?, Some(noise.to_owned())),
            LatentInput::Mean => (lat.mu.clone(), None),
        };
        let (context, attention) = match &self.attention {
            Some(ap) => {
                let (c, cache) = ap.forward(x, z.view());
                (c, Some(cache))
            }
            None => (z.clone(), None),
        };
        let (dec_inner_out, dec_inner) = self.dec_inner.forward(context.view());
        let (dec_outer_out, dec_outer) = self.dec_outer.forward(dec_inner_out.view());
        let mu_x = self.dec_mu.forward(dec_outer_out.view());
        let raw_x_logvar = self.dec_logvar.forward(dec_outer_out.view());
        let out = OutputParams {
            mu: mu_x,
            logvar: raw_x_logvar.mapv(clamp_logvar),
        };
        let cache = ForwardCache {
            x: x.to_owned(),
            enc_outer_out,
            enc_outer,
            enc_inner_out,
            enc_inner,
            raw_z_logvar,
            noise,
            z,
            attention,
            context,
            dec_inner_out,
            dec_inner,
            dec_outer_out,
            dec_outer,
            raw_x_logvar,
        };
        Ok((out, lat, cache))
    }

    /// Training pass: encode, sample with `noise`, attend (or bypass for
    /// `NoMa`), decode and score against the clean `target`.
    pub fn forward_train(
        &self,
        x: ArrayView3<f64>,
        target: ArrayView3<f64>,
        noise: ArrayView3<f64>,
        beta: f64,
    ) -> Result<(OutputParams, LossBreakdown, ForwardCache)> {
        if target.dim() != x.dim() {
            return Err(Error::ShapeMismatch {
                context: "training target",
                expected: vec![x.dim().0, x.dim().1, x.dim().2],
                got: vec![target.dim().0, target.dim().1, target.dim().2],
            });
        }
        let (out, lat, cache) = self.forward(x, LatentInput::Sample(noise))?;
        let loss = elbo_loss(target, &out, &lat, beta);
        Ok((out, loss, cache))
    }

    /// Deterministic inference pass with `Z = mu_Z`.
    pub fn forward_infer(&self, x: ArrayView3<f64>) -> Result<(OutputParams, LatentParams)> {
        let (out, lat, _) = self.forward(x, LatentInput::Mean)?;
        Ok((out, lat))
    }

    /// Gradient of the batch-mean `nll + beta * kl` w.r.t. every parameter.
    pub fn backward(
        &self,
        target: ArrayView3<f64>,
        out: &OutputParams,
        lat: &LatentParams,
        cache: &ForwardCache,
        beta: f64,
    ) -> TeVae {
        let mut g = self.zeros_like();
        let inv_b = 1.0 / target.dim().1 as f64;

        // output heads
        let mut d_mu_x = Array3::<f64>::zeros(out.mu.raw_dim());
        let mut d_lv_x = Array3::<f64>::zeros(out.mu.raw_dim());
        Zip::from(&mut d_mu_x)
            .and(&mut d_lv_x)
            .and(target)
            .and(&out.mu)
            .and(&out.logvar)
            .and(&cache.raw_x_logvar)
            .for_each(|dm, dl, &x, &m, &lv, &raw| {
                let prec = (-lv).exp();
                let d = x - m;
                *dm = -d * prec * inv_b;
                *dl = if inside_clamp(raw) {
                    0.5 * (1.0 - d * d * prec) * inv_b
                } else {
                    0.0
                };
            });
        let mut d_dec = self
            .dec_mu
            .backward(cache.dec_outer_out.view(), d_mu_x.view(), &mut g.dec_mu);
        d_dec += &self
            .dec_logvar
            .backward(cache.dec_outer_out.view(), d_lv_x.view(), &mut g.dec_logvar);
        let d_inner = self.dec_outer.backward(
            cache.dec_inner_out.view(),
            &cache.dec_outer,
            d_dec.view(),
            &mut g.dec_outer,
        );
        let d_context =
            self.dec_inner
                .backward(cache.context.view(), &cache.dec_inner, d_inner.view(), &mut g.dec_inner);

        let d_z = match (&self.attention, &cache.attention, g.attention.as_mut()) {
            (Some(ap), Some(ac), Some(ga)) => ap.backward(cache.x.view(), cache.z.view(), ac, d_context.view(), ga),
            _ => d_context,
        };

        // latent heads: reparametrisation path plus KL
        let mut d_mu_z = d_z.clone();
        let mut d_lv_z = Array3::<f64>::zeros(d_z.raw_dim());
        Zip::from(&mut d_mu_z)
            .and(&mut d_lv_z)
            .and(&lat.mu)
            .and(&lat.logvar)
            .and(&cache.raw_z_logvar)
            .for_each(|dm, dl, &m, &lv, &raw| {
                *dm += beta * m * inv_b;
                *dl = if inside_clamp(raw) {
                    beta * 0.5 * (lv.exp() - 1.0) * inv_b
                } else {
                    0.0
                };
            });
        if let Some(noise) = &cache.noise {
            Zip::from(&mut d_lv_z)
                .and(&d_z)
                .and(noise)
                .and(&lat.logvar)
                .and(&cache.raw_z_logvar)
                .for_each(|dl, &dz, &e, &lv, &raw| {
                    if inside_clamp(raw) {
                        *dl += dz * 0.5 * (0.5 * lv).exp() * e;
                    }
                });
        }
        let mut d_enc = self
            .enc_mu
            .backward(cache.enc_inner_out.view(), d_mu_z.view(), &mut g.enc_mu);
        d_enc += &self
            .enc_logvar
            .backward(cache.enc_inner_out.view(), d_lv_z.view(), &mut g.enc_logvar);
        let d_outer = self.enc_inner.backward(
            cache.enc_outer_out.view(),
            &cache.enc_inner,
            d_enc.view(),
            &mut g.enc_inner,
        );
        self.enc_outer
            .backward(cache.x.view(), &cache.enc_outer, d_outer.view(), &mut g.enc_outer);
        g
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (prefix, layer) in self.bilstms() {
            for (dir, l) in [("fwd", &layer.fwd), ("bwd", &layer.bwd)] {
                out.push((format!("{prefix}.{dir}.wx"), l.wx.shape().to_vec(), slice(&l.wx)));
                out.push((format!("{prefix}.{dir}.wh"), l.wh.shape().to_vec(), slice(&l.wh)));
                out.push((format!("{prefix}.{dir}.b"), l.b.shape().to_vec(), slice(&l.b)));
            }
        }
        for (prefix, d) in self.denses() {
            out.push((format!("{prefix}.w"), d.w.shape().to_vec(), slice(&d.w)));
            out.push((format!("{prefix}.b"), d.b.shape().to_vec(), slice(&d.b)));
        }
        if let Some(ap) = &self.attention {
            for (name, a) in [("wq", &ap.wq), ("wk", &ap.wk), ("wv", &ap.wv), ("wo", &ap.wo)] {
                out.push((format!("attention.{name}"), a.shape().to_vec(), slice(a)));
            }
        }
        out
    }

    /// Mutable parameter slices in the same order as [`TeVae::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in [
            &mut self.enc_outer,
            &mut self.enc_inner,
            &mut self.dec_inner,
            &mut self.dec_outer,
        ] {
            for l in [&mut layer.fwd, &mut layer.bwd] {
                out.push(l.wx.as_slice_mut().expect("standard layout"));
                out.push(l.wh.as_slice_mut().expect("standard layout"));
                out.push(l.b.as_slice_mut().expect("standard layout"));
            }
        }
        for d in [
            &mut self.enc_mu,
            &mut self.enc_logvar,
            &mut self.dec_mu,
            &mut self.dec_logvar,
        ] {
            out.push(d.w.as_slice_mut().expect("standard layout"));
            out.push(d.b.as_slice_mut().expect("standard layout"));
        }
        if let Some(ap) = &mut self.attention {
            for a in [&mut ap.wq, &mut ap.wk, &mut ap.wv, &mut ap.wo] {
                out.push(a.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    fn bilstms(&self) -> [(&'static str, &BiLstm); 4] {
        [
            ("enc_outer", &self.enc_outer),
            ("enc_inner", &self.enc_inner),
            ("dec_inner", &self.dec_inner),
            ("dec_outer", &self.dec_outer),
        ]
    }

    fn denses(&self) -> [(&'static str, &Dense); 4] {
        [
            ("enc_mu", &self.enc_mu),
            ("enc_logvar", &self.enc_logvar),
            ("dec_mu", &self.dec_mu),
            ("dec_logvar", &self.dec_logvar),
        ]
    }
}

fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

#[cfg(test)]
mod tests;
