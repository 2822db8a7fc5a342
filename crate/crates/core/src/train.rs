//! Denoising training loop with cyclic KL annealing, AMSGrad and early
//! stopping on validation NLL.

use ndarray::{Array2, Array3, ArrayView3};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{elbo_loss, LatentInput, TeVae};
use crate::rng::{derive_stream, fill_standard_normal};

/// KL weight schedule: a linear warm-up to `grace_beta_max`, then repeated
/// linear ramps from `grace_beta_max` to `cycle_beta_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealSchedule {
    pub grace_epochs: usize,
    pub grace_beta_max: f64,
    pub cycle_epochs: usize,
    pub cycle_beta_max: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            grace_epochs: 25,
            grace_beta_max: 1e-8,
            cycle_epochs: 25,
            cycle_beta_max: 1e-2,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.grace_epochs == 0 || self.cycle_epochs == 0 {
            return Err(Error::InvalidArgument("anneal epochs must be positive".into()));
        }
        if !(self.grace_beta_max > 0.0 && self.cycle_beta_max > 0.0) {
            return Err(Error::InvalidArgument("anneal betas must be positive".into()));
        }
        Ok(())
    }
}

/// KL weight for the 0-based `epoch`.
pub fn kl_weight(epoch: usize, s: &AnnealSchedule) -> f64 {
    if epoch < s.grace_epochs {
        s.grace_beta_max * (epoch as f64 / s.grace_epochs as f64)
    } else {
        let e = (epoch - s.grace_epochs) % s.cycle_epochs;
        s.grace_beta_max + (s.cycle_beta_max - s.grace_beta_max) * (e as f64 / s.cycle_epochs as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub corrupt_std: f64,
    pub seed: u64,
    pub learning_rate: f64,
    pub anneal: AnnealSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_epochs: 2500,
            patience: 250,
            corrupt_std: 0.01,
            seed: 0,
            learning_rate: 1e-3,
            anneal: AnnealSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument(
                "patience, batch_size and max_epochs must be at least 1".into(),
            ));
        }
        if !(self.corrupt_std >= 0.0) {
            return Err(Error::InvalidArgument("corrupt_std must be non-negative".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be non-negative".into()));
        }
        self.anneal.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub best_val_nll: f64,
    pub best_epoch: usize,
    pub epochs_since_improve: usize,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        Self {
            best_val_nll: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improve: 0,
        }
    }
}

impl EarlyStopState {
    /// Records an epoch's validation NLL; true when it is a new best.
    pub fn update(&mut self, epoch: usize, val_nll: f64) -> bool {
        if val_nll < self.best_val_nll {
            self.best_val_nll = val_nll;
            self.best_epoch = epoch;
            self.epochs_since_improve = 0;
            true
        } else {
            self.epochs_since_improve += 1;
            false
        }
    }

    pub fn should_stop(&self, patience: usize) -> bool {
        self.epochs_since_improve >= patience
    }
}

/// `x + std * noise`.
pub fn corrupt_with(x: ArrayView3<f64>, std: f64, noise: ArrayView3<f64>) -> Array3<f64> {
    let mut out = x.to_owned();
    if std != 0.0 {
        out.zip_mut_with(&noise, |v, &e| *v += std * e);
    }
    out
}

/// Adds Gaussian noise drawn from `rng`. Draws are consumed even when
/// `std` is zero so the random stream does not depend on it.
pub fn corrupt<R: Rng + ?Sized>(x: ArrayView3<f64>, std: f64, rng: &mut R) -> Array3<f64> {
    let mut noise = Array3::<f64>::zeros(x.raw_dim());
    fill_standard_normal(rng, noise.as_slice_mut().expect("standard layout"));
    corrupt_with(x, std, noise.view())
}

/// Adam with the running maximum of the second moment in the denominator.
#[derive(Debug, Clone)]
pub struct AmsGrad {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    vhat: Vec<Vec<f64>>,
}

impl AmsGrad {
    pub fn new(model: &TeVae, learning_rate: f64) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|(_, _, d)| vec![0.0; d.len()]).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step: 0,
            m: zeros.clone(),
            v: zeros.clone(),
            vhat: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Running-max second-moment estimates, one vector per tensor.
    pub fn max_second_moments(&self) -> &[Vec<f64>] {
        &self.vhat
    }

    pub fn apply(&mut self, model: &mut TeVae, grads: &TeVae) {
        self.step += 1;
        let t = self.step as i32;
        let lr_t = self.learning_rate * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t));
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let grads = grads.tensors();
        for (i, param) in model.tensors_mut().into_iter().enumerate() {
            let g = grads[i].2;
            let (m, v, vhat) = (&mut self.m[i], &mut self.v[i], &mut self.vhat[i]);
            for j in 0..param.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                vhat[j] = vhat[j].max(v[j]);
                param[j] -= lr_t * m[j] / (vhat[j].sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub train_kl: f64,
    pub beta: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation NLL.
    pub model: TeVae,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

fn stack(windows: &[Array2<f64>], idx: &[usize]) -> Array3<f64> {
    let (w, d) = windows[idx[0]].dim();
    let mut x = Array3::<f64>::zeros((w, idx.len(), d));
    for (b, &i) in idx.iter().enumerate() {
        x.index_axis_mut(ndarray::Axis(1), b).assign(&windows[i]);
    }
    x
}

fn check_windows(windows: &[Array2<f64>], model: &TeVae, what: &'static str) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::Empty(what));
    }
    let expected = (model.config.window, model.config.channels);
    if let Some(bad) = windows.iter().find(|w| w.dim() != expected) {
        return Err(Error::ShapeMismatch {
            context: what,
            expected: vec![expected.0, expected.1],
            got: vec![bad.nrows(), bad.ncols()],
        });
    }
    Ok(())
}

/// Mean per-window reconstruction NLL on the deterministic inference path.
pub fn validation_nll(model: &TeVae, windows: &[Array2<f64>], batch_size: usize) -> Result<f64> {
    check_windows(windows, model, "validation windows")?;
    let idx: Vec<usize> = (0..windows.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let x = stack(windows, chunk);
        let (out, lat) = model.forward_infer(x.view())?;
        total += elbo_loss(x.view(), &out, &lat, 0.0).nll * chunk.len() as f64;
    }
    Ok(total / windows.len() as f64)
}

/// Called after every epoch; returning false stops training.
pub type EpochHook<'a> = dyn FnMut(&EpochRecord) -> bool + 'a;

pub fn fit(train: &[Array2<f64>], val: &[Array2<f64>], model: TeVae, cfg: &TrainConfig) -> Result<TrainOutcome> {
    fit_with_hook(train, val, model, cfg, &mut |_| true)
}

pub fn fit_with_hook(
    train: &[Array2<f64>],
    val: &[Array2<f64>],
    mut model: TeVae,
    cfg: &TrainConfig,
    hook: &mut EpochHook<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_windows(train, &model, "training windows")?;
    check_windows(val, &model, "validation windows")?;
    let mut rng = derive_stream(cfg.seed, 1);
    let mut opt = AmsGrad::new(&model, cfg.learning_rate);
    let mut stop = EarlyStopState::default();
    let mut best = model.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let (w, latent) = (model.config.window, model.config.latent);
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let beta = kl_weight(epoch, &cfg.anneal);
        order.shuffle(&mut rng);
        let (mut nll_sum, mut kl_sum) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let clean = stack(train, chunk);
            let noisy = corrupt(clean.view(), cfg.corrupt_std, &mut rng);
            let mut eps = Array3::<f64>::zeros((w, chunk.len(), latent));
            fill_standard_normal(&mut rng, eps.as_slice_mut().expect("standard layout"));
            let (out, lat, cache) = model.forward(noisy.view(), LatentInput::Sample(eps.view()))?;
            let loss = elbo_loss(clean.view(), &out, &lat, beta);
            if !loss.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("training loss {:?}", loss),
                });
            }
            let grads = model.backward(clean.view(), &out, &lat, &cache, beta);
            opt.apply(&mut model, &grads);
            nll_sum += loss.nll * chunk.len() as f64;
            kl_sum += loss.kl * chunk.len() as f64;
        }
        let val_nll = validation_nll(&model, val, cfg.batch_size)?;
        if !val_nll.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation NLL {val_nll}"),
            });
        }
        let record = EpochRecord {
            epoch,
            train_nll: nll_sum / train.len() as f64,
            train_kl: kl_sum / train.len() as f64,
            beta,
            val_nll,
        };
        history.push(record);
        if stop.update(epoch, val_nll) {
            best = model.clone();
        }
        let keep_going = hook(&record);
        if stop.should_stop(cfg.patience) {
            stopped_early = true;
            break;
        }
        if !keep_going {
            break;
        }
    }

    Ok(TrainOutcome {
        model: best,
        best_epoch: stop.best_epoch,
        best_val_nll: stop.best_val_nll,
        history,
        stopped_early,
    })
}
