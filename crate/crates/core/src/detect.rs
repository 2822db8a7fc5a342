//! Shift-1 scoring, reverse-windowing, thresholding and root-cause
//! attribution.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TeVae, LN_2PI};
use crate::preprocess::Sequence;

/// Windows per inference batch when scoring.
pub const DEFAULT_SCORE_BATCH: usize = 64;

/// How overlapping window outputs are folded back onto the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReverseWindowMethod {
    First,
    Last,
    Mean,
}

impl ReverseWindowMethod {
    pub const ALL: [ReverseWindowMethod; 3] = [Self::First, Self::Last, Self::Mean];
}

impl fmt::Display for ReverseWindowMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::First => "first",
            Self::Last => "last",
            Self::Mean => "mean",
        })
    }
}

impl FromStr for ReverseWindowMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(Self::First),
            "last" => Ok(Self::Last),
            "mean" => Ok(Self::Mean),
            other => Err(Error::InvalidArgument(format!(
                "unknown reverse-window method {other:?} (expected first, last or mean)"
            ))),
        }
    }
}

/// Per-step reconstruction distribution and the resulting NLL scores.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyScore {
    /// Multivariate score, one value per time step.
    pub s: Vec<f64>,
    /// Univariate NLLs, `T x d_D`.
    pub per_channel: Array2<f64>,
    pub mu: Array2<f64>,
    pub sigma: Array2<f64>,
}

impl AnomalyScore {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.s.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Folds per-window output moments back onto `len` steps.
///
/// `mu` and `var` are `(w, n_windows, d)` with window `k` starting at step
/// `k`, so `n_windows = len - w + 1`. Returns per-step mean and variance.
pub struct ReverseWindower {
    method: ReverseWindowMethod,
    window: usize,
    len: usize,
    mu: Array2<f64>,
    var: Array2<f64>,
    count: Vec<u32>,
}

impl ReverseWindower {
    pub fn new(method: ReverseWindowMethod, window: usize, len: usize, channels: usize) -> Self {
        // NaN marks steps no window has written yet
        let fill = if method == ReverseWindowMethod::Mean {
            0.0
        } else {
            f64::NAN
        };
        Self {
            method,
            window,
            len,
            mu: Array2::from_elem((len, channels), fill),
            var: Array2::from_elem((len, channels), fill),
            count: vec![0; len],
        }
    }

    fn windows(&self) -> usize {
        self.len + 1 - self.window
    }

    /// Adds the outputs of windows `first .. first + batch`; batches must
    /// arrive in start order.
    pub fn push(&mut self, first: usize, mu: ArrayView3<f64>, var: ArrayView3<f64>) {
        let (w, batch, _) = mu.dim();
        let last_window = self.windows() - 1;
        for b in 0..batch {
            let k = first + b;
            let wmu = mu.slice(s![.., b, ..]);
            let wvar = var.slice(s![.., b, ..]);
            match self.method {
                ReverseWindowMethod::Mean => {
                    for i in 0..w {
                        let t = k + i;
                        self.mu.row_mut(t).zip_mut_with(&wmu.row(i), |a, &v| *a += v);
                        self.var.row_mut(t).zip_mut_with(&wvar.row(i), |a, &v| *a += v);
                        self.count[t] += 1;
                    }
                }
                ReverseWindowMethod::First => {
                    self.set(k, wmu, wvar, 0);
                    if k == last_window {
                        for i in 1..w {
                            self.set(k + i, wmu, wvar, i);
                        }
                    }
                }
                ReverseWindowMethod::Last => {
                    self.set(k + w - 1, wmu, wvar, w - 1);
                    if k == 0 {
                        for i in 0..w - 1 {
                            self.set(i, wmu, wvar, i);
                        }
                    }
                }
            }
        }
    }

    fn set(&mut self, t: usize, mu: ArrayView2<f64>, var: ArrayView2<f64>, i: usize) {
        self.mu.row_mut(t).assign(&mu.row(i));
        self.var.row_mut(t).assign(&var.row(i));
        self.count[t] = 1;
    }

    pub fn finish(mut self) -> Result<(Array2<f64>, Array2<f64>)> {
        if let Some(t) = self.count.iter().position(|&c| c == 0) {
            return Err(Error::InvalidArgument(format!(
                "reverse-windowing left step {t} uncovered"
            )));
        }
        if self.method == ReverseWindowMethod::Mean {
            for (t, &c) in self.count.iter().enumerate() {
                let inv = 1.0 / c as f64;
                self.mu.row_mut(t).mapv_inplace(|v| v * inv);
                self.var.row_mut(t).mapv_inplace(|v| v * inv);
            }
        }
        Ok((self.mu, self.var))
    }
}

/// `0.5 (ln 2pi + 2 ln sigma + (x - mu)^2 / sigma^2)` per entry, with the row
/// sums as the multivariate score.
pub fn gaussian_scores(x: ArrayView2<f64>, mu: Array2<f64>, var: Array2<f64>) -> Result<AnomalyScore> {
    if x.dim() != mu.dim() || x.dim() != var.dim() {
        return Err(Error::ShapeMismatch {
            context: "gaussian_scores",
            expected: vec![x.nrows(), x.ncols()],
            got: vec![mu.nrows(), mu.ncols()],
        });
    }
    let sigma = var.mapv(f64::sqrt);
    let mut per_channel = Array2::<f64>::zeros(x.dim());
    ndarray::Zip::from(&mut per_channel)
        .and(x)
        .and(&mu)
        .and(&sigma)
        .for_each(|p, &xv, &m, &sd| {
            let z = (xv - m) / sd;
            *p = 0.5 * (LN_2PI + 2.0 * sd.ln() + z * z);
        });
    let s = per_channel.rows().into_iter().map(|r| r.sum()).collect();
    Ok(AnomalyScore {
        s,
        per_channel,
        mu,
        sigma,
    })
}

/// Scores a (normalised) sequence with every shift-1 window.
pub fn score_sequence(seq: &Sequence, model: &TeVae, method: ReverseWindowMethod) -> Result<AnomalyScore> {
    score_sequence_batched(seq, model, method, DEFAULT_SCORE_BATCH)
}

pub fn score_sequence_batched(
    seq: &Sequence,
    model: &TeVae,
    method: ReverseWindowMethod,
    batch: usize,
) -> Result<AnomalyScore> {
    let mut scores = score_sequence_multi(seq, model, &[method], batch)?;
    Ok(scores.remove(0))
}

/// One score per entry of `methods`, sharing the model passes.
pub fn score_sequence_multi(
    seq: &Sequence,
    model: &TeVae,
    methods: &[ReverseWindowMethod],
    batch: usize,
) -> Result<Vec<AnomalyScore>> {
    let w = model.config.window;
    let (len, d) = seq.values.dim();
    if d != model.config.channels {
        return Err(Error::ChannelMismatch {
            expected: model.config.channels,
            got: d,
        });
    }
    if len < w {
        return Err(Error::SequenceShorterThanWindow { len, window: w });
    }
    if methods.is_empty() {
        return Err(Error::Empty("reverse-window method list"));
    }
    let batch = batch.max(1);
    let n_windows = len - w + 1;
    let mut folders: Vec<ReverseWindower> = methods.iter().map(|&m| ReverseWindower::new(m, w, len, d)).collect();
    let mut first = 0;
    while first < n_windows {
        let nb = batch.min(n_windows - first);
        let mut x = Array3::<f64>::zeros((w, nb, d));
        for b in 0..nb {
            x.slice_mut(s![.., b, ..])
                .assign(&seq.values.slice(s![first + b..first + b + w, ..]));
        }
        let (out, _) = model.forward_infer(x.view())?;
        let var = out.logvar.mapv(f64::exp);
        for folder in folders.iter_mut() {
            folder.push(first, out.mu.view(), var.view());
        }
        first += nb;
    }
    folders
        .into_iter()
        .map(|f| {
            let (mu, var) = f.finish()?;
            gaussian_scores(seq.values.view(), mu, var)
        })
        .collect()
}

/// Detection threshold on the multivariate score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub tau: f64,
}

/// Largest value among per-sequence maxima.
pub fn threshold_from_maxima(maxima: &[f64]) -> Result<Threshold> {
    if maxima.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let tau = maxima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "validation scores produced a non-finite threshold {tau}"
        )));
    }
    Ok(Threshold { tau })
}

/// Maximum score over all validation sequences.
pub fn estimate_threshold(val: &[Sequence], model: &TeVae, method: ReverseWindowMethod) -> Result<Threshold> {
    let maxima = val
        .iter()
        .map(|seq| score_sequence(seq, model, method).map(|s| s.max()))
        .collect::<Result<Vec<_>>>()?;
    threshold_from_maxima(&maxima)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Normal,
    Anomalous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub label: Verdict,
    pub first_flagged_step: Option<usize>,
    pub root_cause_channel: Option<usize>,
    pub max_score: f64,
}

impl DetectionOutcome {
    pub fn is_anomalous(&self) -> bool {
        self.label == Verdict::Anomalous
    }
}

/// First step with `s > tau`, if any.
pub fn first_exceedance(s: &[f64], tau: f64) -> Option<usize> {
    s.iter().position(|&v| v > tau)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_lowest(row: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in row.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((j, v)),
        }
    }
    best.map(|(j, _)| j)
}

pub fn detect_from_score(score: &AnomalyScore, tau: f64) -> DetectionOutcome {
    let first = first_exceedance(&score.s, tau);
    let root = first.and_then(|t| argmax_lowest(score.per_channel.row(t).iter().copied()));
    DetectionOutcome {
        label: if first.is_some() {
            Verdict::Anomalous
        } else {
            Verdict::Normal
        },
        first_flagged_step: first,
        root_cause_channel: root,
        max_score: score.max(),
    }
}

pub fn detect(seq: &Sequence, model: &TeVae, tau: f64, method: ReverseWindowMethod) -> Result<DetectionOutcome> {
    Ok(detect_from_score(&score_sequence(seq, model, method)?, tau))
}

/// Writes `t, s, <channel>...` rows.
pub fn write_score_dump(path: &Path, score: &AnomalyScore, channel_names: &[String]) -> Result<()> {
    if channel_names.len() != score.per_channel.ncols() {
        return Err(Error::ChannelMismatch {
            expected: score.per_channel.ncols(),
            got: channel_names.len(),
        });
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "s".to_string()];
    header.extend(channel_names.iter().cloned());
    wtr.write_record(&header)?;
    for (t, (s, row)) in score.s.iter().zip(score.per_channel.rows()).enumerate() {
        let mut rec = vec![t.to_string(), s.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a score dump back into `(s, per_channel)`.
pub fn read_score_dump(path: &Path) -> Result<(Vec<f64>, Array2<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let channels = rdr.headers()?.len().saturating_sub(2);
    let mut s = Vec::new();
    let mut flat = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Dataset {
                path: path.to_path_buf(),
                detail: format!("bad value in column {i}"),
            })
        };
        s.push(parse(1)?);
        for j in 0..channels {
            flat.push(parse(j + 2)?);
        }
    }
    let per_channel = Array2::from_shape_vec((s.len(), channels), flat).map_err(|e| Error::Dataset {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok((s, per_channel))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub id: String,
    pub label: Verdict,
    pub first_flagged_step: Option<usize>,
    pub root_cause_channel: Option<usize>,
    pub max_score: f64,
    pub tau: f64,
}

impl DetectionRecord {
    pub fn new(id: impl Into<String>, outcome: &DetectionOutcome, tau: f64) -> Self {
        Self {
            id: id.into(),
            label: outcome.label,
            first_flagged_step: outcome.first_flagged_step,
            root_cause_channel: outcome.root_cause_channel,
            max_score: outcome.max_score,
            tau,
        }
    }

    pub fn outcome(&self) -> DetectionOutcome {
        DetectionOutcome {
            label: self.label,
            first_flagged_step: self.first_flagged_step,
            root_cause_channel: self.root_cause_channel,
            max_score: self.max_score,
        }
    }
}

/// One run of the detector over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub method: ReverseWindowMethod,
    pub window: usize,
    pub tau: f64,
    pub records: Vec<DetectionRecord>,
}

impl DetectionReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

#[cfg(test)]
mod tests;
