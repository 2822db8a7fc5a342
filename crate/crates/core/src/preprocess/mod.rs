//! Resampling, z-score normalisation, window sizing and windowing.

mod filter;

pub use filter::{Biquad, Butterworth};

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Substituted for the standard deviation of (near-)constant channels.
pub const STD_FLOOR: f64 = 1e-8;
/// Two-sided 95% white-noise quantile for the ACF band.
const ACF_Z: f64 = 1.96;

/// One raw measurement channel at its native (possibly irregular) rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RawChannel {
    pub name: String,
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
    pub native_rate: f64,
}

impl RawChannel {
    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() != self.values.len() {
            return Err(Error::InvalidArgument(format!(
                "channel {}: {} timestamps but {} values",
                self.name,
                self.timestamps.len(),
                self.values.len()
            )));
        }
        if !(self.native_rate > 0.0 && self.native_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "channel {}: native rate must be positive",
                self.name
            )));
        }
        if self.timestamps.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::InvalidArgument(format!(
                "channel {}: timestamps not strictly increasing",
                self.name
            )));
        }
        if self.values.iter().chain(&self.timestamps).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "channel {}: non-finite sample",
                self.name
            )));
        }
        Ok(())
    }
}

/// A multivariate series on a uniform grid: `values` is `T x d_D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: String,
    pub rate: f64,
    pub channel_names: Vec<String>,
    pub values: Array2<f64>,
}

impl Sequence {
    pub fn new(id: impl Into<String>, rate: f64, channel_names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let seq = Self {
            id: id.into(),
            rate,
            channel_names,
            values,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, d) = self.values.dim();
        if t == 0 || d == 0 {
            return Err(Error::Empty("sequence"));
        }
        if self.channel_names.len() != d {
            return Err(Error::ChannelMismatch {
                expected: self.channel_names.len(),
                got: d,
            });
        }
        if !(self.rate > 0.0) {
            return Err(Error::InvalidArgument("sequence rate must be positive".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sequence {} contains non-finite values",
                self.id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    /// The first `steps` rows.
    pub fn truncated(&self, steps: usize) -> Sequence {
        Sequence {
            values: self.values.slice(s![..steps.min(self.len()), ..]).to_owned(),
            ..self.clone()
        }
    }
}

/// Resamples onto `t0 + k / target_rate` for every grid point not past the
/// last timestamp.
pub fn resample_channel(ch: &RawChannel, target_rate: f64) -> Result<Vec<f64>> {
    check_resample_args(ch, target_rate)?;
    let t0 = ch.timestamps[0];
    let span = ch.timestamps[ch.timestamps.len() - 1] - t0;
    let n = (span * target_rate + 1e-9).floor() as usize + 1;
    resample_onto(ch, t0, target_rate, n)
}

/// Resamples onto `n` points of the grid `t0 + k / target_rate`. Points
/// outside the channel's span take the nearest end value.
pub fn resample_onto(ch: &RawChannel, t0: f64, target_rate: f64, n: usize) -> Result<Vec<f64>> {
    check_resample_args(ch, target_rate)?;
    let source: Vec<f64> = if ch.native_rate > target_rate {
        let fc = target_rate / 2.0;
        let filt = Butterworth::lowpass4(fc, ch.native_rate);
        // a few time constants of the slowest pole
        let padlen = ((6.0 * ch.native_rate / fc).ceil() as usize).max(15);
        filt.filtfilt(&ch.values, padlen)
    } else {
        ch.values.clone()
    };
    let grid = (0..n).map(|k| t0 + k as f64 / target_rate);
    Ok(interpolate(&ch.timestamps, &source, grid))
}

fn check_resample_args(ch: &RawChannel, target_rate: f64) -> Result<()> {
    if ch.timestamps.len() < 2 {
        return Err(Error::InsufficientSamples {
            need: 2,
            got: ch.timestamps.len(),
        });
    }
    ch.validate()?;
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    Ok(())
}

/// Piecewise-linear interpolation at monotonically increasing query times.
fn interpolate(ts: &[f64], vs: &[f64], query: impl Iterator<Item = f64>) -> Vec<f64> {
    let last = ts.len() - 1;
    let mut j = 0;
    query
        .map(|t| {
            if t <= ts[0] {
                return vs[0];
            }
            if t >= ts[last] {
                return vs[last];
            }
            while ts[j + 1] < t {
                j += 1;
            }
            let frac = (t - ts[j]) / (ts[j + 1] - ts[j]);
            if frac == 0.0 {
                vs[j]
            } else if frac == 1.0 {
                vs[j + 1]
            } else {
                vs[j] + frac * (vs[j + 1] - vs[j])
            }
        })
        .collect()
}

/// Resamples every channel onto the grid they all cover and stacks them.
pub fn assemble_sequence(id: impl Into<String>, channels: &[RawChannel], target_rate: f64) -> Result<Sequence> {
    if channels.is_empty() {
        return Err(Error::Empty("channel list"));
    }
    for ch in channels {
        if ch.timestamps.len() < 2 {
            return Err(Error::InsufficientSamples {
                need: 2,
                got: ch.timestamps.len(),
            });
        }
    }
    let start = channels
        .iter()
        .map(|c| c.timestamps[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let end = channels
        .iter()
        .map(|c| c.timestamps[c.timestamps.len() - 1])
        .fold(f64::INFINITY, f64::min);
    if end < start {
        return Err(Error::InvalidArgument("channels do not overlap in time".into()));
    }
    let n = ((end - start) * target_rate + 1e-9).floor() as usize + 1;
    let mut values = Array2::<f64>::zeros((n, channels.len()));
    for (j, ch) in channels.iter().enumerate() {
        let col = resample_onto(ch, start, target_rate, n)?;
        values.column_mut(j).assign(&ndarray::Array1::from(col));
    }
    Sequence::new(
        id,
        target_rate,
        channels.iter().map(|c| c.name.clone()).collect(),
        values,
    )
}

/// Per-channel z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    fn check(&self, seq: &Sequence) -> Result<()> {
        if seq.channels() != self.channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channels(),
                got: seq.channels(),
            });
        }
        Ok(())
    }
}

/// Pooled mean and population std over every time step of every sequence.
pub fn fit_norm(train: &[Sequence]) -> Result<NormStats> {
    let first = train.first().ok_or(Error::Empty("training set"))?;
    let d = first.channels();
    if let Some(bad) = train.iter().find(|s| s.channels() != d) {
        return Err(Error::ChannelMismatch {
            expected: d,
            got: bad.channels(),
        });
    }
    let count: usize = train.iter().map(Sequence::len).sum();
    if count == 0 {
        return Err(Error::Empty("training set"));
    }
    let n = count as f64;
    let mut mean = vec![0.0; d];
    for seq in train {
        for row in seq.values.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for seq in train {
        for row in seq.values.rows() {
            for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s < STD_FLOOR {
                STD_FLOOR
            } else {
                s
            }
        })
        .collect();
    Ok(NormStats { mean, std })
}

pub fn apply_norm(seq: &Sequence, stats: &NormStats) -> Result<Sequence> {
    stats.check(seq)?;
    let mut values = seq.values.clone();
    for mut row in values.rows_mut() {
        for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = (*v - m) / s;
        }
    }
    Ok(Sequence { values, ..seq.clone() })
}

pub fn invert_norm(seq: &Sequence, stats: &NormStats) -> Result<Sequence> {
    stats.check(seq)?;
    let mut values = seq.values.clone();
    for mut row in values.rows_mut() {
        for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = *v * s + m;
        }
    }
    Ok(Sequence { values, ..seq.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSizeConfig {
    pub max_lag: usize,
    pub min_window: usize,
}

impl Default for WindowSizeConfig {
    fn default() -> Self {
        Self {
            max_lag: 1024,
            min_window: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub window: usize,
    /// Largest significant lag over all channels and sequences.
    pub max_significant_lag: usize,
}

/// Biased sample autocorrelation of `x` at lags `1..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    (1..=max_lag.min(n.saturating_sub(1)))
        .map(|k| {
            if c0 == 0.0 {
                0.0
            } else {
                c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / c0
            }
        })
        .collect()
}

/// Last lag before the autocorrelation first drops inside `±1.96/sqrt(T)`,
/// capped at `max_lag` (and `T - 1`).
pub fn significant_lag(x: &[f64], max_lag: usize) -> usize {
    let n = x.len();
    if n < 2 {
        return 0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return 0;
    }
    let band = ACF_Z / (n as f64).sqrt();
    let limit = max_lag.min(n - 1);
    for k in 1..=limit {
        let r = c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / c0;
        if r.abs() <= band {
            return k - 1;
        }
    }
    limit
}

/// Smallest power of two strictly above the largest significant lag, but at
/// least `min_window`.
pub fn estimate_window_size(train: &[Sequence], cfg: &WindowSizeConfig) -> Result<WindowEstimate> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut lag = 0;
    for seq in train {
        for col in seq.values.columns() {
            let col = col.to_vec();
            lag = lag.max(significant_lag(&col, cfg.max_lag));
        }
    }
    let window = if lag == 0 {
        cfg.min_window
    } else {
        (lag + 1).next_power_of_two().max(cfg.min_window)
    };
    Ok(WindowEstimate {
        window,
        max_significant_lag: lag,
    })
}

/// Fixed-length, possibly overlapping slices of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Array2<f64>>,
    pub window: usize,
    pub shift: usize,
    pub source_id: String,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn starts(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.windows.len()).map(|k| k * self.shift)
    }
}

/// Number of complete windows; the trailing remainder is dropped.
pub fn window_count(len: usize, window: usize, shift: usize) -> usize {
    if len < window || window == 0 || shift == 0 {
        0
    } else {
        (len - window) / shift + 1
    }
}

pub fn window_sequence(seq: &Sequence, window: usize, shift: usize) -> Result<WindowSet> {
    if window == 0 || shift == 0 {
        return Err(Error::InvalidArgument("window and shift must be at least 1".into()));
    }
    if seq.len() < window {
        return Err(Error::SequenceShorterThanWindow { len: seq.len(), window });
    }
    let windows = (0..window_count(seq.len(), window, shift))
        .map(|k| view_window(seq.values.view(), k * shift, window).to_owned())
        .collect();
    Ok(WindowSet {
        windows,
        window,
        shift,
        source_id: seq.id.clone(),
    })
}

pub(crate) fn view_window(values: ArrayView2<'_, f64>, start: usize, window: usize) -> ArrayView2<'_, f64> {
    values.slice_move(s![start..start + window, ..])
}

#[cfg(test)]
mod tests;
