//! Sequence-level detection metrics: confusion counts with the early-flag
//! rule, precision/recall/F1, PR sweeps, detection delay and root-cause
//! precision.

use serde::{Deserialize, Serialize};

use crate::detect::DetectionOutcome;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthKind {
    Normal,
    /// Anomalous from the first step to the last.
    TsAnomaly,
    /// One contiguous anomalous span.
    SubseqAnomaly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: GroundTruthKind,
    pub t_gt: Option<usize>,
    pub t_end: Option<usize>,
    pub root_cause_channels: Vec<usize>,
    pub len: usize,
}

impl GroundTruth {
    pub fn normal(len: usize) -> Self {
        Self {
            kind: GroundTruthKind::Normal,
            t_gt: None,
            t_end: None,
            root_cause_channels: Vec::new(),
            len,
        }
    }

    pub fn ts_anomaly(len: usize, root_cause_channels: Vec<usize>) -> Self {
        Self {
            kind: GroundTruthKind::TsAnomaly,
            t_gt: Some(0),
            t_end: Some(len.saturating_sub(1)),
            root_cause_channels,
            len,
        }
    }

    pub fn subseq_anomaly(len: usize, t_gt: usize, t_end: usize, root_cause_channels: Vec<usize>) -> Self {
        Self {
            kind: GroundTruthKind::SubseqAnomaly,
            t_gt: Some(t_gt),
            t_end: Some(t_end),
            root_cause_channels,
            len,
        }
    }

    pub fn is_anomalous(&self) -> bool {
        self.kind != GroundTruthKind::Normal
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("ground truth: {msg}")));
        if self.len == 0 {
            return bad("empty sequence");
        }
        match self.kind {
            GroundTruthKind::Normal => {
                if self.t_gt.is_some() || self.t_end.is_some() {
                    return bad("normal sequence with an anomalous span");
                }
            }
            GroundTruthKind::TsAnomaly => {
                if self.t_gt != Some(0) || self.t_end != Some(self.len - 1) {
                    return bad("time-series anomaly must span the whole sequence");
                }
            }
            GroundTruthKind::SubseqAnomaly => match (self.t_gt, self.t_end) {
                (Some(a), Some(b)) if a <= b && b < self.len => {}
                _ => return bad("sub-sequence span out of order or out of range"),
            },
        }
        Ok(())
    }

    fn onset(&self) -> usize {
        self.t_gt.unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Tp,
    Fp,
    Fn,
    Tn,
}

/// True when a flag at `first_flagged` comes from windows that cannot reach
/// the anomaly starting at `t_gt`.
pub fn is_early_flag(first_flagged: usize, t_gt: usize, window: usize) -> bool {
    first_flagged + (window - 1) < t_gt
}

fn check_lengths(first: Option<usize>, gt: &GroundTruth) -> Result<()> {
    gt.validate()?;
    if let Some(t) = first {
        if t >= gt.len {
            return Err(Error::InvalidArgument(format!(
                "flag at step {t} outside a sequence of {} steps",
                gt.len
            )));
        }
    }
    Ok(())
}

fn label_for(first: Option<usize>, gt: &GroundTruth, window: usize) -> Label {
    match (gt.kind, first) {
        (GroundTruthKind::Normal, None) => Label::Tn,
        (GroundTruthKind::Normal, Some(_)) => Label::Fp,
        (_, None) => Label::Fn,
        (GroundTruthKind::TsAnomaly, Some(_)) => Label::Tp,
        (GroundTruthKind::SubseqAnomaly, Some(t)) => {
            if is_early_flag(t, gt.onset(), window) {
                Label::Fp
            } else {
                Label::Tp
            }
        }
    }
}

pub fn classify(outcome: &DetectionOutcome, gt: &GroundTruth, window: usize) -> Result<Label> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    check_lengths(outcome.first_flagged_step, gt)?;
    Ok(label_for(outcome.first_flagged_step, gt, window))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub n_tp: usize,
    pub n_fp: usize,
    pub n_fn: usize,
    pub n_tn: usize,
    pub n_tp_rc: usize,
    pub n_fp_rc: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.n_tp + self.n_fp + self.n_fn + self.n_tn
    }

    fn add(&mut self, label: Label) {
        match label {
            Label::Tp => self.n_tp += 1,
            Label::Fp => self.n_fp += 1,
            Label::Fn => self.n_fn += 1,
            Label::Tn => self.n_tn += 1,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision, recall and F1 with zero denominators mapped to 0.
pub fn prf(c: &ConfusionCounts) -> (f64, f64, f64) {
    let p = ratio(c.n_tp, c.n_tp + c.n_fp);
    let r = ratio(c.n_tp, c.n_tp + c.n_fn);
    (p, r, f1(p, r))
}

/// Steps between the anomaly onset and the first flag; a miss counts as a
/// flag at the last step. `None` for normal ground truth.
pub fn delay(outcome: &DetectionOutcome, gt: &GroundTruth) -> Result<Option<usize>> {
    check_lengths(outcome.first_flagged_step, gt)?;
    if !gt.is_anomalous() {
        return Ok(None);
    }
    let t_p = outcome.first_flagged_step.unwrap_or(gt.len - 1);
    Ok(Some(t_p.abs_diff(gt.onset())))
}

/// Mean of the given delays; `None` when there are none.
pub fn avg_delay(delays: &[usize]) -> Option<f64> {
    if delays.is_empty() {
        None
    } else {
        Some(delays.iter().sum::<usize>() as f64 / delays.len() as f64)
    }
}

/// `(N_tp_rc, N_fp_rc)`: true positives naming a ground-truth channel are
/// correct; every other detection is not.
pub fn root_cause_counts(
    outcomes: &[DetectionOutcome],
    gts: &[GroundTruth],
    labels: &[Label],
) -> Result<(usize, usize)> {
    if outcomes.len() != gts.len() || gts.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} outcomes, {} ground truths, {} labels",
            outcomes.len(),
            gts.len(),
            labels.len()
        )));
    }
    let (mut tp_rc, mut fp_rc) = (0, 0);
    for ((o, gt), label) in outcomes.iter().zip(gts).zip(labels) {
        match label {
            Label::Tp => match o.root_cause_channel {
                Some(c) if gt.root_cause_channels.contains(&c) => tp_rc += 1,
                _ => fp_rc += 1,
            },
            Label::Fp => fp_rc += 1,
            Label::Fn | Label::Tn => {}
        }
    }
    Ok((tp_rc, fp_rc))
}

/// Headline metrics for one detector run over a labelled test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub p_rc: f64,
    pub avg_delay_steps: Option<f64>,
    pub avg_delay_seconds: Option<f64>,
    pub labels: Vec<Label>,
}

pub fn summarize(outcomes: &[DetectionOutcome], gts: &[GroundTruth], window: usize, rate: f64) -> Result<Summary> {
    if outcomes.len() != gts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} outcomes for {} ground truths",
            outcomes.len(),
            gts.len()
        )));
    }
    let labels = outcomes
        .iter()
        .zip(gts)
        .map(|(o, gt)| classify(o, gt, window))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = ConfusionCounts::default();
    labels.iter().for_each(|&l| counts.add(l));
    let (tp_rc, fp_rc) = root_cause_counts(outcomes, gts, &labels)?;
    counts.n_tp_rc = tp_rc;
    counts.n_fp_rc = fp_rc;
    let (precision, recall, f1) = prf(&counts);
    let mut delays = Vec::new();
    for (o, gt) in outcomes.iter().zip(gts) {
        if let Some(d) = delay(o, gt)? {
            delays.push(d);
        }
    }
    let avg = avg_delay(&delays);
    Ok(Summary {
        counts,
        precision,
        recall,
        f1,
        p_rc: ratio(tp_rc, counts.n_tp + counts.n_fp),
        avg_delay_steps: avg,
        avg_delay_seconds: avg.map(|d| d / rate),
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

impl PrPoint {
    pub fn f1(&self) -> f64 {
        f1(self.precision, self.recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// Sorted by recall, then by descending precision.
    pub points: Vec<PrPoint>,
    /// Point with the largest F1.
    pub best_f1: PrPoint,
    /// Point nearest to `P = R = 1`.
    pub closest_to_ideal: PrPoint,
    pub auc_pr: f64,
}

/// Trapezoidal area under recall-sorted points.
pub fn trapezoid_auc(points: &[PrPoint]) -> f64 {
    points
        .windows(2)
        .map(|p| 0.5 * (p[0].precision + p[1].precision) * (p[1].recall - p[0].recall))
        .sum()
}

/// Sweeps the threshold just below every distinct per-sequence maximum, plus
/// `+inf`, re-deriving each sequence's first flagged step at every level.
/// The `+inf` point enters the curve as `(R = 0, P = 1)`.
pub fn pr_curve(scores: &[&[f64]], gts: &[GroundTruth], window: usize) -> Result<PrCurve> {
    if scores.len() != gts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} score series for {} ground truths",
            scores.len(),
            gts.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Empty("score set"));
    }
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    for (s, gt) in scores.iter().zip(gts) {
        gt.validate()?;
        if s.len() != gt.len {
            return Err(Error::InvalidArgument(format!(
                "score series of {} steps for a sequence of {}",
                s.len(),
                gt.len
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite anomaly score".into()));
        }
    }
    let prefix_max: Vec<Vec<f64>> = scores
        .iter()
        .map(|s| {
            s.iter()
                .scan(f64::NEG_INFINITY, |m, &v| {
                    *m = m.max(v);
                    Some(*m)
                })
                .collect()
        })
        .collect();
    let mut levels: Vec<f64> = prefix_max.iter().map(|p| p[p.len() - 1]).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let mut points = vec![PrPoint {
        threshold: f64::INFINITY,
        precision: 1.0,
        recall: 0.0,
    }];
    for &level in &levels {
        let mut counts = ConfusionCounts::default();
        for (pm, gt) in prefix_max.iter().zip(gts) {
            // first step with s >= level, i.e. s > level.next_down()
            let idx = pm.partition_point(|&m| m < level);
            let first = (idx < pm.len()).then_some(idx);
            counts.add(label_for(first, gt, window));
        }
        let (precision, recall, _) = prf(&counts);
        points.push(PrPoint {
            threshold: level.next_down(),
            precision,
            recall,
        });
    }
    let pick = |key: &dyn Fn(&PrPoint) -> f64| {
        *points[1..]
            .iter()
            .fold(None::<&PrPoint>, |best, p| match best {
                Some(b) if key(b) >= key(p) => Some(b),
                _ => Some(p),
            })
            .expect("at least one level")
    };
    let best_f1 = pick(&|p| p.f1());
    let closest_to_ideal = pick(&|p| -(1.0 - p.precision).hypot(1.0 - p.recall));
    points.sort_by(|a, b| a.recall.total_cmp(&b.recall).then(b.precision.total_cmp(&a.precision)));
    let auc_pr = trapezoid_auc(&points);
    Ok(PrCurve {
        points,
        best_f1,
        closest_to_ideal,
        auc_pr,
    })
}

/// Sample mean and sample standard deviation (`n - 1`); the deviation is
/// 0 for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
