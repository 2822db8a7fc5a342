//! Report documents written by `evaluate` and `benchmark`.

use serde::{Deserialize, Serialize};
use tevae::detect::ReverseWindowMethod;
use tevae::metrics::{mean_std, ConfusionCounts, Label, PrPoint};
use tevae::model::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self {
            mean,
            std,
            n: values.len(),
        }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub id: String,
    pub label: Label,
    pub first_flagged_step: Option<usize>,
    pub root_cause_channel: Option<usize>,
    pub max_score: f64,
    /// Steps; anomalous sequences only.
    pub delay: Option<usize>,
}

/// Metrics for one trained model and one reverse-window method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run: String,
    pub variant: Variant,
    pub method: ReverseWindowMethod,
    pub seed: u64,
    pub window: usize,
    pub rate: f64,
    pub tau: f64,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Highest-F1 point of the threshold sweep.
    pub f1_best: PrPoint,
    pub f1_best_value: f64,
    /// Sweep point nearest to P = R = 1.
    pub closest_to_ideal: PrPoint,
    pub auc_pr: f64,
    pub avg_delay_steps: Option<f64>,
    pub avg_delay_seconds: Option<f64>,
    pub p_rc: f64,
    pub sequences: Vec<SequenceResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub tau: f64,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f1_best: f64,
    pub auc_pr: f64,
    pub avg_delay_seconds: Option<f64>,
    pub p_rc: f64,
}

impl From<&MetricsReport> for SeedSummary {
    fn from(r: &MetricsReport) -> Self {
        Self {
            seed: r.seed,
            tau: r.tau,
            counts: r.counts,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            f1_best: r.f1_best_value,
            auc_pr: r.auc_pr,
            avg_delay_seconds: r.avg_delay_seconds,
            p_rc: r.p_rc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub f1_best: MeanStd,
    pub auc_pr: MeanStd,
    /// Over seeds that had at least one anomalous sequence.
    pub avg_delay_seconds: Option<MeanStd>,
    pub p_rc: MeanStd,
}

impl Aggregate {
    pub fn of(seeds: &[SeedSummary]) -> Self {
        let pick = |f: fn(&SeedSummary) -> f64| MeanStd::of(&seeds.iter().map(f).collect::<Vec<_>>());
        let delays: Vec<f64> = seeds.iter().filter_map(|s| s.avg_delay_seconds).collect();
        Self {
            precision: pick(|s| s.precision),
            recall: pick(|s| s.recall),
            f1: pick(|s| s.f1),
            f1_best: pick(|s| s.f1_best),
            auc_pr: pick(|s| s.auc_pr),
            avg_delay_seconds: (!delays.is_empty()).then(|| MeanStd::of(&delays)),
            p_rc: pick(|s| s.p_rc),
        }
    }
}

/// One run configuration across every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub run: String,
    pub variant: Variant,
    pub method: ReverseWindowMethod,
    pub window: usize,
    pub per_seed: Vec<SeedSummary>,
    pub aggregate: Aggregate,
}

impl EvaluationReport {
    pub fn from_reports(reports: &[MetricsReport]) -> Option<Self> {
        let first = reports.first()?;
        let per_seed: Vec<SeedSummary> = reports.iter().map(SeedSummary::from).collect();
        Some(Self {
            run: first.run.clone(),
            variant: first.variant,
            method: first.method,
            window: first.window,
            aggregate: Aggregate::of(&per_seed),
            per_seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seeds: Vec<u64>,
    pub window: usize,
    pub estimated_window: usize,
    pub test_sequences: usize,
    pub test_anomalies: usize,
    pub rows: Vec<EvaluationReport>,
}

impl BenchmarkReport {
    pub fn row(&self, variant: Variant, method: ReverseWindowMethod) -> Option<&EvaluationReport> {
        self.rows.iter().find(|r| r.variant == variant && r.method == method)
    }

    /// Markdown comparison table.
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "# Benchmark\n\nseeds {:?}, w = {} (estimated {}), {} test sequences of which {} anomalous\n\n",
            self.seeds, self.window, self.estimated_window, self.test_sequences, self.test_anomalies
        );
        out.push_str("| model | reverse | P | R | F1 | F1 best | A_PR | delay (s) | P_rc |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let a = &r.aggregate;
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
                r.variant,
                r.method,
                a.precision,
                a.recall,
                a.f1,
                a.f1_best,
                a.auc_pr,
                a.avg_delay_seconds
                    .map(|d| format!("{:.1} ± {:.1}", d.mean, d.std))
                    .unwrap_or_else(|| "-".into()),
                a.p_rc
            ));
        }
        out
    }
}
