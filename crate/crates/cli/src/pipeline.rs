//! The six pipeline commands and the output directory layout.
//!
//! ```text
//! <output_dir>/
//!   config.toml                      resolved configuration
//!   data/                            dataset (unless data.dir is set)
//!   preprocess/norm.json             NormStats
//!   preprocess/preprocess.json       window choice and counts
//!   runs/<run>/seed_<s>/checkpoint.json
//!   runs/<run>/seed_<s>/history.json
//!   runs/<run>/seed_<s>/detect/<method>/report.json
//!   runs/<run>/seed_<s>/detect/<method>/scores/<id>.csv
//!   runs/<run>/seed_<s>/detect/<method>/metrics.json
//!   runs/<run>/seed_<s>/detect/<method>/plots/*.png
//!   runs/<run>/evaluation_<method>.json
//!   benchmark.json, benchmark.md
//! ```
//!
//! `<run>` is `<variant>-dk<d_K>-dz<d_Z>`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tevae::dataset::{self, load_json, save_json, Manifest};
use tevae::detect::{
    detect_from_score, read_score_dump, score_sequence_multi, threshold_from_maxima, write_score_dump, AnomalyScore,
    DetectionRecord, DetectionReport, ReverseWindowMethod,
};
use tevae::metrics::{delay, pr_curve, summarize, GroundTruth};
use tevae::model::{Checkpoint, ModelConfig, TeVae};
use tevae::preprocess::{
    apply_norm, estimate_window_size, fit_norm, window_sequence, NormStats, Sequence, WindowEstimate,
};
use tevae::syndata::{build_dataset, SequenceMeta, Split};
use tevae::train::{fit_with_hook, EpochRecord};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::plot;
use crate::report::{BenchmarkReport, EvaluationReport, MetricsReport, SequenceResult};

pub struct Layout {
    pub root: PathBuf,
    pub data: PathBuf,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            root: cfg.output_dir.clone(),
            data: cfg.data_dir(),
        }
    }

    pub fn norm(&self) -> PathBuf {
        self.root.join("preprocess").join("norm.json")
    }

    pub fn preprocess(&self) -> PathBuf {
        self.root.join("preprocess").join("preprocess.json")
    }

    pub fn run_root(&self, run: &str) -> PathBuf {
        self.root.join("runs").join(run)
    }

    pub fn run_dir(&self, run: &str, seed: u64) -> PathBuf {
        self.run_root(run).join(format!("seed_{seed}"))
    }

    pub fn checkpoint(&self, run: &str, seed: u64) -> PathBuf {
        self.run_dir(run, seed).join("checkpoint.json")
    }

    pub fn history(&self, run: &str, seed: u64) -> PathBuf {
        self.run_dir(run, seed).join("history.json")
    }

    pub fn detect_dir(&self, run: &str, seed: u64, method: ReverseWindowMethod) -> PathBuf {
        self.run_dir(run, seed).join("detect").join(method.to_string())
    }

    pub fn report(&self, run: &str, seed: u64, method: ReverseWindowMethod) -> PathBuf {
        self.detect_dir(run, seed, method).join("report.json")
    }

    pub fn score_dump(&self, run: &str, seed: u64, method: ReverseWindowMethod, id: &str) -> PathBuf {
        self.detect_dir(run, seed, method)
            .join("scores")
            .join(format!("{id}.csv"))
    }

    pub fn metrics(&self, run: &str, seed: u64, method: ReverseWindowMethod) -> PathBuf {
        self.detect_dir(run, seed, method).join("metrics.json")
    }

    pub fn evaluation(&self, run: &str, method: ReverseWindowMethod) -> PathBuf {
        self.run_root(run).join(format!("evaluation_{method}.json"))
    }

    pub fn benchmark(&self) -> PathBuf {
        self.root.join("benchmark.json")
    }
}

/// Output of `preprocess`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessInfo {
    pub window: usize,
    pub estimate: WindowEstimate,
    pub train_shift: usize,
    pub channel_names: Vec<String>,
    pub rate: f64,
    pub train_windows: usize,
    pub val_windows: usize,
}

/// Normalised data ready for training and scoring.
pub struct Prepared {
    pub manifest: Manifest,
    pub norm: NormStats,
    pub info: PreprocessInfo,
    pub train: Vec<Sequence>,
    pub val: Vec<Sequence>,
    pub test: Vec<(Sequence, SequenceMeta)>,
}

fn require(path: &Path, what: &'static str, hint: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing {
            what,
            path: path.to_path_buf(),
            hint,
        })
    }
}

fn log(msg: impl AsRef<str>) {
    eprintln!("[tevae] {}", msg.as_ref());
}

pub fn run_name(model: &ModelConfig) -> String {
    format!("{}-dk{}-dz{}", model.variant, model.key_dim, model.latent)
}

pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Manifest> {
    let layout = Layout::new(cfg);
    let records = build_dataset(&cfg.data.generator)?;
    let manifest = dataset::write_dataset(&layout.data, &records, Some(&cfg.data.generator))?;
    log(format!(
        "generated {} train, {} val, {} test sequences in {}",
        manifest.train.len(),
        manifest.val.len(),
        manifest.test.len(),
        layout.data.display()
    ));
    Ok(manifest)
}

fn load_manifest(layout: &Layout) -> Result<Manifest> {
    require(&layout.data.join(dataset::MANIFEST_FILE), "dataset", "tevae generate")?;
    Ok(dataset::load_manifest(&layout.data)?)
}

fn load_sequences(layout: &Layout, manifest: &Manifest, split: Split) -> Result<Vec<(Sequence, SequenceMeta)>> {
    Ok(dataset::load_split(&layout.data, manifest, split)?
        .into_iter()
        .map(|r| (r.sequence, r.meta))
        .collect())
}

pub fn cmd_preprocess(cfg: &ExperimentConfig) -> Result<PreprocessInfo> {
    let layout = Layout::new(cfg);
    let manifest = load_manifest(&layout)?;
    let train: Vec<Sequence> = load_sequences(&layout, &manifest, Split::Train)?
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    let val: Vec<Sequence> = load_sequences(&layout, &manifest, Split::Val)?
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    let norm = fit_norm(&train)?;
    let ntrain = train
        .iter()
        .map(|s| apply_norm(s, &norm))
        .collect::<tevae::Result<Vec<_>>>()?;
    let nval = val
        .iter()
        .map(|s| apply_norm(s, &norm))
        .collect::<tevae::Result<Vec<_>>>()?;
    let estimate = estimate_window_size(&ntrain, &cfg.preprocess.window_size_config())?;
    let window = cfg.preprocess.window.unwrap_or(estimate.window);
    let count = |seqs: &[Sequence]| -> Result<usize> {
        let mut n = 0;
        for s in seqs {
            n += window_sequence(s, window, cfg.preprocess.train_shift)?.len();
        }
        Ok(n)
    };
    let info = PreprocessInfo {
        window,
        estimate,
        train_shift: cfg.preprocess.train_shift,
        channel_names: manifest.channel_names.clone(),
        rate: manifest.rate,
        train_windows: count(&ntrain)?,
        val_windows: count(&nval)?,
    };
    save_json(&layout.norm(), &norm)?;
    save_json(&layout.preprocess(), &info)?;
    log(format!(
        "window {} (estimated {}), {} train / {} val windows",
        window, estimate.window, info.train_windows, info.val_windows
    ));
    Ok(info)
}

pub fn load_prepared(cfg: &ExperimentConfig) -> Result<Prepared> {
    let layout = Layout::new(cfg);
    let manifest = load_manifest(&layout)?;
    require(&layout.preprocess(), "preprocessing output", "tevae preprocess")?;
    let norm: NormStats = load_json(&layout.norm())?;
    let info: PreprocessInfo = load_json(&layout.preprocess())?;
    let normalise = |split| -> Result<Vec<(Sequence, SequenceMeta)>> {
        load_sequences(&layout, &manifest, split)?
            .into_iter()
            .map(|(s, m)| Ok((apply_norm(&s, &norm)?, m)))
            .collect()
    };
    let strip = |v: Vec<(Sequence, SequenceMeta)>| v.into_iter().map(|(s, _)| s).collect();
    Ok(Prepared {
        train: strip(normalise(Split::Train)?),
        val: strip(normalise(Split::Val)?),
        test: normalise(Split::Test)?,
        manifest,
        norm,
        info,
    })
}

/// Summary of one training job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub run: String,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub epochs: usize,
    pub stopped_early: bool,
}

pub fn model_config(cfg: &ExperimentConfig, info: &PreprocessInfo) -> ModelConfig {
    cfg.model.resolve(info.window, info.channel_names.len())
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<TrainRun>> {
    let prepared = load_prepared(cfg)?;
    train_prepared(cfg, &prepared)
}

fn windows_of(seqs: &[Sequence], window: usize, shift: usize) -> Result<Vec<ndarray::Array2<f64>>> {
    let mut out = Vec::new();
    for s in seqs {
        out.extend(window_sequence(s, window, shift)?.windows);
    }
    Ok(out)
}

pub fn train_prepared(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<Vec<TrainRun>> {
    let layout = Layout::new(cfg);
    let mc = model_config(cfg, &prepared.info);
    let run = run_name(&mc);
    let w = prepared.info.window;
    let train = windows_of(&prepared.train, w, cfg.preprocess.train_shift)?;
    let val = windows_of(&prepared.val, w, cfg.preprocess.train_shift)?;
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let tc = tevae::train::TrainConfig { seed, ..cfg.train };
        let model = TeVae::new(mc.clone(), seed)?;
        log(format!(
            "training {run} seed {seed}: {} parameters, {} windows",
            model.parameter_count(),
            train.len()
        ));
        let out = fit_with_hook(&train, &val, model, &tc, &mut |r: &EpochRecord| {
            log(format!(
                "  epoch {:>4}  nll {:>10.3}  kl {:>9.3}  beta {:.2e}  val {:>10.3}",
                r.epoch, r.train_nll, r.train_kl, r.beta, r.val_nll
            ));
            true
        })?;
        let dir = layout.run_dir(&run, seed);
        fs::create_dir_all(&dir)?;
        Checkpoint::from_model(&out.model, out.best_epoch, out.best_val_nll).save(&layout.checkpoint(&run, seed))?;
        save_json(&layout.history(&run, seed), &out.history)?;
        runs.push(TrainRun {
            run: run.clone(),
            seed,
            best_epoch: out.best_epoch,
            best_val_nll: out.best_val_nll,
            epochs: out.history.len(),
            stopped_early: out.stopped_early,
        });
    }
    Ok(runs)
}

/// Scores every validation and test sequence once and writes one report
/// per method.
pub fn cmd_detect(cfg: &ExperimentConfig, methods: &[ReverseWindowMethod]) -> Result<Vec<DetectionReport>> {
    let prepared = load_prepared(cfg)?;
    detect_prepared(cfg, &prepared, methods)
}

pub fn detect_prepared(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    methods: &[ReverseWindowMethod],
) -> Result<Vec<DetectionReport>> {
    let layout = Layout::new(cfg);
    let mc = model_config(cfg, &prepared.info);
    let run = run_name(&mc);
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let ckpt_path = layout.checkpoint(&run, seed);
        require(&ckpt_path, "checkpoint", "tevae train")?;
        let model = Checkpoint::load(&ckpt_path)?.to_model()?;
        if model.config != mc {
            return Err(CliError::Config(format!(
                "checkpoint {} was trained with a different model configuration",
                ckpt_path.display()
            )));
        }
        log(format!("scoring {run} seed {seed}"));
        let batch = cfg.detect.batch;
        let mut val_max = vec![Vec::with_capacity(prepared.val.len()); methods.len()];
        for seq in &prepared.val {
            for (k, s) in score_sequence_multi(seq, &model, methods, batch)?.iter().enumerate() {
                val_max[k].push(s.max());
            }
        }
        let mut test_scores: Vec<Vec<AnomalyScore>> = vec![Vec::new(); methods.len()];
        for (seq, _) in &prepared.test {
            for (k, s) in score_sequence_multi(seq, &model, methods, batch)?
                .into_iter()
                .enumerate()
            {
                test_scores[k].push(s);
            }
        }
        for (k, &method) in methods.iter().enumerate() {
            let tau = threshold_from_maxima(&val_max[k])?.tau;
            let dir = layout.detect_dir(&run, seed, method);
            if dir.join("scores").exists() {
                fs::remove_dir_all(dir.join("scores"))?;
            }
            let mut records = Vec::new();
            for ((seq, meta), score) in prepared.test.iter().zip(&test_scores[k]) {
                write_score_dump(
                    &layout.score_dump(&run, seed, method, &meta.id),
                    score,
                    &seq.channel_names,
                )?;
                records.push(DetectionRecord::new(
                    meta.id.clone(),
                    &detect_from_score(score, tau),
                    tau,
                ));
            }
            let report = DetectionReport {
                method,
                window: mc.window,
                tau,
                records,
            };
            report.save(&layout.report(&run, seed, method))?;
            reports.push(report);
        }
    }
    Ok(reports)
}

fn ground_truths(prepared: &Prepared) -> Vec<GroundTruth> {
    prepared.test.iter().map(|(_, m)| m.ground_truth.clone()).collect()
}

/// Metrics for one detection report, reading the score dumps for the sweep.
pub fn evaluate_run(
    layout: &Layout,
    prepared: &Prepared,
    mc: &ModelConfig,
    seed: u64,
    method: ReverseWindowMethod,
) -> Result<MetricsReport> {
    let run = run_name(mc);
    let report_path = layout.report(&run, seed, method);
    require(&report_path, "detection report", "tevae detect")?;
    let report = DetectionReport::load(&report_path)?;
    let gts = ground_truths(prepared);
    if report.records.len() != gts.len() {
        return Err(CliError::Config(format!(
            "{} covers {} sequences, the test split has {}",
            report_path.display(),
            report.records.len(),
            gts.len()
        )));
    }
    let outcomes: Vec<_> = report.records.iter().map(DetectionRecord::outcome).collect();
    let w = report.window;
    let rate = prepared.manifest.rate;
    let summary = summarize(&outcomes, &gts, w, rate)?;
    let mut dumps = Vec::with_capacity(gts.len());
    for rec in &report.records {
        dumps.push(read_score_dump(&layout.score_dump(&run, seed, method, &rec.id))?.0);
    }
    let curve = pr_curve(&dumps.iter().map(Vec::as_slice).collect::<Vec<_>>(), &gts, w)?;
    let mut sequences = Vec::new();
    for ((rec, o), (gt, label)) in report
        .records
        .iter()
        .zip(&outcomes)
        .zip(gts.iter().zip(&summary.labels))
    {
        sequences.push(SequenceResult {
            id: rec.id.clone(),
            label: *label,
            first_flagged_step: rec.first_flagged_step,
            root_cause_channel: rec.root_cause_channel,
            max_score: rec.max_score,
            delay: delay(o, gt)?,
        });
    }
    let metrics = MetricsReport {
        run,
        variant: mc.variant,
        method,
        seed,
        window: w,
        rate,
        tau: report.tau,
        counts: summary.counts,
        precision: summary.precision,
        recall: summary.recall,
        f1: summary.f1,
        f1_best: curve.best_f1,
        f1_best_value: curve.best_f1.f1(),
        closest_to_ideal: curve.closest_to_ideal,
        auc_pr: curve.auc_pr,
        avg_delay_steps: summary.avg_delay_steps,
        avg_delay_seconds: summary.avg_delay_seconds,
        p_rc: summary.p_rc,
        sequences,
    };
    save_json(&layout.metrics(&metrics.run, seed, method), &metrics)?;
    Ok(metrics)
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, methods: &[ReverseWindowMethod]) -> Result<Vec<EvaluationReport>> {
    let prepared = load_prepared(cfg)?;
    evaluate_prepared(cfg, &prepared, methods)
}

pub fn evaluate_prepared(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    methods: &[ReverseWindowMethod],
) -> Result<Vec<EvaluationReport>> {
    let layout = Layout::new(cfg);
    let mc = model_config(cfg, &prepared.info);
    let run = run_name(&mc);
    let mut out = Vec::new();
    for &method in methods {
        let mut per_seed = Vec::new();
        for &seed in &cfg.seeds {
            let m = evaluate_run(&layout, prepared, &mc, seed, method)?;
            write_plots(&layout, cfg, prepared, &m)?;
            per_seed.push(m);
        }
        let eval = EvaluationReport::from_reports(&per_seed).expect("seeds are non-empty");
        save_json(&layout.evaluation(&run, method), &eval)?;
        let a = &eval.aggregate;
        log(format!(
            "{run} {method}: P {} R {} F1 {} A_PR {} P_rc {}",
            a.precision, a.recall, a.f1, a.auc_pr, a.p_rc
        ));
        out.push(eval);
    }
    Ok(out)
}

fn write_plots(layout: &Layout, cfg: &ExperimentConfig, prepared: &Prepared, m: &MetricsReport) -> Result<()> {
    let dir = layout.detect_dir(&m.run, m.seed, m.method).join("plots");
    fs::create_dir_all(&dir)?;
    let dumps: Vec<Vec<f64>> = m
        .sequences
        .iter()
        .map(|s| read_score_dump(&layout.score_dump(&m.run, m.seed, m.method, &s.id)).map(|d| d.0))
        .collect::<tevae::Result<_>>()?;
    let gts = ground_truths(prepared);
    let curve = pr_curve(&dumps.iter().map(Vec::as_slice).collect::<Vec<_>>(), &gts, m.window)?;
    plot::pr_curve_png(&dir.join("pr_curve.png"), &curve)?;
    // anomalous sequences first, in test order
    let mut chosen: Vec<usize> = (0..gts.len()).filter(|&i| gts[i].is_anomalous()).collect();
    chosen.extend((0..gts.len()).filter(|&i| !gts[i].is_anomalous()));
    for &i in chosen.iter().take(cfg.detect.plot_sequences) {
        let id = &m.sequences[i].id;
        let (s, per_channel) = read_score_dump(&layout.score_dump(&m.run, m.seed, m.method, id))?;
        plot::score_png(&dir.join(format!("{id}.png")), &s, &per_channel, m.tau, gts[i].t_gt)?;
    }
    Ok(())
}

/// Generates data if absent, then preprocesses, trains, scores and evaluates
/// every configured variant with every configured method.
pub fn cmd_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    let layout = Layout::new(cfg);
    if !layout.data.join(dataset::MANIFEST_FILE).exists() {
        cmd_generate(cfg)?;
    }
    cmd_preprocess(cfg)?;
    let prepared = load_prepared(cfg)?;
    let mut rows = Vec::new();
    for &variant in &cfg.benchmark.variants {
        let mut vcfg = cfg.clone();
        vcfg.model.variant = variant;
        train_prepared(&vcfg, &prepared)?;
        detect_prepared(&vcfg, &prepared, &cfg.benchmark.methods)?;
        rows.extend(evaluate_prepared(&vcfg, &prepared, &cfg.benchmark.methods)?);
    }
    let report = BenchmarkReport {
        seeds: cfg.seeds.clone(),
        window: prepared.info.window,
        estimated_window: prepared.info.estimate.window,
        test_sequences: prepared.test.len(),
        test_anomalies: prepared
            .test
            .iter()
            .filter(|(_, m)| m.ground_truth.is_anomalous())
            .count(),
        rows,
    };
    save_json(&layout.benchmark(), &report)?;
    fs::write(layout.root.join("benchmark.md"), report.to_markdown())?;
    Ok(report)
}
