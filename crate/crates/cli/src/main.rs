use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tevae::detect::ReverseWindowMethod;
use tevae::model::Variant;
use tevae_cli::pipeline::{self, Layout};
use tevae_cli::{resolve_config, ExperimentConfig, Overrides, Result};

#[derive(Parser)]
#[command(name = "tevae", version, about = "TeVAE anomaly detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Root of all outputs; overrides `output_dir` from the config.
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,
    /// Dataset directory (default: <output_dir>/data).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Fixed window length w; overrides the config.
    #[arg(long, global = true)]
    window: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// Train or score the attention-free variant.
    #[arg(long, value_parser = ["noma"])]
    ablation: Option<String>,
    /// Key width d_K; a comma-separated list sweeps.
    #[arg(long = "d-k", value_delimiter = ',')]
    d_k: Vec<usize>,
    /// Latent width d_Z; a comma-separated list sweeps.
    #[arg(long = "d-z", value_delimiter = ',')]
    d_z: Vec<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the resolved configuration as TOML.
    Config {
        #[command(flatten)]
        common: Common,
        /// Destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the synthetic dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Desk-scale training budget (pool = hours x sequences_per_hour).
        #[arg(long)]
        budget_hours: Option<f64>,
    },
    /// Fit normalisation and choose the window length.
    Preprocess {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model per seed.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Maximum training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score validation and test sequences, threshold and flag.
    Detect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Reverse-window method(s), comma-separated.
        #[arg(long, value_delimiter = ',')]
        reverse: Vec<ReverseWindowMethod>,
    },
    /// Compute metrics, mean ± std across seeds, and plots.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Reverse-window method(s), comma-separated.
        #[arg(long, value_delimiter = ',')]
        reverse: Vec<ReverseWindowMethod>,
    },
    /// Full pipeline for every configured variant and method.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Maximum training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn overrides(common: &Common) -> Overrides {
    Overrides {
        output_dir: common.output_dir.clone(),
        data_dir: common.data_dir.clone(),
        seeds: common.seeds.clone(),
        window: common.window,
        ..Overrides::default()
    }
}

/// One config per point of the d_K x d_Z sweep.
fn sweep(common: &Common, model: &ModelArgs, extra: impl Fn(&mut Overrides)) -> Result<Vec<ExperimentConfig>> {
    let d_k: Vec<Option<usize>> = if model.d_k.is_empty() {
        vec![None]
    } else {
        model.d_k.iter().copied().map(Some).collect()
    };
    let d_z: Vec<Option<usize>> = if model.d_z.is_empty() {
        vec![None]
    } else {
        model.d_z.iter().copied().map(Some).collect()
    };
    let mut out = Vec::new();
    for k in &d_k {
        for z in &d_z {
            let mut o = overrides(common);
            o.variant = model.ablation.as_ref().map(|_| Variant::Noma);
            o.key_dim = *k;
            o.latent = *z;
            extra(&mut o);
            out.push(resolve_config(common.config.as_deref(), &o)?);
        }
    }
    Ok(out)
}

fn methods(cfg: &ExperimentConfig, given: &[ReverseWindowMethod]) -> Vec<ReverseWindowMethod> {
    if given.is_empty() {
        vec![cfg.detect.reverse]
    } else {
        given.to_vec()
    }
}

fn save_resolved(cfg: &ExperimentConfig) -> Result<()> {
    cfg.save(&Layout::new(cfg).root.join("config.toml"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Config { common, out } => {
            let cfg = resolve_config(common.config.as_deref(), &overrides(&common))?;
            match out {
                Some(path) => cfg.save(&path)?,
                None => print!("{}", cfg.to_toml()?),
            }
        }
        Command::Generate { common, budget_hours } => {
            let mut o = overrides(&common);
            o.budget_hours = budget_hours;
            let cfg = resolve_config(common.config.as_deref(), &o)?;
            save_resolved(&cfg)?;
            pipeline::cmd_generate(&cfg)?;
        }
        Command::Preprocess { common } => {
            let cfg = resolve_config(common.config.as_deref(), &overrides(&common))?;
            let info = pipeline::cmd_preprocess(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
        Command::Train { common, model, epochs } => {
            for cfg in sweep(&common, &model, |o| o.max_epochs = epochs)? {
                for r in pipeline::cmd_train(&cfg)? {
                    println!(
                        "{} seed {}: best epoch {} val NLL {:.4} ({} epochs{})",
                        r.run,
                        r.seed,
                        r.best_epoch,
                        r.best_val_nll,
                        r.epochs,
                        if r.stopped_early { ", stopped early" } else { "" }
                    );
                }
            }
        }
        Command::Detect { common, model, reverse } => {
            for cfg in sweep(&common, &model, |_| {})? {
                for rep in pipeline::cmd_detect(&cfg, &methods(&cfg, &reverse))? {
                    let flagged = rep.records.iter().filter(|r| r.first_flagged_step.is_some()).count();
                    println!(
                        "{}: tau {:.4}, {flagged}/{} sequences flagged",
                        rep.method,
                        rep.tau,
                        rep.records.len()
                    );
                }
            }
        }
        Command::Evaluate { common, model, reverse } => {
            for cfg in sweep(&common, &model, |_| {})? {
                for e in pipeline::cmd_evaluate(&cfg, &methods(&cfg, &reverse))? {
                    let a = &e.aggregate;
                    println!(
                        "{} {}: P {} R {} F1 {} F1_best {} A_PR {} P_rc {}",
                        e.run, e.method, a.precision, a.recall, a.f1, a.f1_best, a.auc_pr, a.p_rc
                    );
                }
            }
        }
        Command::Benchmark { common, epochs } => {
            let mut o = overrides(&common);
            o.max_epochs = epochs;
            let cfg = resolve_config(common.config.as_deref(), &o)?;
            save_resolved(&cfg)?;
            let report = pipeline::cmd_benchmark(&cfg)?;
            print!("{}", report.to_markdown());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
