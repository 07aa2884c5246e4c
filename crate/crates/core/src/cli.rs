//! Command-line entry points.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{load_config, TrainConfig};
use crate::data::{load_dataset, synthetic_dataset, write_dataset, CorruptionMode, SceneConfig, Split};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, load_net, mask_diagnostics, plot_loss_curves, sample_panels, save_panels, DEFAULT_CAP_M,
};
use crate::photometric::PhotometricConfig;
use crate::seed::Seeds;
use crate::trainer::{load_checkpoint, train_with, Trainer};

#[derive(Debug, Parser)]
#[command(name = "depth-distill", version, about = "Selective proxy distillation for monocular depth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic stereo dataset with corrupted proxies.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Training samples.
        #[arg(long)]
        n: usize,
        /// Test samples (default: n / 4, at least 1).
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        /// offset, blur, zero or none.
        #[arg(long, default_value = "offset")]
        corruption: String,
        /// Offset in pixels for `--corruption offset`.
        #[arg(long, default_value_t = 4.0)]
        offset: f64,
        /// Probability that a box is reflective (proxy corrupted on it).
        #[arg(long, default_value_t = 0.5)]
        reflective_prob: f64,
    },
    /// Train a network.
    Train {
        /// Config file; defaults to the 64x128 desk preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset root, overriding the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        /// Epoch budget, overriding the config.
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Report CSV (default: report.csv next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CAP_M)]
        cap: f64,
    },
    /// Compare learned masks with corruption metadata and the oracle.
    Masks {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Render loss curves and, with a checkpoint, disparity / mask panels.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Panel figure (default: panels.png next to `--out`).
        #[arg(long)]
        panels: Option<PathBuf>,
        /// Samples shown in the panel figure.
        #[arg(long, default_value_t = 4)]
        rows: usize,
    },
}

fn corruption_mode(name: &str, offset: f64) -> Result<Option<CorruptionMode>> {
    Ok(match name {
        "offset" => Some(CorruptionMode::Offset(offset)),
        "blur" => Some(CorruptionMode::Blur),
        "zero" => Some(CorruptionMode::Zero),
        "none" => None,
        other => return Err(Error::InvalidValue(format!("unknown corruption mode `{other}`"))),
    })
}

fn data_root(explicit: Option<PathBuf>, ckpt: &Path) -> Result<PathBuf> {
    match explicit {
        Some(p) => Ok(p),
        None => Ok(load_checkpoint(ckpt)?.config.dataset_root),
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData {
            out,
            n,
            n_test,
            seed,
            height,
            width,
            corruption,
            offset,
            reflective_prob,
        } => {
            let mode = corruption_mode(&corruption, offset)?;
            let cfg = SceneConfig {
                reflective_box_prob: if mode.is_some() { reflective_prob } else { 0.0 },
                ..SceneConfig::default()
            };
            let mode = mode.unwrap_or(CorruptionMode::Zero);
            let seeds = Seeds::new(seed);
            let n_test = n_test.unwrap_or((n / 4).max(1));
            for (split, count) in [(Split::Train, n), (Split::Test, n_test)] {
                let samples = synthetic_dataset(seeds.derive(split.as_str(), 0), count, height, width, &cfg, mode)?;
                write_dataset(&out, split, &samples)?;
            }
            println!("out={} train={n} test={n_test}", out.display());
        }
        Command::Train {
            config,
            data,
            out,
            epochs,
            resume,
        } => {
            let mut trainer = match (&resume, &config) {
                (Some(ckpt), _) => Trainer::resume(ckpt)?,
                (None, Some(path)) => Trainer::new(load_config(path)?)?,
                (None, None) => Trainer::new(TrainConfig::desk())?,
            };
            if let Some(e) = epochs {
                trainer.set_epochs(e);
            }
            let root = data.unwrap_or_else(|| trainer.config().dataset_root.clone());
            let dataset = load_dataset(&root, Split::Train, trainer.config().proxy_mode)?;
            if dataset.is_empty() {
                return Err(Error::EmptyDataset);
            }
            let res = train_with(&mut trainer, &dataset, &out)?;
            println!(
                "checkpoint={} metrics={} epochs={}",
                res.last_checkpoint.display(),
                res.metrics_csv.display(),
                trainer.epoch()
            );
        }
        Command::Eval {
            ckpt,
            data,
            split,
            out,
            cap,
        } => {
            let net = load_net(&ckpt)?;
            let root = data_root(data, &ckpt)?;
            let samples = load_dataset(&root, split.parse()?, crate::config::ProxyMode::Synthetic)?;
            let report = evaluate(&net, &samples, cap)?;
            let out = out.unwrap_or_else(|| ckpt.with_file_name("report.csv"));
            report.write_csv(&out)?;
            let m = report.overall;
            println!(
                "abs_rel={:.6} sq_rel={:.6} rmse={:.6} rmse_log={:.6} a1={:.6} a2={:.6} a3={:.6} n_pixels={} report={}",
                m.abs_rel,
                m.sq_rel,
                m.rmse,
                m.rmse_log,
                m.delta1,
                m.delta2,
                m.delta3,
                m.n_pixels,
                out.display()
            );
        }
        Command::Masks { ckpt, data, split } => {
            let ckpt_cfg = load_checkpoint(&ckpt)?.config;
            let net = load_net(&ckpt)?;
            let root = data.unwrap_or(ckpt_cfg.dataset_root.clone());
            let samples = load_dataset(&root, split.parse()?, crate::config::ProxyMode::Synthetic)?;
            let pcfg = PhotometricConfig {
                alpha: ckpt_cfg.weights.alpha,
                patch: ckpt_cfg.patch,
                ..PhotometricConfig::default()
            };
            let d = mask_diagnostics(&net, &samples, &pcfg)?;
            println!(
                "corrupted_rejected={:.6} corrupted_textured_rejected={:.6} oracle_agreement={:.6} rc_fill={:.6} sm_fill={:.6}",
                d.corrupted_rejected, d.corrupted_textured_rejected, d.oracle_agreement, d.rc_fill, d.sm_fill
            );
        }
        Command::Plot {
            metrics,
            out,
            ckpt,
            data,
            split,
            panels,
            rows,
        } => {
            plot_loss_curves(&metrics, &out)?;
            println!("curves={}", out.display());
            if let Some(ckpt) = ckpt {
                let net = load_net(&ckpt)?;
                let root = data_root(data, &ckpt)?;
                let samples = load_dataset(&root, split.parse()?, crate::config::ProxyMode::Synthetic)?;
                let figure = samples
                    .iter()
                    .take(rows)
                    .map(|s| sample_panels(&net, s))
                    .collect::<Result<Vec<_>>>()?;
                let path = panels.unwrap_or_else(|| out.with_file_name("panels.png"));
                save_panels(&path, &figure)?;
                println!("panels={}", path.display());
            }
        }
    }
    Ok(())
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on a runtime error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
