use std::path::PathBuf;
use std::process::ExitCode;

use bagau_cli::commands::predict::{CaseSource, PredictOptions};
use bagau_cli::commands::{ablate, evaluate, phantom, predict, train};
use bagau_cli::config::RunConfig;
use bagau_cli::exit_code;
use bagau_core::metrics::Connectivity;
use bagau_core::{Error, Result, Variant};
use clap::{Args, Parser, Subcommand};

/// Atlas-guided dual-path attention U-Net for WMH segmentation.
///
/// Exit codes: 0 success, 1 failed check, 2 configuration error,
/// 3 data error, 4 numerical abort.
#[derive(Parser, Debug)]
#[command(name = "bagau", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Dotted-path override, e.g. `--set train.lr=0.001`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic dataset.
    Phantom {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output dataset directory (created if missing).
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        n_cases: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one variant; writes config, split, history and checkpoints.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset root (overrides data.root).
        #[arg(short, long)]
        data: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// Architecture variant (sets model.variant and train.variant).
        #[arg(long)]
        variant: Option<String>,
        /// Continue from a checkpoint; defaults to `<out>/last.ckpt`.
        #[arg(long, value_name = "CKPT", num_args = 0..=1)]
        resume: Option<Option<PathBuf>>,
        /// Instead of training, fit the first batch for this many steps and
        /// check that the loss drops below 0.1.
        #[arg(long, value_name = "STEPS")]
        overfit: Option<usize>,
    },
    /// Predict probability maps and masks for cases.
    Predict {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Case directory holding flair and atlas volumes. Repeatable.
        #[arg(long = "case-dir")]
        case_dirs: Vec<PathBuf>,
        /// Dataset root; used when no --case-dir is given.
        #[arg(short, long)]
        data: Option<PathBuf>,
        /// all, train, val or test.
        #[arg(long, default_value = "test")]
        subset: String,
        #[arg(short, long)]
        out: PathBuf,
        /// Binarisation threshold (default: train.threshold).
        #[arg(long)]
        threshold: Option<f64>,
        /// Also write per-slice PNG overlays.
        #[arg(long)]
        overlay: bool,
    },
    /// Score predicted masks against dataset ground truth.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory with `<case>/mask.nii.gz` predictions.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth dataset root.
        #[arg(short, long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        subset: String,
        /// 6, 18 or 26 (default: eval.connectivity).
        #[arg(long)]
        connectivity: Option<u8>,
        /// Report directory (default: the prediction directory).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train and compare variants on one shared split.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        data: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// Comma-separated variant names (default: all six).
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
}

fn resolve(args: &ConfigArgs, data: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::resolve(args.config.as_deref(), &args.overrides)?;
    if data.is_some() {
        cfg.data.root = data;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Phantom {
            cfg,
            out,
            n_cases,
            seed,
        } => {
            let mut rc = resolve(&cfg, None)?;
            if let Some(n) = n_cases {
                rc.phantom.n_cases = n;
            }
            if let Some(s) = seed {
                rc.phantom.seed = s;
            }
            rc.validate()?;
            phantom::run(&rc, &out)?;
        }
        Command::Train {
            cfg,
            data,
            out,
            variant,
            resume,
            overfit,
        } => {
            let mut rc = resolve(&cfg, data)?;
            if let Some(v) = variant {
                rc.set_variant(Variant::parse(&v)?);
            }
            rc.validate()?;
            println!("{}", rc.to_json());
            if let Some(steps) = overfit {
                let losses = train::overfit(&rc, &out, steps)?;
                let last = losses.last().copied().unwrap_or(f64::INFINITY);
                let best = losses.iter().copied().fold(f64::INFINITY, f64::min);
                log::info!("overfit: {} steps, final loss {last:.5}, best {best:.5}", losses.len());
                if best >= train::OVERFIT_TARGET {
                    eprintln!("overfit check failed: loss never fell below {}", train::OVERFIT_TARGET);
                    return Ok(ExitCode::from(1));
                }
                return Ok(ExitCode::SUCCESS);
            }
            let resume = resume.map(|p| p.unwrap_or_else(|| train::default_resume(&out)));
            let s = train::run(&rc, &out, resume)?;
            log::info!(
                "trained {} epochs; best val DSC {} at epoch {}",
                s.epochs,
                s.best_val_dsc.map_or("n/a".into(), |d| format!("{d:.2}")),
                s.best_epoch.map_or("n/a".into(), |e| e.to_string())
            );
        }
        Command::Predict {
            cfg,
            checkpoint,
            case_dirs,
            data,
            subset,
            out,
            threshold,
            overlay,
        } => {
            let rc = resolve(&cfg, data)?;
            let source = if case_dirs.is_empty() {
                CaseSource::Dataset { subset }
            } else {
                CaseSource::Dirs(case_dirs)
            };
            let opts = PredictOptions {
                threshold: threshold.unwrap_or(rc.train.threshold),
                overlay,
            };
            let ids = predict::run(&rc, &checkpoint, &source, &out, &opts)?;
            println!("predicted {} cases into {}", ids.len(), out.display());
        }
        Command::Evaluate {
            cfg,
            pred,
            data,
            subset,
            connectivity,
            out,
        } => {
            let mut rc = resolve(&cfg, data)?;
            if let Some(c) = connectivity {
                rc.eval.connectivity = Connectivity::try_from(c).map_err(Error::Config)?;
            }
            let out = out.unwrap_or_else(|| pred.clone());
            let report = evaluate::run(&rc, &pred, &subset, &out)?;
            print!("{}", report.to_text());
        }
        Command::Ablate {
            cfg,
            data,
            out,
            variants,
        } => {
            let rc = resolve(&cfg, data)?;
            let variants = if variants.is_empty() {
                Variant::ALL.to_vec()
            } else {
                variants.iter().map(|v| Variant::parse(v)).collect::<Result<Vec<_>>>()?
            };
            let report = ablate::run(&rc, &variants, &out)?;
            print!("{}", report.to_text());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            report(&e);
            ExitCode::from(exit_code(&e))
        }
    }
}

fn report(e: &Error) {
    eprintln!("error: {e}");
}
