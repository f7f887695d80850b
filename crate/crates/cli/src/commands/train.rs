use std::path::{Path, PathBuf};

use bagau_core::train::{
    overfit_one_batch, to_micro_batch, train, TrainData, TrainOutcome, TrainState, LAST_CHECKPOINT,
};
use bagau_core::volume::AugmentConfig;
use bagau_core::{Checkpoint, Error, Network, Result, Scalar};

use super::{open_dataset, resolve_split, write_split};
use crate::config::{Precision, RunConfig};

/// Loss the overfit smoke test must get below.
pub const OVERFIT_TARGET: f64 = 0.1;

pub struct TrainSummary {
    pub epochs: usize,
    pub best_val_dsc: Option<f64>,
    pub best_epoch: Option<usize>,
    pub split_hash: String,
}

/// Builds a fresh state, or restores one from `resume` after checking that
/// the checkpoint matches the configured architecture.
fn initial_state<T: Scalar>(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainState<T>> {
    let Some(path) = resume else {
        return TrainState::new(&cfg.model, &cfg.train);
    };
    let ck = Checkpoint::load(path)?;
    if ck.spec.variant != cfg.model.variant {
        return Err(Error::Config(format!(
            "checkpoint {} holds variant {}, config asks for {}",
            path.display(),
            ck.spec.variant,
            cfg.model.variant
        )));
    }
    if ck.spec != cfg.model {
        return Err(Error::Config(format!(
            "checkpoint {} was trained with a different model spec",
            path.display()
        )));
    }
    TrainState::from_checkpoint(&ck, &cfg.train)
}

fn run_typed<T: Scalar>(
    cfg: &RunConfig,
    data: &TrainData,
    out: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    let state = initial_state::<T>(cfg, resume)?;
    if state.epoch > 0 {
        log::info!("resuming after epoch {}", state.epoch);
    }
    train(state, &cfg.train, data, Some(out))
}

/// Trains into `out`: resolved config, split, history and checkpoints.
pub fn run(cfg: &RunConfig, out: &Path, resume: Option<PathBuf>) -> Result<TrainSummary> {
    cfg.echo(out)?;
    let ds = open_dataset(cfg)?;
    let split = resolve_split(cfg, &ds)?;
    let split_hash = write_split(&split, out)?;
    let data = TrainData::load(&ds, &split, cfg.model.canvas, cfg.train.keep_empty_slices)?;
    log::info!(
        "{} training slices, {} validation cases, split {}",
        data.train.len(),
        data.val.len(),
        &split_hash[..12]
    );
    let resume = resume.as_deref();
    let (epochs, best_val_dsc, best_epoch) = match cfg.precision {
        Precision::F32 => {
            let o = run_typed::<f32>(cfg, &data, out, resume)?;
            (o.state.epoch, o.state.best_val_dsc, o.state.best_epoch)
        }
        Precision::F64 => {
            let o = run_typed::<f64>(cfg, &data, out, resume)?;
            (o.state.epoch, o.state.best_val_dsc, o.state.best_epoch)
        }
    };
    Ok(TrainSummary {
        epochs,
        best_val_dsc,
        best_epoch,
        split_hash,
    })
}

pub fn default_resume(out: &Path) -> PathBuf {
    out.join(LAST_CHECKPOINT)
}

fn overfit_typed<T: Scalar>(cfg: &RunConfig, data: &TrainData, steps: usize) -> Result<Vec<f64>> {
    let rows: Vec<usize> = (0..cfg.train.batch_size.min(data.train.len())).collect();
    let batch = to_micro_batch::<T>(&data.train.select(&rows))?;
    let mut net = Network::<T>::build(&cfg.model)?;
    let mut tc = cfg.train.clone();
    tc.augment = AugmentConfig::none();
    overfit_one_batch(&mut net, &batch, &tc, steps)
}

/// Fits the first training batch for `steps` updates; returns the losses.
pub fn overfit(cfg: &RunConfig, out: &Path, steps: usize) -> Result<Vec<f64>> {
    cfg.echo(out)?;
    let ds = open_dataset(cfg)?;
    let split = resolve_split(cfg, &ds)?;
    let data = TrainData::load(&ds, &split, cfg.model.canvas, cfg.train.keep_empty_slices)?;
    if data.train.is_empty() {
        return Err(Error::Data("no training slices".into()));
    }
    match cfg.precision {
        Precision::F32 => overfit_typed::<f32>(cfg, &data, steps),
        Precision::F64 => overfit_typed::<f64>(cfg, &data, steps),
    }
}
