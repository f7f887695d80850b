//! The epoch loop: shuffling, augmentation, validation, history and
//! checkpoints.
//!
//! Randomness for epoch `e` comes from a ChaCha stream keyed by
//! `(seed, e)`, so a run resumed from `last.ckpt` replays exactly the
//! batches an uninterrupted run would have seen.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::metrics::dsc;
use crate::model::{Checkpoint, ModelSpec, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::volume::{apply_affine, save_volume, AffineParams, SliceBatch, Volume3D, VolumeKind};

use super::data::{to_micro_batch, TrainData};
use super::predict::predict_prepared;
use super::step::{train_step, MicroBatch};
use super::{Adam, TrainConfig};

pub const HISTORY_FILE: &str = "history.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const ABORT_DIR: &str = "abort";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_dsc: Option<f64>,
    pub lr: f64,
    /// Seconds since the start of this process's run.
    pub wall_time: f64,
}

/// Everything needed to continue training bit-for-bit.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub network: Network<T>,
    pub optimizer: Adam<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub best_val_dsc: Option<f64>,
    pub best_epoch: Option<usize>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(spec: &ModelSpec, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if spec.variant != cfg.variant {
            return Err(Error::Config(format!(
                "model variant {} differs from training variant {}",
                spec.variant, cfg.variant
            )));
        }
        let network = Network::build(spec)?;
        let optimizer = Adam::new(network.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
        Ok(TrainState {
            network,
            optimizer,
            epoch: 0,
            step: 0,
            best_val_dsc: None,
            best_epoch: None,
        })
    }

    pub fn to_checkpoint(&self, cfg: &TrainConfig) -> Checkpoint {
        let mut ck = Checkpoint::from_network(&self.network, self.step);
        for (k, (_, p)) in self.network.params().iter().enumerate() {
            ck.insert(format!("adam.m/{}", p.name), &self.optimizer.m[k]);
            ck.insert(format!("adam.v/{}", p.name), &self.optimizer.v[k]);
        }
        ck.metadata = json!({
            "kind": "train_state",
            "epoch": self.epoch,
            "best_val_dsc": self.best_val_dsc,
            "best_epoch": self.best_epoch,
            "adam_t": self.optimizer.t,
            "train_config": cfg,
        });
        ck
    }

    /// Restores a state saved by [`TrainState::to_checkpoint`]. The
    /// checkpoint variant must match `cfg.variant`.
    pub fn from_checkpoint(ck: &Checkpoint, cfg: &TrainConfig) -> Result<Self> {
        if ck.spec.variant != cfg.variant {
            return Err(Error::Config(format!(
                "checkpoint variant {} conflicts with configured variant {}",
                ck.spec.variant, cfg.variant
            )));
        }
        let meta = &ck.metadata;
        if meta.get("kind").and_then(|v| v.as_str()) != Some("train_state") {
            return Err(Error::Checkpoint("checkpoint holds no training state".into()));
        }
        let network: Network<T> = ck.to_network(None)?;
        let mut optimizer = Adam::new(network.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
        for (k, (_, p)) in network.params().iter().enumerate() {
            for (prefix, slot) in [("adam.m", &mut optimizer.m[k]), ("adam.v", &mut optimizer.v[k])] {
                let name = format!("{prefix}/{}", p.name);
                let t: Tensor<T> = ck
                    .get(&name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
                if t.shape() != slot.shape() {
                    return Err(Error::Checkpoint(format!("tensor {name} has the wrong shape")));
                }
                *slot = t;
            }
        }
        let field = |k: &str| meta.get(k).cloned().unwrap_or(serde_json::Value::Null);
        let bad = |k: &str| Error::Checkpoint(format!("invalid training-state field {k}"));
        optimizer.t = field("adam_t").as_u64().ok_or_else(|| bad("adam_t"))?;
        Ok(TrainState {
            network,
            optimizer,
            epoch: field("epoch").as_u64().ok_or_else(|| bad("epoch"))? as usize,
            step: ck.step,
            best_val_dsc: field("best_val_dsc").as_f64(),
            best_epoch: field("best_epoch").as_u64().map(|v| v as usize),
        })
    }
}

/// Slice order and per-position augmentation for one epoch.
pub fn epoch_plan(cfg: &TrainConfig, epoch: usize, n: usize) -> (Vec<usize>, Vec<AffineParams>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let params = order
        .iter()
        .map(|_| AffineParams::sample(&mut rng, &cfg.augment))
        .collect();
    (order, params)
}

/// Mean volumetric DSC of thresholded predictions; `None` without cases.
pub fn validate<T: Scalar>(net: &Network<T>, data: &TrainData, cfg: &TrainConfig) -> Result<Option<f64>> {
    if data.val.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for case in &data.val {
        let pred = predict_prepared(net, case, cfg.threshold, cfg.eval_batch)?;
        sum += dsc(&pred.mask, case.mask.as_ref().expect("validation cases carry masks"))?;
    }
    Ok(Some(sum / data.val.len() as f64))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Data(format!("bad history line in {}: {e}", path.display())))
        })
        .collect()
}

fn history_line(r: &HistoryRecord) -> String {
    serde_json::to_string(r).expect("history record serialises") + "\n"
}

fn dump_abort(dir: &Path, batch: &SliceBatch, epoch: usize, step: u64, err: &Error) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let [n, _, h, w] = batch.flair.shape();
    let vol = |t: &Tensor<f32>, kind| Volume3D::new(t.data().to_vec(), [n, h, w], [1.0; 3], kind);
    save_volume(&vol(&batch.flair, VolumeKind::Flair)?, dir.join("flair.nii.gz"))?;
    save_volume(&vol(&batch.atlas, VolumeKind::Atlas)?, dir.join("atlas.nii.gz"))?;
    if let Some(m) = &batch.mask {
        save_volume(&vol(m, VolumeKind::Mask)?, dir.join("mask.nii.gz"))?;
    }
    let meta = json!({
        "epoch": epoch,
        "step": step,
        "reason": err.to_string(),
        "slices": batch.origins,
    });
    let p = dir.join("meta.json");
    fs::write(&p, serde_json::to_string_pretty(&meta).expect("json") + "\n").map_err(|e| Error::io(&p, e))
}

/// Result of [`train`].
pub struct TrainOutcome<T> {
    pub state: TrainState<T>,
    pub history: Vec<HistoryRecord>,
}

/// Trains from `state` (fresh or resumed) up to `cfg.epochs`.
///
/// With an output directory, writes `history.jsonl` (one record per
/// epoch), `last.ckpt` (full state, every epoch) and `best.ckpt` (highest
/// validation DSC; the latest epoch when there is no validation set). On a
/// non-finite loss or gradient the offending slices are dumped to
/// `abort/` and a numerical error is returned.
pub fn train<T: Scalar>(
    mut state: TrainState<T>,
    cfg: &TrainConfig,
    data: &TrainData,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if state.network.spec().variant != cfg.variant {
        return Err(Error::Config(
            "network variant differs from the training variant".into(),
        ));
    }
    let out: Option<PathBuf> = out_dir.map(Path::to_path_buf);
    let mut history = Vec::new();
    if let Some(dir) = &out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let hp = dir.join(HISTORY_FILE);
        if state.epoch > 0 && hp.is_file() {
            history = read_history(&hp)?;
            history.retain(|r| r.epoch <= state.epoch);
        }
        let text: String = history.iter().map(history_line).collect();
        fs::write(&hp, text).map_err(|e| Error::io(&hp, e))?;
    }
    let start = Instant::now();
    let n = data.train.len();
    let eff = cfg.effective_batch();
    for epoch in state.epoch + 1..=cfg.epochs {
        let (order, aug) = epoch_plan(cfg, epoch, n);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for (chunk, chunk_aug) in order.chunks(eff).zip(aug.chunks(eff)) {
            let batch = apply_affine(&data.train.select(chunk), chunk_aug)?;
            let micro = (0..chunk.len())
                .step_by(cfg.batch_size)
                .map(|s| {
                    let rows: Vec<usize> = (s..(s + cfg.batch_size).min(chunk.len())).collect();
                    to_micro_batch(&batch.select(&rows))
                })
                .collect::<Result<Vec<MicroBatch<T>>>>()?;
            match train_step(&mut state.network, &mut state.optimizer, &micro, cfg) {
                Ok(loss) => loss_sum += loss,
                Err(e @ Error::Numerical(_)) => {
                    if let Some(dir) = &out {
                        dump_abort(&dir.join(ABORT_DIR), &batch, epoch, state.step, &e)?;
                    }
                    return Err(Error::Numerical(format!("epoch {epoch}, step {}: {e}", state.step)));
                }
                Err(e) => return Err(e),
            }
            state.step += 1;
            steps += 1;
        }
        let train_loss = loss_sum / steps.max(1) as f64;
        let val_dsc = validate(&state.network, data, cfg)?;
        state.epoch = epoch;
        let record = HistoryRecord {
            epoch,
            train_loss,
            val_dsc,
            lr: cfg.lr,
            wall_time: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}/{}: loss {train_loss:.4}, val DSC {}",
            cfg.epochs,
            val_dsc.map_or("n/a".to_string(), |d| format!("{d:.2}"))
        );
        let improved = match (val_dsc, state.best_val_dsc) {
            (Some(v), Some(b)) => v > b,
            (Some(_), None) => true,
            (None, _) => true,
        };
        if improved {
            state.best_val_dsc = val_dsc;
            state.best_epoch = Some(epoch);
        }
        if let Some(dir) = &out {
            let hp = dir.join(HISTORY_FILE);
            let mut f = OpenOptions::new()
                .append(true)
                .open(&hp)
                .map_err(|e| Error::io(&hp, e))?;
            f.write_all(history_line(&record).as_bytes())
                .map_err(|e| Error::io(&hp, e))?;
            if improved {
                let mut best = Checkpoint::from_network(&state.network, state.step);
                best.metadata = json!({ "kind": "best", "epoch": epoch, "val_dsc": val_dsc });
                best.save(dir.join(BEST_CHECKPOINT))?;
            }
            state.to_checkpoint(cfg).save(dir.join(LAST_CHECKPOINT))?;
        }
        history.push(record);
    }
    Ok(TrainOutcome { state, history })
}

/// Repeatedly fits one fixed batch (no augmentation); returns the loss
/// before each of the `steps` updates.
pub fn overfit_one_batch<T: Scalar>(
    net: &mut Network<T>,
    batch: &MicroBatch<T>,
    cfg: &TrainConfig,
    steps: usize,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut adam = Adam::new(net.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let micro = std::slice::from_ref(batch);
    (0..steps).map(|_| train_step(net, &mut adam, micro, cfg)).collect()
}
