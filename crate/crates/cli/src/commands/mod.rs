pub mod ablate;
pub mod evaluate;
pub mod phantom;
pub mod predict;
pub mod train;

use std::fs;
use std::path::Path;

use bagau_core::volume::{split_dataset, Dataset, DatasetSplit};
use bagau_core::{Error, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const SPLIT_FILE: &str = "split.json";

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn open_dataset(cfg: &RunConfig) -> Result<Dataset> {
    Dataset::open(cfg.data_root()?)
}

pub fn resolve_split(cfg: &RunConfig, ds: &Dataset) -> Result<DatasetSplit> {
    let seed = cfg.data.split_seed.unwrap_or(ds.manifest().split_seed);
    split_dataset(&ds.case_ids(), cfg.data.split, seed)
}

/// SHA-256 over the three id lists; equal hashes mean identical splits.
pub fn split_hash(split: &DatasetSplit) -> String {
    let canon = json!([split.train, split.val, split.test]).to_string();
    hex::encode(Sha256::digest(canon.as_bytes()))
}

pub fn write_split(split: &DatasetSplit, dir: &Path) -> Result<String> {
    let hash = split_hash(split);
    let body = json!({
        "seed": split.seed,
        "sha256": hash,
        "train": split.train,
        "val": split.val,
        "test": split.test,
    });
    write_text(
        &dir.join(SPLIT_FILE),
        &(serde_json::to_string_pretty(&body).expect("json") + "\n"),
    )?;
    Ok(hash)
}

/// Case ids for `all` or one of the split subsets.
pub fn subset_ids(cfg: &RunConfig, ds: &Dataset, subset: &str) -> Result<Vec<String>> {
    if subset == "all" {
        return Ok(ds.case_ids());
    }
    let split = resolve_split(cfg, ds)?;
    match subset {
        "train" => Ok(split.train),
        "val" => Ok(split.val),
        "test" => Ok(split.test),
        other => Err(Error::Config(format!(
            "unknown subset {other:?}; expected all, train, val or test"
        ))),
    }
}
