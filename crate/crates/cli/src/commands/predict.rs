use std::path::{Path, PathBuf};

use bagau_core::train::{predict_case, PredictionVolume};
use bagau_core::volume::{load_case_dir, save_volume};
use bagau_core::{CaseRecord, Checkpoint, Error, Result};

use super::{open_dataset, subset_ids};
use crate::config::{Precision, RunConfig};
use crate::overlay::write_overlays;

pub const PROBABILITY_FILE: &str = "probability.nii.gz";
pub const MASK_FILE: &str = "mask.nii.gz";
pub const OVERLAY_DIR: &str = "overlay";

/// Where the cases to predict come from.
pub enum CaseSource {
    Dirs(Vec<PathBuf>),
    Dataset { subset: String },
}

pub struct PredictOptions {
    pub threshold: f64,
    pub overlay: bool,
}

fn load_cases(cfg: &RunConfig, source: &CaseSource) -> Result<Vec<CaseRecord>> {
    match source {
        CaseSource::Dirs(dirs) => dirs
            .iter()
            .map(|d| {
                let id = d
                    .file_name()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| Error::Data(format!("cannot name case directory {}", d.display())))?;
                load_case_dir(d, id, false)
            })
            .collect(),
        CaseSource::Dataset { subset } => {
            let ds = open_dataset(cfg)?;
            subset_ids(cfg, &ds, subset)?
                .iter()
                .map(|id| ds.load_case(id, false))
                .collect()
        }
    }
}

pub fn predict_one(
    ck: &Checkpoint,
    case: &CaseRecord,
    precision: Precision,
    threshold: f64,
) -> Result<PredictionVolume> {
    match precision {
        Precision::F32 => predict_case(&ck.to_network::<f32>(None)?, case, threshold, 8),
        Precision::F64 => predict_case(&ck.to_network::<f64>(None)?, case, threshold, 8),
    }
}

/// Writes `<out>/<case>/{probability,mask}.nii.gz` (and overlays) for every
/// case; returns the case ids in order.
pub fn run(
    cfg: &RunConfig,
    checkpoint: &Path,
    source: &CaseSource,
    out: &Path,
    opts: &PredictOptions,
) -> Result<Vec<String>> {
    if !(0.0..=1.0).contains(&opts.threshold) {
        return Err(Error::Config(format!("threshold {} outside [0, 1]", opts.threshold)));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let cases = load_cases(cfg, source)?;
    let mut ids = Vec::with_capacity(cases.len());
    for case in &cases {
        let pred = predict_one(&ck, case, cfg.precision, opts.threshold)?;
        let dir = out.join(&case.case_id);
        std::fs::create_dir_all(&dir).map_err(|e| super::io_err(&dir, e))?;
        save_volume(&pred.probability, dir.join(PROBABILITY_FILE))?;
        save_volume(&pred.mask, dir.join(MASK_FILE))?;
        if opts.overlay {
            let written = write_overlays(&case.flair, &pred.mask, &dir.join(OVERLAY_DIR))?;
            log::info!("{}: {} overlay images", case.case_id, written.len());
        }
        log::info!(
            "{}: {} foreground voxels at threshold {}",
            case.case_id,
            pred.mask.foreground_count(),
            opts.threshold
        );
        ids.push(case.case_id.clone());
    }
    Ok(ids)
}
