use std::path::Path;

use bagau_core::metrics::{evaluate_dirs, MetricReport};
use bagau_core::Result;

use super::{open_dataset, subset_ids};
use crate::config::RunConfig;

/// Scores `<pred>/<case>/mask.nii(.gz)` against the dataset masks and
/// writes `report.json` / `report.txt` into `out`.
pub fn run(cfg: &RunConfig, pred: &Path, subset: &str, out: &Path) -> Result<MetricReport> {
    let ds = open_dataset(cfg)?;
    let ids = subset_ids(cfg, &ds, subset)?;
    let report = evaluate_dirs(pred, &ds, Some(&ids), cfg.eval.connectivity)?;
    report.save(out)?;
    Ok(report)
}
