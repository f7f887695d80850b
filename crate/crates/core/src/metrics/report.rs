//! Per-case and aggregate metric reports (JSON and a plain-text table).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{avd, connected_components, dsc, lesion_f1, lesion_recall, Connectivity};
use crate::error::{Error, Result};
use crate::volume::dataset::find_volume_file;
use crate::volume::{load_volume, Dataset, Volume3D, VolumeKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub dsc: f64,
    pub avd: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_gt_lesions: usize,
    pub n_pred_lesions: usize,
}

impl CaseMetrics {
    /// Scores a binary prediction against a binary ground truth.
    pub fn compute(case_id: &str, pred: &Volume3D, gt: &Volume3D, connectivity: Connectivity) -> Result<Self> {
        let d = dsc(pred, gt)?;
        let a = avd(pred, gt).map_err(|e| Error::Data(format!("case {case_id}: {e}")))?;
        let pl = connected_components(&pred.binarize(0.5), connectivity)?;
        let gl = connected_components(&gt.binarize(0.5), connectivity)?;
        Ok(CaseMetrics {
            case_id: case_id.to_string(),
            dsc: d,
            avd: a,
            recall: lesion_recall(&pl, &gl)?,
            f1: lesion_f1(&pl, &gl)?,
            n_gt_lesions: gl.len(),
            n_pred_lesions: pl.len(),
        })
    }
}

/// Unweighted means over cases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub dsc: f64,
    pub avd: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub connectivity: Connectivity,
    pub n_cases: usize,
    pub cases: Vec<CaseMetrics>,
    pub aggregate: MetricSummary,
}

impl MetricReport {
    /// Sorts by case id and averages.
    pub fn from_cases(mut cases: Vec<CaseMetrics>, connectivity: Connectivity) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::Data("no cases to evaluate".into()));
        }
        cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        let n = cases.len() as f64;
        let mean = |f: fn(&CaseMetrics) -> f64| cases.iter().map(f).sum::<f64>() / n;
        let aggregate = MetricSummary {
            dsc: mean(|c| c.dsc),
            avd: mean(|c| c.avd),
            recall: mean(|c| c.recall),
            f1: mean(|c| c.f1),
        };
        Ok(MetricReport {
            connectivity,
            n_cases: cases.len(),
            cases,
            aggregate,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Fixed-width table: DSC, AVD, Recall, F1, then lesion counts.
    pub fn to_text(&self) -> String {
        let width = self.cases.iter().map(|c| c.case_id.len()).max().unwrap_or(0).max(7);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>8}  {:>8}  {:>10}  {:>8}  {:>6}  {:>6}",
            "case", "DSC (%)", "AVD (%)", "Recall (%)", "F1 (%)", "GT", "Pred"
        );
        for c in &self.cases {
            let _ = writeln!(
                s,
                "{:<width$}  {:>8.2}  {:>8.2}  {:>10.2}  {:>8.2}  {:>6}  {:>6}",
                c.case_id, c.dsc, c.avd, c.recall, c.f1, c.n_gt_lesions, c.n_pred_lesions
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            s,
            "{:<width$}  {:>8.2}  {:>8.2}  {:>10.2}  {:>8.2}",
            "mean", a.dsc, a.avd, a.recall, a.f1
        );
        s
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("report.json", self.to_json() + "\n"), ("report.txt", self.to_text())] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Evaluates `(case_id, prediction, ground truth)` triples.
pub fn evaluate(cases: &[(String, Volume3D, Volume3D)], connectivity: Connectivity) -> Result<MetricReport> {
    let rows = cases
        .iter()
        .map(|(id, p, g)| CaseMetrics::compute(id, p, g, connectivity))
        .collect::<Result<Vec<_>>>()?;
    MetricReport::from_cases(rows, connectivity)
}

/// Reads `<pred_dir>/<case_id>/mask.nii(.gz)` for every requested case
/// (default: all cases of `gt`) and scores it against the dataset mask.
pub fn evaluate_dirs(
    pred_dir: impl AsRef<Path>,
    gt: &Dataset,
    case_ids: Option<&[String]>,
    connectivity: Connectivity,
) -> Result<MetricReport> {
    let pred_dir = pred_dir.as_ref();
    let ids: Vec<String> = match case_ids {
        Some(ids) => ids.to_vec(),
        None => gt.case_ids(),
    };
    let mut rows = Vec::with_capacity(ids.len());
    for id in &ids {
        let file = find_volume_file(&pred_dir.join(id), "mask")
            .ok_or_else(|| Error::Data(format!("missing prediction for case {id} in {}", pred_dir.display())))?;
        let pred = load_volume(file, VolumeKind::Mask)?;
        let truth = gt.load_case(id, true)?;
        let mask = truth.mask.as_ref().expect("mask required above");
        rows.push(CaseMetrics::compute(id, &pred, mask, connectivity)?);
    }
    MetricReport::from_cases(rows, connectivity)
}
