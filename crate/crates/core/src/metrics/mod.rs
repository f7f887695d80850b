//! Volumetric (DSC, AVD) and lesion-wise (recall, F1) evaluation.
//!
//! All scores are percentages. Foreground is `value > 0.5`.

pub mod components;
pub mod report;

use crate::error::{Error, Result};
use crate::volume::Volume3D;

pub use components::{connected_components, label_components, Connectivity, LesionSet};
pub use report::{evaluate, evaluate_dirs, CaseMetrics, MetricReport, MetricSummary};

fn check_shapes(a: &Volume3D, b: &Volume3D) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "prediction shape {:?} differs from ground truth {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `100 * 2|P n G| / (|P| + |G|)`; two empty volumes score 100.
pub fn dsc(pred: &Volume3D, gt: &Volume3D) -> Result<f64> {
    check_shapes(pred, gt)?;
    let (mut p, mut g, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        let (a, b) = (a > 0.5, b > 0.5);
        p += a as usize;
        g += b as usize;
        both += (a && b) as usize;
    }
    if p + g == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * 2.0 * both as f64 / (p + g) as f64)
}

/// `100 * ||P| - |G|| / |G|`; undefined (an error) for empty ground truth.
pub fn avd(pred: &Volume3D, gt: &Volume3D) -> Result<f64> {
    check_shapes(pred, gt)?;
    let p = pred.foreground_count() as f64;
    let g = gt.foreground_count() as f64;
    if g == 0.0 {
        return Err(Error::Data("undefined AVD: ground truth is empty".into()));
    }
    Ok(100.0 * (p - g).abs() / g)
}

/// Share of `of` components that touch any foreground voxel of `by`.
fn hit_rate(of: &LesionSet, by: &LesionSet) -> Option<f64> {
    if of.is_empty() {
        return None;
    }
    let hits = of
        .components()
        .iter()
        .filter(|c| c.iter().any(|&i| by.is_foreground(i)))
        .count();
    Some(100.0 * hits as f64 / of.len() as f64)
}

fn check_sets(a: &LesionSet, b: &LesionSet) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "lesion sets of shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// A ground-truth lesion counts as detected when it shares at least one
/// voxel with the prediction. No ground-truth lesions gives 100.
pub fn lesion_recall(pred: &LesionSet, gt: &LesionSet) -> Result<f64> {
    check_sets(pred, gt)?;
    Ok(hit_rate(gt, pred).unwrap_or(100.0))
}

/// Predicted lesions overlapping the ground truth; no predictions gives 100.
pub fn lesion_precision(pred: &LesionSet, gt: &LesionSet) -> Result<f64> {
    check_sets(pred, gt)?;
    Ok(hit_rate(pred, gt).unwrap_or(100.0))
}

/// Harmonic mean of lesion precision and recall. Both sets empty gives
/// 100; exactly one empty gives 0.
pub fn lesion_f1(pred: &LesionSet, gt: &LesionSet) -> Result<f64> {
    check_sets(pred, gt)?;
    match (pred.is_empty(), gt.is_empty()) {
        (true, true) => return Ok(100.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let r = lesion_recall(pred, gt)?;
    let p = lesion_precision(pred, gt)?;
    if r + p == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * p * r / (p + r))
}
