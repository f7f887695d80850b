use crate::error::{Error, Result};
use crate::model::{Checkpoint, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::volume::{extract_slices, restack_slices, CaseRecord, Volume3D};

use super::data::{prepare_case, to_probabilities};

/// Restacked per-voxel probabilities and their thresholded mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionVolume {
    pub case_id: String,
    pub probability: Volume3D,
    pub mask: Volume3D,
    pub threshold: f64,
}

fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::Config(format!("threshold must lie in [0,1], got {threshold}")))
    }
}

/// Predicts a case whose FLAIR is already normalised.
pub fn predict_prepared<T: Scalar>(
    net: &Network<T>,
    case: &CaseRecord,
    threshold: f64,
    eval_batch: usize,
) -> Result<PredictionVolume> {
    check_threshold(threshold)?;
    let slices = extract_slices(case, net.spec().canvas, true)?;
    let mut maps = Vec::new();
    let n = slices.len();
    let step = eval_batch.max(1);
    for start in (0..n).step_by(step) {
        let rows: Vec<usize> = (start..(start + step).min(n)).collect();
        let b = slices.select(&rows);
        let p = net.predict(&b.flair.cast(), &b.atlas.cast())?;
        maps.push(to_probabilities(&p));
    }
    let maps = Tensor::stack_batch(&maps)?;
    let probability = restack_slices(&maps, &slices.indices(), case.shape(), case.flair.spacing())?;
    let t = threshold as f32;
    Ok(PredictionVolume {
        case_id: case.case_id.clone(),
        mask: probability.binarize(t),
        probability,
        threshold,
    })
}

/// Normalises the FLAIR volume, then predicts every axial slice.
pub fn predict_case<T: Scalar>(
    net: &Network<T>,
    case: &CaseRecord,
    threshold: f64,
    eval_batch: usize,
) -> Result<PredictionVolume> {
    predict_prepared(net, &prepare_case(case)?, threshold, eval_batch)
}

/// Convenience wrapper running a checkpoint in `f32`.
pub fn predict(checkpoint: &Checkpoint, case: &CaseRecord, threshold: f64) -> Result<PredictionVolume> {
    let net = checkpoint.to_network::<f32>(None)?;
    predict_case(&net, case, threshold, 8)
}
