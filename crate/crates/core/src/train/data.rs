use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::volume::{extract_slices, normalize_zscore, CaseRecord, Dataset, DatasetSplit, SliceBatch};

use super::MicroBatch;

/// Z-scores the FLAIR volume; atlas and mask are unchanged.
pub fn prepare_case(case: &CaseRecord) -> Result<CaseRecord> {
    CaseRecord::new(
        case.case_id.clone(),
        normalize_zscore(&case.flair)?,
        case.atlas.clone(),
        case.mask.clone(),
    )
}

/// Training slices (pooled over cases) and whole validation cases, both
/// normalised.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: SliceBatch,
    pub val: Vec<CaseRecord>,
}

impl TrainData {
    pub fn from_cases(train: &[CaseRecord], val: &[CaseRecord], canvas: [usize; 2], keep_empty: bool) -> Result<Self> {
        let mut parts = Vec::with_capacity(train.len());
        for case in train {
            if case.mask.is_none() {
                return Err(Error::Data(format!("training case {} has no mask", case.case_id)));
            }
            let b = extract_slices(&prepare_case(case)?, canvas, keep_empty)?;
            if !b.is_empty() {
                parts.push(b);
            }
        }
        if parts.is_empty() {
            return Err(Error::Data("no training slices".into()));
        }
        let val = val.iter().map(prepare_case).collect::<Result<Vec<_>>>()?;
        if let Some(c) = val.iter().find(|c| c.mask.is_none()) {
            return Err(Error::Data(format!("validation case {} has no mask", c.case_id)));
        }
        Ok(TrainData {
            train: SliceBatch::concat(&parts)?,
            val,
        })
    }

    /// Loads the train and validation cases of `split`.
    pub fn load(dataset: &Dataset, split: &DatasetSplit, canvas: [usize; 2], keep_empty: bool) -> Result<Self> {
        let load = |ids: &[String]| {
            ids.iter()
                .map(|id| dataset.load_case(id, true))
                .collect::<Result<Vec<_>>>()
        };
        Self::from_cases(&load(&split.train)?, &load(&split.val)?, canvas, keep_empty)
    }
}

/// Casts a labelled slice batch to network precision.
pub fn to_micro_batch<T: Scalar>(b: &SliceBatch) -> Result<MicroBatch<T>> {
    let mask = b
        .mask
        .as_ref()
        .ok_or_else(|| Error::Data("training batch has no mask".into()))?;
    Ok(MicroBatch {
        flair: b.flair.cast(),
        atlas: b.atlas.cast(),
        mask: mask.cast(),
    })
}

/// Casts network output back to `f32`, clamping rounding overshoot.
pub(crate) fn to_probabilities<T: Scalar>(t: &Tensor<T>) -> Tensor<f32> {
    t.cast::<f32>().map(|v| v.clamp(0.0, 1.0))
}
