//! Per-volume intensity standardisation.

use super::{Volume3D, VolumeKind};
use crate::error::{Error, Result};

/// Z-scores the nonzero voxels of a FLAIR volume; zero voxels (background
/// outside the brain) stay zero. Uses the population standard deviation.
pub fn normalize_zscore(v: &Volume3D) -> Result<Volume3D> {
    if v.kind() != VolumeKind::Flair {
        return Err(Error::Data(format!(
            "z-score normalisation expects a flair volume, got {}",
            v.kind().name()
        )));
    }
    let (mut n, mut sum) = (0usize, 0.0f64);
    for &x in v.data() {
        if x != 0.0 {
            n += 1;
            sum += x as f64;
        }
    }
    if n == 0 {
        return Err(Error::Data("empty brain support".into()));
    }
    let mean = sum / n as f64;
    let var = v
        .data()
        .iter()
        .filter(|&&x| x != 0.0)
        .map(|&x| (x as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(Error::Data("zero variance within brain support".into()));
    }
    let data = v
        .data()
        .iter()
        .map(|&x| {
            if x != 0.0 {
                ((x as f64 - mean) / std) as f32
            } else {
                0.0
            }
        })
        .collect();
    Volume3D::new(data, v.shape(), v.spacing(), VolumeKind::Flair)
}
