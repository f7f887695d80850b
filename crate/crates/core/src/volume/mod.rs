//! Volumes, on-disk formats, normalisation, slicing, augmentation and the
//! dataset split.
//!
//! Geometry convention: a volume is indexed `(z, y, x)` with shape
//! `(D, H, W)`; the first axis is axial, so slice `z` is an `H x W` image.
//! On disk (NIfTI) the same voxels are stored with `x` fastest, i.e. NIfTI
//! dims `(W, H, D)`.

pub mod augment;
pub mod dataset;
pub mod nifti_io;
pub mod normalize;
pub mod slices;
pub mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use augment::{apply_affine, augment, AffineParams, AugmentConfig};
pub use dataset::{find_volume_file, load_case_dir, CaseEntry, Dataset, Manifest, MANIFEST_FILE};
pub use nifti_io::{load_volume, save_volume};
pub use normalize::normalize_zscore;
pub use slices::{extract_slices, restack_slices, SliceBatch, SliceOrigin};
pub use split::{split_dataset, DatasetSplit, SplitRatio};

/// Tolerance used when checking that values are binary or in `[0, 1]`.
pub const VALUE_TOLERANCE: f32 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeKind {
    Flair,
    Atlas,
    Mask,
    Probability,
}

impl VolumeKind {
    pub fn name(self) -> &'static str {
        match self {
            VolumeKind::Flair => "flair",
            VolumeKind::Atlas => "atlas",
            VolumeKind::Mask => "mask",
            VolumeKind::Probability => "probability",
        }
    }
}

/// A 3-D scalar grid with voxel spacing in mm, `(D, H, W)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    data: Vec<f32>,
    shape: [usize; 3],
    spacing: [f32; 3],
    kind: VolumeKind,
}

impl Volume3D {
    /// Validates shape and the value domain implied by `kind`.
    pub fn new(data: Vec<f32>, shape: [usize; 3], spacing: [f32; 3], kind: VolumeKind) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Data(format!("volume shape {shape:?} has an empty axis")));
        }
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::Shape(format!(
                "volume of shape {shape:?} needs {len} voxels, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "{} volume contains non-finite values",
                kind.name()
            )));
        }
        match kind {
            VolumeKind::Mask => {
                if data.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Data("mask values outside {0,1}".into()));
                }
            }
            VolumeKind::Atlas | VolumeKind::Probability => {
                if data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(Error::Data(format!("{} values outside [0,1]", kind.name())));
                }
            }
            VolumeKind::Flair => {}
        }
        Ok(Volume3D {
            data,
            shape,
            spacing,
            kind,
        })
    }

    pub fn zeros(shape: [usize; 3], spacing: [f32; 3], kind: VolumeKind) -> Result<Self> {
        Self::new(vec![0.0; shape.iter().product()], shape, spacing, kind)
    }

    /// Thresholds a probability (or any) volume into a mask: `v > threshold`.
    pub fn binarize(&self, threshold: f32) -> Volume3D {
        Volume3D {
            data: self
                .data
                .iter()
                .map(|&v| if v > threshold { 1.0 } else { 0.0 })
                .collect(),
            shape: self.shape,
            spacing: self.spacing,
            kind: VolumeKind::Mask,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(z, y, x)]
    }

    /// Axial slice `z` as a row-major `H x W` image.
    pub fn slice(&self, z: usize) -> &[f32] {
        let plane = self.shape[1] * self.shape[2];
        &self.data[z * plane..(z + 1) * plane]
    }

    /// Number of voxels with value > 0.5.
    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.5).count()
    }

    /// Foreground indicator (`v > 0.5`) per voxel.
    pub fn foreground(&self) -> Vec<bool> {
        self.data.iter().map(|&v| v > 0.5).collect()
    }
}

/// FLAIR, atlas and (optional) ground truth of one subject, co-registered.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseRecord {
    pub case_id: String,
    pub flair: Volume3D,
    pub atlas: Volume3D,
    pub mask: Option<Volume3D>,
}

impl CaseRecord {
    /// Rejects volumes of the wrong kind or with differing shapes.
    pub fn new(case_id: impl Into<String>, flair: Volume3D, atlas: Volume3D, mask: Option<Volume3D>) -> Result<Self> {
        let case_id = case_id.into();
        let expect = |v: &Volume3D, kind: VolumeKind| {
            if v.kind() != kind {
                return Err(Error::Data(format!(
                    "case {case_id}: expected a {} volume, got {}",
                    kind.name(),
                    v.kind().name()
                )));
            }
            if v.shape() != flair.shape() {
                return Err(Error::Shape(format!(
                    "case {case_id}: {} shape {:?} differs from flair shape {:?}",
                    kind.name(),
                    v.shape(),
                    flair.shape()
                )));
            }
            Ok(())
        };
        expect(&flair, VolumeKind::Flair)?;
        expect(&atlas, VolumeKind::Atlas)?;
        if let Some(m) = &mask {
            expect(m, VolumeKind::Mask)?;
        }
        Ok(CaseRecord {
            case_id,
            flair,
            atlas,
            mask,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.flair.shape()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_invariants_are_enforced() {
        assert!(Volume3D::new(vec![0.0, 1.0], [1, 1, 2], [1.0; 3], VolumeKind::Mask).is_ok());
        assert!(Volume3D::new(vec![0.0, 0.5], [1, 1, 2], [1.0; 3], VolumeKind::Mask).is_err());
        let err = Volume3D::new(vec![0.0, 1.2], [1, 1, 2], [1.0; 3], VolumeKind::Atlas).unwrap_err();
        assert!(err.to_string().contains("atlas values outside [0,1]"));
        assert!(Volume3D::new(vec![-3.0, 7.0], [1, 1, 2], [1.0; 3], VolumeKind::Flair).is_ok());
        assert!(Volume3D::new(vec![], [0, 1, 2], [1.0; 3], VolumeKind::Flair).is_err());
    }

    #[test]
    fn case_record_rejects_misaligned_volumes() {
        let f = Volume3D::zeros([2, 4, 4], [1.0; 3], VolumeKind::Flair).unwrap();
        let a = Volume3D::zeros([2, 4, 4], [1.0; 3], VolumeKind::Atlas).unwrap();
        let bad = Volume3D::zeros([2, 4, 5], [1.0; 3], VolumeKind::Mask).unwrap();
        assert!(matches!(
            CaseRecord::new("c", f.clone(), a.clone(), Some(bad)),
            Err(Error::Shape(_))
        ));
        assert!(CaseRecord::new("c", f.clone(), f.clone(), None).is_err());
        assert!(CaseRecord::new("c", f, a, None).is_ok());
    }
}
