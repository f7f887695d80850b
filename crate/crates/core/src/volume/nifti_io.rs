//! NIfTI-1 reading and writing (`.nii` / `.nii.gz`).
//!
//! Masks are written as `uint8`, everything else as `float32`.

use std::path::Path;

use ndarray::{Array3, Ix3, ShapeBuilder};
use nifti::writer::WriterOptions;
use nifti::IntoNdArray;
use nifti::{NiftiError, NiftiHeader, NiftiObject, ReaderOptions};

use super::{Volume3D, VolumeKind, VALUE_TOLERANCE};
use crate::error::{Error, Result};

fn nifti_err(path: &Path, e: NiftiError) -> Error {
    match e {
        NiftiError::Io(source) => Error::io(path, source),
        other => Error::Nifti {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Reads a 3-D NIfTI volume and checks it against `kind`.
///
/// Mask values within tolerance of 0 or 1 are snapped to `{0, 1}` (by a
/// `> 0.5` test); atlas and probability values within tolerance of
/// `[0, 1]` are clamped. Anything further out is rejected.
pub fn load_volume(path: impl AsRef<Path>, kind: VolumeKind) -> Result<Volume3D> {
    let path = path.as_ref();
    let obj = ReaderOptions::new().read_file(path).map_err(|e| nifti_err(path, e))?;
    let header = obj.header().clone();
    let ndim = header.dim[0] as usize;
    if ndim != 3 {
        return Err(Error::Data(format!(
            "expected 3-D volume, got {ndim}-D in {}",
            path.display()
        )));
    }
    let arr = obj
        .into_volume()
        .into_ndarray::<f32>()
        .map_err(|e| nifti_err(path, e))?
        .into_dimensionality::<Ix3>()
        .map_err(|e| Error::Data(format!("expected 3-D volume in {}: {e}", path.display())))?;
    let (w, h, d) = arr.dim();
    // Reversing the axes turns NIfTI (x, y, z) into (z, y, x), whose
    // logical order is exactly the row-major layout of Volume3D.
    let mut data: Vec<f32> = arr.t().iter().copied().collect();
    let tol = VALUE_TOLERANCE;
    match kind {
        VolumeKind::Mask => {
            if data.iter().any(|&v| v.abs() > tol && (v - 1.0).abs() > tol) {
                return Err(Error::Data(format!(
                    "mask values outside {{0,1}} in {}",
                    path.display()
                )));
            }
            data.iter_mut().for_each(|v| *v = if *v > 0.5 { 1.0 } else { 0.0 });
        }
        VolumeKind::Atlas | VolumeKind::Probability => {
            if data.iter().any(|&v| !(-tol..=1.0 + tol).contains(&v)) {
                return Err(Error::Data(format!(
                    "{} values outside [0,1] in {}",
                    kind.name(),
                    path.display()
                )));
            }
            data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        VolumeKind::Flair => {}
    }
    let p = header.pixdim;
    let spacing = [p[3], p[2], p[1]].map(|s| if s > 0.0 { s } else { 1.0 });
    Volume3D::new(data, [d, h, w], spacing, kind)
}

/// Writes `v` as NIfTI-1; compression follows the file extension.
pub fn save_volume(v: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let [d, h, w] = v.shape();
    let [sz, sy, sx] = v.spacing();
    let header = NiftiHeader {
        pixdim: [1.0, sx, sy, sz, 1.0, 1.0, 1.0, 1.0],
        xyzt_units: 2,
        ..NiftiHeader::default()
    };
    let opts = WriterOptions::new(path).reference_header(&header);
    let shape = (w, h, d).f();
    let res = if v.kind() == VolumeKind::Mask {
        let bytes: Vec<u8> = v.data().iter().map(|&x| (x > 0.5) as u8).collect();
        let arr = Array3::from_shape_vec(shape, bytes).expect("volume length matches shape");
        opts.write_nifti(&arr)
    } else {
        let arr = Array3::from_shape_vec(shape, v.data().to_vec()).expect("volume length matches shape");
        opts.write_nifti(&arr)
    };
    res.map_err(|e| nifti_err(path, e))
}
