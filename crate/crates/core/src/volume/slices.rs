//! Axial slicing onto a fixed canvas and the exact inverse.

use serde::{Deserialize, Serialize};

use super::{CaseRecord, Volume3D, VolumeKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest canvas side accepted by [`extract_slices`].
pub const MIN_CANVAS: usize = 16;

/// Where a 2-D sample came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceOrigin {
    pub case_id: String,
    pub index: usize,
}

/// Stacked 2-D samples, each `(1, h, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceBatch {
    pub flair: Tensor<f32>,
    pub atlas: Tensor<f32>,
    pub mask: Option<Tensor<f32>>,
    pub origins: Vec<SliceOrigin>,
}

impl SliceBatch {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn canvas(&self) -> [usize; 2] {
        let s = self.flair.shape();
        [s[2], s[3]]
    }

    /// Slice indices, in batch order.
    pub fn indices(&self) -> Vec<usize> {
        self.origins.iter().map(|o| o.index).collect()
    }

    /// Samples at `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> SliceBatch {
        SliceBatch {
            flair: self.flair.select_batch(rows),
            atlas: self.atlas.select_batch(rows),
            mask: self.mask.as_ref().map(|m| m.select_batch(rows)),
            origins: rows.iter().map(|&r| self.origins[r].clone()).collect(),
        }
    }

    /// Joins batches with a common canvas; masks are kept only if every
    /// part has one.
    pub fn concat(parts: &[SliceBatch]) -> Result<SliceBatch> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Data("cannot concatenate zero slice batches".into()))?;
        if parts.iter().any(|p| p.canvas() != first.canvas()) {
            return Err(Error::Shape("slice batches have different canvases".into()));
        }
        let stack = |f: &dyn Fn(&SliceBatch) -> &Tensor<f32>| {
            let ts: Vec<&Tensor<f32>> = parts.iter().map(f).collect();
            Tensor::stack_batch(&ts)
        };
        let mask = if parts.iter().all(|p| p.mask.is_some()) {
            Some(stack(&|p| p.mask.as_ref().expect("checked"))?)
        } else {
            None
        };
        Ok(SliceBatch {
            flair: stack(&|p| &p.flair)?,
            atlas: stack(&|p| &p.atlas)?,
            mask,
            origins: parts.iter().flat_map(|p| p.origins.iter().cloned()).collect(),
        })
    }
}

/// `(source start, target start, length)` of a centred crop or pad.
fn axis_map(src: usize, dst: usize) -> (usize, usize, usize) {
    if src <= dst {
        (0, (dst - src) / 2, src)
    } else {
        ((src - dst) / 2, 0, dst)
    }
}

fn to_canvas(plane: &[f32], h: usize, w: usize, canvas: [usize; 2], out: &mut [f32]) {
    let (sy, ty, ly) = axis_map(h, canvas[0]);
    let (sx, tx, lx) = axis_map(w, canvas[1]);
    for y in 0..ly {
        let src = &plane[(sy + y) * w + sx..(sy + y) * w + sx + lx];
        out[(ty + y) * canvas[1] + tx..(ty + y) * canvas[1] + tx + lx].copy_from_slice(src);
    }
}

/// Cuts every axial slice of `case` and centre-crops or zero-pads it to
/// `canvas`. With `keep_empty == false`, slices whose FLAIR is all zero are
/// skipped.
pub fn extract_slices(case: &CaseRecord, canvas: [usize; 2], keep_empty: bool) -> Result<SliceBatch> {
    if canvas[0] < MIN_CANVAS || canvas[1] < MIN_CANVAS {
        return Err(Error::Config(format!(
            "canvas {canvas:?} is smaller than {MIN_CANVAS}x{MIN_CANVAS}"
        )));
    }
    let [d, h, w] = case.shape();
    let kept: Vec<usize> = (0..d)
        .filter(|&z| keep_empty || case.flair.slice(z).iter().any(|&v| v != 0.0))
        .collect();
    let cplane = canvas[0] * canvas[1];
    let cut = |v: &Volume3D| {
        let mut out = vec![0.0f32; kept.len() * cplane];
        for (i, &z) in kept.iter().enumerate() {
            to_canvas(v.slice(z), h, w, canvas, &mut out[i * cplane..(i + 1) * cplane]);
        }
        Tensor::from_vec([kept.len(), 1, canvas[0], canvas[1]], out)
    };
    Ok(SliceBatch {
        flair: cut(&case.flair)?,
        atlas: cut(&case.atlas)?,
        mask: case.mask.as_ref().map(cut).transpose()?,
        origins: kept
            .iter()
            .map(|&index| SliceOrigin {
                case_id: case.case_id.clone(),
                index,
            })
            .collect(),
    })
}

/// Inverse of [`extract_slices`]: places each `(1, h, w)` map at its axial
/// index, undoing the crop/pad. Indices absent from `indices` become zero.
pub fn restack_slices(
    maps: &Tensor<f32>,
    indices: &[usize],
    original_shape: [usize; 3],
    spacing: [f32; 3],
) -> Result<Volume3D> {
    let [n, c, ch, cw] = maps.shape();
    if c != 1 || n != indices.len() {
        return Err(Error::Shape(format!(
            "expected {} single-channel maps, got shape {:?}",
            indices.len(),
            maps.shape()
        )));
    }
    let [d, h, w] = original_shape;
    let mut seen = vec![false; d];
    for &z in indices {
        if z >= d {
            return Err(Error::Shape(format!("slice index {z} outside depth {d}")));
        }
        if std::mem::replace(&mut seen[z], true) {
            return Err(Error::Data(format!("duplicate slice index {z}")));
        }
    }
    let (sy, ty, ly) = axis_map(h, ch);
    let (sx, tx, lx) = axis_map(w, cw);
    let mut data = vec![0.0f32; d * h * w];
    for (i, &z) in indices.iter().enumerate() {
        let map = maps.sample(i);
        let plane = &mut data[z * h * w..(z + 1) * h * w];
        for y in 0..ly {
            let src = &map[(ty + y) * cw + tx..(ty + y) * cw + tx + lx];
            plane[(sy + y) * w + sx..(sy + y) * w + sx + lx].copy_from_slice(src);
        }
    }
    Volume3D::new(data, original_shape, spacing, VolumeKind::Probability)
}
