//! Random in-plane geometric augmentation (mirror, rotation, shear, scale).
//!
//! One affine transform is drawn per sample and applied about the canvas
//! centre to FLAIR and atlas (bilinear) and to the mask (nearest neighbour).
//! Points that map from outside the canvas read as zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SliceBatch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sampling ranges. Rotation is uniform in `±rotation_deg`, shear in
/// `±shear`, isotropic scale in `1 ± scale`; mirroring (horizontal flip)
/// happens with probability `mirror_prob`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub rotation_deg: f64,
    pub shear: f64,
    pub scale: f64,
    pub mirror_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_deg: 15.0,
            shear: 0.1,
            scale: 0.1,
            mirror_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            rotation_deg: 0.0,
            shear: 0.0,
            scale: 0.0,
            mirror_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.rotation_deg) && ok(self.shear) && ok(self.scale) && ok(self.mirror_prob)) {
            return Err(Error::Config(format!(
                "augmentation ranges must be finite and >= 0: {self:?}"
            )));
        }
        if self.mirror_prob > 1.0 || self.scale >= 1.0 {
            return Err(Error::Config(format!(
                "need mirror_prob <= 1 and scale < 1, got {} and {}",
                self.mirror_prob, self.scale
            )));
        }
        Ok(())
    }
}

/// One concrete transform: `rotate(shear(scale(mirror(p))))` about the centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub mirror: bool,
    pub rotation_deg: f64,
    pub shear: f64,
    pub scale: f64,
}

impl AffineParams {
    pub fn identity() -> Self {
        AffineParams {
            mirror: false,
            rotation_deg: 0.0,
            shear: 0.0,
            scale: 1.0,
        }
    }

    /// Always consumes exactly four draws, whatever the ranges.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, cfg: &AugmentConfig) -> Self {
        let mirror = rng.gen::<f64>() < cfg.mirror_prob;
        let rotation_deg = rng.gen_range(-cfg.rotation_deg..=cfg.rotation_deg);
        let shear = rng.gen_range(-cfg.shear..=cfg.shear);
        let scale = 1.0 + rng.gen_range(-cfg.scale..=cfg.scale);
        AffineParams {
            mirror,
            rotation_deg,
            shear,
            scale,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    /// Forward matrix acting on centred `(x, y)` coordinates.
    fn matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let m = if self.mirror { -1.0 } else { 1.0 };
        let k = self.scale;
        // R * [[1, shear], [0, 1]] * k * diag(m, 1)
        [
            [c * k * m, (c * self.shear - s) * k],
            [s * k * m, (s * self.shear + c) * k],
        ]
    }

    /// Maps a source pixel `(y, x)` to its position after the transform.
    pub fn forward_point(&self, y: f64, x: f64, h: usize, w: usize) -> (f64, f64) {
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let a = self.matrix();
        let (dx, dy) = (x - cx, y - cy);
        (a[1][0] * dx + a[1][1] * dy + cy, a[0][0] * dx + a[0][1] * dy + cx)
    }

    /// Resamples one `h x w` plane.
    pub fn apply(&self, plane: &[f32], h: usize, w: usize, nearest: bool) -> Vec<f32> {
        if self.is_identity() {
            return plane.to_vec();
        }
        let a = self.matrix();
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let get = |y: i64, x: i64| -> f64 {
            if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
                0.0
            } else {
                plane[y as usize * w + x as usize] as f64
            }
        };
        let mut out = vec![0.0f32; h * w];
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let sx = inv[0][0] * dx + inv[0][1] * dy + cx;
                let sy = inv[1][0] * dx + inv[1][1] * dy + cy;
                out[y * w + x] = if nearest {
                    get(sy.round() as i64, sx.round() as i64) as f32
                } else {
                    let (x0, y0) = (sx.floor(), sy.floor());
                    let (fx, fy) = (sx - x0, sy - y0);
                    let (x0, y0) = (x0 as i64, y0 as i64);
                    let top = (1.0 - fx) * get(y0, x0) + fx * get(y0, x0 + 1);
                    let bottom = (1.0 - fx) * get(y0 + 1, x0) + fx * get(y0 + 1, x0 + 1);
                    ((1.0 - fy) * top + fy * bottom) as f32
                };
            }
        }
        out
    }
}

fn transform_all(t: &Tensor<f32>, params: &[AffineParams], nearest: bool) -> Tensor<f32> {
    let [n, c, h, w] = t.shape();
    let mut out = Vec::with_capacity(t.len());
    for (s, p) in params.iter().enumerate().take(n) {
        for ch in 0..c {
            let off = t.offset(s, ch, 0, 0);
            out.extend(p.apply(&t.data()[off..off + h * w], h, w, nearest));
        }
    }
    Tensor::from_vec(t.shape(), out).expect("shape preserved")
}

/// Applies one transform per sample (`params.len()` must equal the batch size).
pub fn apply_affine(batch: &SliceBatch, params: &[AffineParams]) -> Result<SliceBatch> {
    if params.len() != batch.len() {
        return Err(Error::Shape(format!(
            "{} transforms for a batch of {}",
            params.len(),
            batch.len()
        )));
    }
    Ok(SliceBatch {
        flair: transform_all(&batch.flair, params, false),
        atlas: transform_all(&batch.atlas, params, false).map(|v| v.clamp(0.0, 1.0)),
        mask: batch.mask.as_ref().map(|m| transform_all(m, params, true)),
        origins: batch.origins.clone(),
    })
}

/// Draws one transform per sample from `rng` and applies it.
pub fn augment<R: Rng + ?Sized>(batch: &SliceBatch, rng: &mut R, config: &AugmentConfig) -> Result<SliceBatch> {
    config.validate()?;
    let params: Vec<AffineParams> = (0..batch.len()).map(|_| AffineParams::sample(rng, config)).collect();
    apply_affine(batch, &params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::SliceOrigin;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch() -> SliceBatch {
        let (h, w) = (16, 20);
        let f: Vec<f32> = (0..2 * h * w).map(|i| (i as f32 * 0.37).sin()).collect();
        let m: Vec<f32> = (0..2 * h * w).map(|i| (i % 3 == 0) as u8 as f32).collect();
        SliceBatch {
            flair: Tensor::from_vec([2, 1, h, w], f.clone()).unwrap(),
            atlas: Tensor::from_vec([2, 1, h, w], f.iter().map(|v| v.abs()).collect()).unwrap(),
            mask: Some(Tensor::from_vec([2, 1, h, w], m).unwrap()),
            origins: (0..2)
                .map(|index| SliceOrigin {
                    case_id: "c".into(),
                    index,
                })
                .collect(),
        }
    }

    #[test]
    fn zero_ranges_give_identity() {
        let b = batch();
        let out = augment(&b, &mut ChaCha8Rng::seed_from_u64(1), &AugmentConfig::none()).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn mirror_is_a_horizontal_flip_and_an_involution() {
        let b = batch();
        let cfg = AugmentConfig {
            mirror_prob: 1.0,
            ..AugmentConfig::none()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let once = augment(&b, &mut rng, &cfg).unwrap();
        assert_eq!(once.flair.at(0, 0, 3, 0), b.flair.at(0, 0, 3, 19));
        assert_eq!(
            once.mask.as_ref().unwrap().at(1, 0, 5, 4),
            b.mask.as_ref().unwrap().at(1, 0, 5, 15)
        );
        let twice = augment(&once, &mut rng, &cfg).unwrap();
        assert_eq!(twice, b);
    }

    #[test]
    fn quarter_turn_moves_a_delta_to_the_rotated_offset() {
        let (h, w) = (17, 17);
        let mut plane = vec![0.0f32; h * w];
        // offset (dy, dx) = (-2, 5) from the centre (8, 8)
        plane[6 * w + 13] = 1.0;
        let p = AffineParams {
            rotation_deg: 90.0,
            ..AffineParams::identity()
        };
        let out = p.apply(&plane, h, w, true);
        // (dx, dy) -> (-dy, dx) = (2, 5)
        let hit: Vec<usize> = (0..h * w).filter(|&i| out[i] == 1.0).collect();
        assert_eq!(hit, vec![(8 + 5) * w + (8 + 2)]);
        let (y, x) = p.forward_point(6.0, 13.0, h, w);
        assert!((y - 13.0).abs() < 1e-9 && (x - 10.0).abs() < 1e-9);
    }

    #[test]
    fn masks_stay_binary_and_seeds_reproduce() {
        let b = batch();
        let cfg = AugmentConfig {
            rotation_deg: 30.0,
            shear: 0.2,
            scale: 0.2,
            mirror_prob: 0.5,
        };
        let x = augment(&b, &mut ChaCha8Rng::seed_from_u64(9), &cfg).unwrap();
        let y = augment(&b, &mut ChaCha8Rng::seed_from_u64(9), &cfg).unwrap();
        assert_eq!(x, y);
        assert!(x.mask.unwrap().data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(x.atlas.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
