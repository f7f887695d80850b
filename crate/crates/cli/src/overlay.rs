//! Per-slice PNG composites: FLAIR in grayscale with the predicted mask
//! contour drawn in red.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use bagau_core::{Error, Result, Volume3D};

const CONTOUR: [u8; 3] = [255, 0, 0];

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Grayscale window: the 1st and 99th percentiles of nonzero intensities.
fn window(flair: &Volume3D) -> (f32, f32) {
    let mut v: Vec<f32> = flair.data().iter().copied().filter(|&x| x != 0.0).collect();
    if v.is_empty() {
        return (0.0, 1.0);
    }
    v.sort_by(f32::total_cmp);
    let lo = v[v.len() / 100];
    let hi = v[(v.len() - 1) * 99 / 100];
    (lo, if hi > lo { hi } else { lo + 1.0 })
}

/// RGB pixels of slice `z`. A mask voxel is on the contour when any of its
/// four in-plane neighbours is background or outside the image.
pub fn render_slice(flair: &Volume3D, mask: &Volume3D, z: usize, win: (f32, f32)) -> Vec<u8> {
    let [_, h, w] = flair.shape();
    let img = flair.slice(z);
    let m = mask.slice(z);
    let on = |y: isize, x: isize| {
        y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w && m[y as usize * w + x as usize] > 0.5
    };
    let mut rgb = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let (yi, xi) = (y as isize, x as isize);
            let edge = on(yi, xi) && !(on(yi - 1, xi) && on(yi + 1, xi) && on(yi, xi - 1) && on(yi, xi + 1));
            if edge {
                rgb.extend_from_slice(&CONTOUR);
            } else {
                let g = ((img[y * w + x] - win.0) / (win.1 - win.0)).clamp(0.0, 1.0);
                let g = (g * 255.0).round() as u8;
                rgb.extend_from_slice(&[g, g, g]);
            }
        }
    }
    rgb
}

/// Writes `slice_NNN.png` for every axial slice into `dir`.
pub fn write_overlays(flair: &Volume3D, mask: &Volume3D, dir: &Path) -> Result<Vec<PathBuf>> {
    if flair.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "overlay FLAIR {:?} vs mask {:?}",
            flair.shape(),
            mask.shape()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let [d, h, w] = flair.shape();
    let win = window(flair);
    let mut out = Vec::with_capacity(d);
    for z in 0..d {
        let path = dir.join(format!("slice_{z:03}.png"));
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| Error::Data(format!("{}: {e}", path.display()));
        let mut writer = enc.write_header().map_err(png_err)?;
        writer
            .write_image_data(&render_slice(flair, mask, z, win))
            .map_err(png_err)?;
        out.push(path);
    }
    Ok(out)
}
