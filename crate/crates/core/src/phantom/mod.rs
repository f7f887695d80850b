//! Synthetic FLAIR / WM-atlas / lesion-mask triples.
//!
//! Each case is an ellipsoidal "brain" with three tissue bands (central
//! CSF, a white-matter shell, outer grey matter). The atlas is a smooth
//! indicator of the WM shell. Lesions are bright axis-aligned ellipsoids
//! placed only where the whole ellipsoid has atlas > 0.5; equally bright
//! distractor blobs are placed in grey matter (atlas < 0.1) so intensity
//! alone does not solve the task.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::dataset::{CaseEntry, Manifest, MANIFEST_FILE};
use crate::volume::{save_volume, CaseRecord, Volume3D, VolumeKind};

/// Inner and outer radius (in normalised brain radius) of the WM shell.
pub const WM_SHELL: (f64, f64) = (0.33, 0.77);
/// Softness of the shell boundary.
pub const WM_EDGE: f64 = 0.03;

const CSF: f64 = 0.2;
const WM: f64 = 0.8;
const GM: f64 = 1.0;
const MIN_TISSUE: f64 = 1e-3;
const PLACEMENT_TRIES: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub n_cases: usize,
    /// `(D, H, W)`.
    pub shape: [usize; 3],
    pub spacing: [f32; 3],
    /// Inclusive.
    pub lesion_count_range: [usize; 2],
    /// In-plane semi-axis range in voxels; the through-plane semi-axis is
    /// drawn from the same range and divided by `z_squash`.
    pub lesion_radius_range: [f64; 2],
    pub z_squash: f64,
    pub lesion_contrast: f64,
    pub distractor_count_range: [usize; 2],
    pub texture_amplitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            n_cases: 30,
            shape: [8, 128, 128],
            spacing: [3.0, 1.0, 1.0],
            lesion_count_range: [3, 8],
            lesion_radius_range: [2.0, 6.0],
            z_squash: 2.0,
            lesion_contrast: 0.6,
            distractor_count_range: [2, 5],
            texture_amplitude: 0.05,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let [d, h, w] = self.shape;
        if d < 8 || h < 32 || w < 32 {
            return bad(format!("phantom shape {:?} is below (8, 32, 32)", self.shape));
        }
        if self.lesion_count_range[0] > self.lesion_count_range[1]
            || self.distractor_count_range[0] > self.distractor_count_range[1]
        {
            return bad("count ranges must satisfy min <= max".into());
        }
        let [r0, r1] = self.lesion_radius_range;
        if !(r0 > 0.0 && r0 <= r1 && r1.is_finite()) {
            return bad(format!("invalid lesion radius range {:?}", self.lesion_radius_range));
        }
        if !(self.z_squash >= 1.0) || !(self.noise_sigma >= 0.0) || !(self.texture_amplitude >= 0.0) {
            return bad("z_squash must be >= 1; noise and texture must be >= 0".into());
        }
        if !(self.lesion_contrast > 0.0) || self.spacing.iter().any(|&s| !(s > 0.0)) {
            return bad("lesion contrast and spacing must be positive".into());
        }
        Ok(())
    }
}

/// An axis-aligned ellipsoid in voxel coordinates `(z, y, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [usize; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, z: usize, y: usize, x: usize) -> bool {
        let p = [z, y, x];
        (0..3)
            .map(|a| ((p[a] as f64 - self.center[a] as f64) / self.radii[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    /// Every voxel of the ellipsoid, or `None` if it leaves the grid.
    pub fn voxels(&self, shape: [usize; 3]) -> Option<Vec<[usize; 3]>> {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let r = self.radii[a].floor() as usize;
            if self.center[a] < r || self.center[a] + r >= shape[a] {
                return None;
            }
            lo[a] = self.center[a] - r;
            hi[a] = self.center[a] + r;
        }
        let mut out = Vec::new();
        for z in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for x in lo[2]..=hi[2] {
                    if self.contains(z, y, x) {
                        out.push([z, y, x]);
                    }
                }
            }
        }
        Some(out)
    }
}

/// Generation record written next to each case as `phantom.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomMeta {
    pub case_id: String,
    pub seed: u64,
    pub case_index: usize,
    pub brain_center: [f64; 3],
    pub brain_radii: [f64; 3],
    pub requested_lesions: usize,
    pub lesions: Vec<Ellipsoid>,
    pub distractors: Vec<Ellipsoid>,
    pub placement_failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomCase {
    pub record: CaseRecord,
    pub meta: PhantomMeta,
}

pub fn case_id(index: usize) -> String {
    format!("phantom_{index:03}")
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// WM prior as a function of normalised brain radius.
pub fn wm_prior(rho: f64) -> f64 {
    if rho >= 1.0 {
        return 0.0;
    }
    logistic((rho - WM_SHELL.0) / WM_EDGE) * logistic((WM_SHELL.1 - rho) / WM_EDGE)
}

struct Brain {
    center: [f64; 3],
    radii: [f64; 3],
}

impl Brain {
    fn rho(&self, z: usize, y: usize, x: usize) -> f64 {
        let p = [z as f64, y as f64, x as f64];
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Places up to `count` ellipsoids whose voxels all satisfy `ok`, without
/// overlapping `taken`. Returns the ellipsoids and the number given up on.
fn place(
    rng: &mut ChaCha8Rng,
    cfg: &PhantomConfig,
    count: usize,
    radius_range: [f64; 2],
    taken: &mut [bool],
    ok: impl Fn(usize) -> bool,
) -> (Vec<Ellipsoid>, usize) {
    let [d, h, w] = cfg.shape;
    let idx = |v: [usize; 3]| (v[0] * h + v[1]) * w + v[2];
    let [r0, r1] = radius_range;
    let mut placed = Vec::new();
    let mut failures = 0;
    for _ in 0..count {
        let mut done = false;
        for _ in 0..PLACEMENT_TRIES {
            let e = Ellipsoid {
                center: [rng.gen_range(0..d), rng.gen_range(0..h), rng.gen_range(0..w)],
                radii: [
                    (rng.gen_range(r0..=r1) / cfg.z_squash).max(1.0),
                    rng.gen_range(r0..=r1),
                    rng.gen_range(r0..=r1),
                ],
            };
            let Some(vox) = e.voxels(cfg.shape) else { continue };
            if vox.iter().all(|&v| ok(idx(v)) && !taken[idx(v)]) {
                vox.iter().for_each(|&v| taken[idx(v)] = true);
                placed.push(e);
                done = true;
                break;
            }
        }
        if !done {
            failures += 1;
        }
    }
    (placed, failures)
}

/// Deterministic in `(config.seed, case_index)`.
pub fn generate_case(config: &PhantomConfig, case_index: usize) -> Result<PhantomCase> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(case_index as u64);
    let [d, h, w] = config.shape;
    let n = d * h * w;

    let jitter = |rng: &mut ChaCha8Rng, v: f64, rel: f64| v * (1.0 + rng.gen_range(-rel..=rel));
    let brain = Brain {
        center: [
            (d as f64 - 1.0) / 2.0,
            (h as f64 - 1.0) / 2.0 + rng.gen_range(-2.0..=2.0),
            (w as f64 - 1.0) / 2.0 + rng.gen_range(-2.0..=2.0),
        ],
        radii: [
            jitter(&mut rng, 0.8 * d as f64, 0.05),
            jitter(&mut rng, 0.44 * h as f64, 0.05),
            jitter(&mut rng, 0.38 * w as f64, 0.05),
        ],
    };

    let mut rho = vec![0.0f64; n];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                rho[(z * h + y) * w + x] = brain.rho(z, y, x);
            }
        }
    }
    let atlas: Vec<f64> = rho.iter().map(|&r| wm_prior(r)).collect();

    let mut taken = vec![false; n];
    let requested = rng.gen_range(config.lesion_count_range[0]..=config.lesion_count_range[1]);
    let (lesions, failures) = place(
        &mut rng,
        config,
        requested,
        config.lesion_radius_range,
        &mut taken,
        |i| atlas[i] > 0.5,
    );
    let mut mask = vec![0.0f32; n];
    taken
        .iter()
        .zip(mask.iter_mut())
        .for_each(|(&t, m)| *m = t as u8 as f32);
    let n_distract = rng.gen_range(config.distractor_count_range[0]..=config.distractor_count_range[1]);
    let [r0, r1] = config.lesion_radius_range;
    let (distractors, _) = place(&mut rng, config, n_distract, [r0, 0.5 * (r0 + r1)], &mut taken, |i| {
        atlas[i] < 0.1 && rho[i] < 0.97
    });

    // Low-frequency texture: a few random plane waves.
    let waves: Vec<([f64; 3], f64)> = (0..4)
        .map(|_| {
            let f = [
                rng.gen_range(-0.3..=0.3),
                rng.gen_range(-0.25..=0.25),
                rng.gen_range(-0.25..=0.25),
            ];
            (f, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");

    let mut flair = vec![0.0f32; n];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (z * h + y) * w + x;
                if rho[i] >= 1.0 {
                    continue;
                }
                let other = if rho[i] < 0.55 { CSF } else { GM };
                let mut v = atlas[i] * WM + (1.0 - atlas[i]) * other;
                let tex: f64 = waves
                    .iter()
                    .map(|(f, ph)| (f[0] * z as f64 + f[1] * y as f64 + f[2] * x as f64 + ph).sin())
                    .sum();
                v += config.texture_amplitude * tex / waves.len() as f64;
                if taken[i] {
                    v += config.lesion_contrast;
                }
                if config.noise_sigma > 0.0 {
                    v += noise.sample(&mut rng);
                }
                flair[i] = v.max(MIN_TISSUE) as f32;
            }
        }
    }

    let id = case_id(case_index);
    let sp = config.spacing;
    let record = CaseRecord::new(
        id.clone(),
        Volume3D::new(flair, config.shape, sp, VolumeKind::Flair)?,
        Volume3D::new(
            atlas.iter().map(|&a| a as f32).collect(),
            config.shape,
            sp,
            VolumeKind::Atlas,
        )?,
        Some(Volume3D::new(mask, config.shape, sp, VolumeKind::Mask)?),
    )?;
    let meta = PhantomMeta {
        case_id: id,
        seed: config.seed,
        case_index,
        brain_center: brain.center,
        brain_radii: brain.radii,
        requested_lesions: requested,
        lesions,
        distractors,
        placement_failures: failures,
    };
    Ok(PhantomCase { record, meta })
}

/// Writes `n_cases` case directories and `manifest.json` under `out_dir`
/// (created if missing). Existing files are overwritten.
pub fn generate_dataset(config: &PhantomConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    config.validate()?;
    if config.n_cases == 0 {
        return Err(Error::Config("n_cases must be at least 1".into()));
    }
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut entries = Vec::with_capacity(config.n_cases);
    for i in 0..config.n_cases {
        let case = generate_case(config, i)?;
        let id = case.meta.case_id.clone();
        let dir = out.join(&id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_volume(&case.record.flair, dir.join("flair.nii.gz"))?;
        save_volume(&case.record.atlas, dir.join("atlas.nii.gz"))?;
        save_volume(
            case.record.mask.as_ref().expect("phantoms carry masks"),
            dir.join("mask.nii.gz"),
        )?;
        let meta_path = dir.join("phantom.json");
        let text = serde_json::to_string_pretty(&case.meta).expect("metadata serialises");
        fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))?;
        log::debug!("wrote {id}: {} lesions", case.meta.lesions.len());
        entries.push(CaseEntry {
            id: id.clone(),
            dir: id,
        });
    }
    let manifest = Manifest::new(config.seed, entries);
    manifest.save(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}
