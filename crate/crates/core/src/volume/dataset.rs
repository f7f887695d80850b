//! On-disk dataset contract: one directory per case holding
//! `flair.nii.gz`, `atlas.nii.gz` and optionally `mask.nii.gz`, plus a
//! `manifest.json` at the dataset root.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_volume, CaseRecord, VolumeKind};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub id: String,
    /// Case directory, relative to the dataset root.
    pub dir: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub split_seed: u64,
    pub cases: Vec<CaseEntry>,
}

impl Manifest {
    pub fn new(split_seed: u64, mut cases: Vec<CaseEntry>) -> Self {
        cases.sort_by(|a, b| a.id.cmp(&b.id));
        Manifest {
            format_version: MANIFEST_VERSION,
            split_seed,
            cases,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("invalid manifest {}: {e}", path.display())))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::Data(format!(
                "unsupported manifest version {} in {}",
                m.format_version,
                path.display()
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn case_ids(&self) -> Vec<String> {
        self.cases.iter().map(|c| c.id.clone()).collect()
    }
}

/// Finds `<stem>.nii.gz` or `<stem>.nii` in `dir`.
pub fn find_volume_file(dir: &Path, stem: &str) -> Option<PathBuf> {
    [format!("{stem}.nii.gz"), format!("{stem}.nii")]
        .into_iter()
        .map(|f| dir.join(f))
        .find(|p| p.is_file())
}

/// Loads one case directory; the mask is read when present.
pub fn load_case_dir(dir: &Path, case_id: &str, require_mask: bool) -> Result<CaseRecord> {
    let need = |stem: &str| {
        find_volume_file(dir, stem)
            .ok_or_else(|| Error::Data(format!("case {case_id}: no {stem}.nii(.gz) in {}", dir.display())))
    };
    let flair = load_volume(need("flair")?, VolumeKind::Flair)?;
    let atlas = load_volume(need("atlas")?, VolumeKind::Atlas)?;
    let mask = match find_volume_file(dir, "mask") {
        Some(p) => Some(load_volume(p, VolumeKind::Mask)?),
        None if require_mask => return Err(Error::Data(format!("case {case_id}: missing ground-truth mask"))),
        None => None,
    };
    CaseRecord::new(case_id, flair, atlas, mask)
}

/// A dataset root with its manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
}

impl Dataset {
    /// Reads `<root>/manifest.json`; without one, every subdirectory that
    /// holds a FLAIR volume is taken as a case (split seed 0).
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let mpath = root.join(MANIFEST_FILE);
        let manifest = if mpath.is_file() {
            Manifest::load(&mpath)?
        } else {
            let mut cases = Vec::new();
            for entry in fs::read_dir(&root).map_err(|e| Error::io(&root, e))? {
                let entry = entry.map_err(|e| Error::io(&root, e))?;
                let path = entry.path();
                if path.is_dir() && find_volume_file(&path, "flair").is_some() {
                    let name = entry.file_name().to_string_lossy().into_owned();
                    cases.push(CaseEntry {
                        id: name.clone(),
                        dir: name,
                    });
                }
            }
            if cases.is_empty() {
                return Err(Error::Data(format!("no cases found under {}", root.display())));
            }
            Manifest::new(0, cases)
        };
        Ok(Dataset { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn case_ids(&self) -> Vec<String> {
        self.manifest.case_ids()
    }

    pub fn case_dir(&self, id: &str) -> Result<PathBuf> {
        self.manifest
            .cases
            .iter()
            .find(|c| c.id == id)
            .map(|c| self.root.join(&c.dir))
            .ok_or_else(|| Error::Data(format!("case {id} not in dataset {}", self.root.display())))
    }

    pub fn load_case(&self, id: &str, require_mask: bool) -> Result<CaseRecord> {
        load_case_dir(&self.case_dir(id)?, id, require_mask)
    }
}
