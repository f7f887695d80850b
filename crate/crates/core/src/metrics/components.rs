//! 3-D connected-component labelling with a union-find over raster order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume3D;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn neighbours(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Whether a unit offset with `nonzero` moving axes is a neighbour.
    pub fn admits(self, nonzero: usize) -> bool {
        match self {
            Connectivity::Six => nonzero == 1,
            Connectivity::Eighteen => nonzero <= 2,
            Connectivity::TwentySix => nonzero <= 3,
        }
    }

    /// Neighbour offsets `(dz, dy, dx)` excluding the origin.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let nz = [dz, dy, dx].iter().filter(|&&d| d != 0).count();
                    if nz > 0 && self.admits(nz) {
                        out.push([dz, dy, dx]);
                    }
                }
            }
        }
        out
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(format!("connectivity must be 6, 18 or 26, got {v}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        c.neighbours()
    }
}

/// Components of a binary volume. Labels run from 1 in raster order of
/// each component's first voxel; 0 is background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LesionSet {
    shape: [usize; 3],
    labels: Vec<u32>,
    components: Vec<Vec<usize>>,
}

impl LesionSet {
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Per-voxel labels, row-major `(z, y, x)`.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Linear voxel indices of each component, ascending.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn is_foreground(&self, index: usize) -> bool {
        self.labels[index] != 0
    }

    /// Voxel coordinates of component `k`.
    pub fn voxels(&self, k: usize) -> Vec<[usize; 3]> {
        let [_, h, w] = self.shape;
        self.components[k]
            .iter()
            .map(|&i| [i / (h * w), (i / w) % h, i % w])
            .collect()
    }
}

fn find(parent: &mut [u32], mut a: u32) -> u32 {
    while parent[a as usize] != a {
        let p = parent[a as usize];
        parent[a as usize] = parent[p as usize];
        a = p;
    }
    a
}

/// Labels the `true` voxels of a `(D, H, W)` grid.
pub fn label_components(fg: &[bool], shape: [usize; 3], connectivity: Connectivity) -> LesionSet {
    let [d, h, w] = shape;
    assert_eq!(fg.len(), d * h * w, "foreground length must match shape");
    // Offsets that precede the current voxel in raster order.
    let back: Vec<[isize; 3]> = connectivity
        .offsets()
        .into_iter()
        .filter(|o| (o[0], o[1], o[2]) < (0, 0, 0))
        .collect();
    let mut provisional = vec![u32::MAX; fg.len()];
    let mut parent: Vec<u32> = Vec::new();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (z * h + y) * w + x;
                if !fg[i] {
                    continue;
                }
                let mut mine = u32::MAX;
                for o in &back {
                    let (nz, ny, nx) = (z as isize + o[0], y as isize + o[1], x as isize + o[2]);
                    if nz < 0 || ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let j = (nz as usize * h + ny as usize) * w + nx as usize;
                    let l = provisional[j];
                    if l == u32::MAX {
                        continue;
                    }
                    if mine == u32::MAX {
                        mine = find(&mut parent, l);
                    } else {
                        let (a, b) = (find(&mut parent, mine), find(&mut parent, l));
                        if a != b {
                            let (lo, hi) = (a.min(b), a.max(b));
                            parent[hi as usize] = lo;
                            mine = lo;
                        }
                    }
                }
                if mine == u32::MAX {
                    mine = parent.len() as u32;
                    parent.push(mine);
                }
                provisional[i] = mine;
            }
        }
    }
    let mut final_label = vec![0u32; parent.len()];
    let mut labels = vec![0u32; fg.len()];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for (i, &p) in provisional.iter().enumerate() {
        if p == u32::MAX {
            continue;
        }
        let root = find(&mut parent, p) as usize;
        if final_label[root] == 0 {
            components.push(Vec::new());
            final_label[root] = components.len() as u32;
        }
        let l = final_label[root];
        labels[i] = l;
        components[l as usize - 1].push(i);
    }
    LesionSet {
        shape,
        labels,
        components,
    }
}

/// Components of a binary volume (values must be exactly 0 or 1).
pub fn connected_components(mask: &Volume3D, connectivity: Connectivity) -> Result<LesionSet> {
    if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data("connected components need a binary volume".into()));
    }
    Ok(label_components(&mask.foreground(), mask.shape(), connectivity))
}
