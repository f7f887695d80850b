//! Breadth-first flood fill used as the connected-component oracle.

use std::collections::VecDeque;

use bagau_core::metrics::Connectivity;

use super::idx;

pub const CONNECTIVITIES: [Connectivity; 3] = [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix];

/// Neighbours by brute force: every offset in the 3x3x3 cube whose number
/// of non-zero axes is at most 1, 2 or 3.
pub fn oracle_offsets(conn: Connectivity) -> Vec<[isize; 3]> {
    let max_axes = match conn {
        Connectivity::Six => 1,
        Connectivity::Eighteen => 2,
        Connectivity::TwentySix => 3,
    };
    let mut out = Vec::new();
    for dz in -1isize..=1 {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let nz = [dz, dy, dx].iter().filter(|&&v| v != 0).count();
                if nz > 0 && nz <= max_axes {
                    out.push([dz, dy, dx]);
                }
            }
        }
    }
    out
}

/// Flood fill seeded in raster order; labels start at 1.
pub fn flood_fill(fg: &[bool], shape: [usize; 3], conn: Connectivity) -> Vec<u32> {
    let [d, h, w] = shape;
    let offs = oracle_offsets(conn);
    let mut labels = vec![0u32; fg.len()];
    let mut next = 0;
    for start in 0..fg.len() {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (z, y, x) = ((i / (h * w)) as isize, ((i / w) % h) as isize, (i % w) as isize);
            for o in &offs {
                let (nz, ny, nx) = (z + o[0], y + o[1], x + o[2]);
                if nz < 0 || ny < 0 || nx < 0 || nz >= d as isize || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = idx(shape, nz as usize, ny as usize, nx as usize);
                if fg[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    labels
}
