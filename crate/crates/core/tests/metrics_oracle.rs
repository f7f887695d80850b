//! Connected components against a breadth-first flood fill, metric hand
//! cases and metric invariants.

mod common;

use bagau_core::metrics::{
    avd, connected_components, dsc, evaluate, label_components, lesion_f1, lesion_precision, lesion_recall,
    Connectivity,
};
use bagau_core::volume::{Volume3D, VolumeKind};
use common::flood::*;
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn mask(bits: &[bool], shape: [usize; 3]) -> Volume3D {
    Volume3D::new(
        bits.iter().map(|&b| b as u8 as f32).collect(),
        shape,
        [1.0; 3],
        VolumeKind::Mask,
    )
    .unwrap()
}

fn random_bits(r: &mut rand_chacha::ChaCha8Rng, n: usize, density: f64) -> Vec<bool> {
    (0..n).map(|_| r.gen_bool(density)).collect()
}

#[test]
fn components_agree_with_flood_fill_on_random_masks() {
    let shape = [16, 16, 16];
    let mut r = rng(20);
    for case in 0..100 {
        let density = [0.05, 0.15, 0.3, 0.5][case % 4];
        let fg = random_bits(&mut r, 16 * 16 * 16, density);
        let vol = mask(&fg, shape);
        for conn in CONNECTIVITIES {
            let want = flood_fill(&fg, shape, conn);
            let got = connected_components(&vol, conn).unwrap();
            assert_eq!(got.labels(), &want[..], "case {case}, {conn:?}");
            assert_eq!(got.len() as u32, want.iter().copied().max().unwrap_or(0));
        }
    }
}

#[test]
fn neighbour_offsets_match_brute_force() {
    for conn in CONNECTIVITIES {
        let mut a = conn.offsets();
        let mut b = oracle_offsets(conn);
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(a.len(), conn.neighbours() as usize);
    }
}

#[test]
fn connectivity_distinguishes_face_edge_and_corner_contact() {
    let shape = [2, 2, 2];
    // Two voxels touching along an edge, then at a corner.
    for (pair, counts) in [
        ([idx(shape, 0, 0, 0), idx(shape, 0, 1, 1)], [2, 1, 1]),
        ([idx(shape, 0, 0, 0), idx(shape, 1, 1, 1)], [2, 2, 1]),
    ] {
        let mut fg = vec![false; 8];
        for i in pair {
            fg[i] = true;
        }
        for (conn, want) in CONNECTIVITIES.into_iter().zip(counts) {
            assert_eq!(label_components(&fg, shape, conn).len(), want, "{conn:?}");
        }
    }
}

#[test]
fn self_evaluation_is_ideal() {
    let shape = [6, 12, 12];
    let mut r = rng(21);
    let cases: Vec<_> = (0..5)
        .map(|i| {
            let m = mask(&random_bits(&mut r, 6 * 144, 0.1), shape);
            (format!("case{i}"), m.clone(), m)
        })
        .collect();
    let report = evaluate(&cases, Connectivity::TwentySix).unwrap();
    for c in &report.cases {
        assert_eq!((c.dsc, c.avd, c.recall, c.f1), (100.0, 0.0, 100.0, 100.0));
    }
    let a = report.aggregate;
    assert_eq!((a.dsc, a.avd, a.recall, a.f1), (100.0, 0.0, 100.0, 100.0));
}

#[test]
fn dsc_hand_case() {
    // |P n G| = 2, |P| = 4, |G| = 2.
    let shape = [1, 1, 6];
    let p = mask(&[true, true, true, true, false, false], shape);
    let g = mask(&[true, true, false, false, false, false], shape);
    assert!((dsc(&p, &g).unwrap() - 200.0 / 3.0).abs() < 1e-6);
    assert!((dsc(&p, &g).unwrap() - 66.67).abs() < 5e-3);
}

#[test]
fn avd_hand_case() {
    let shape = [1, 10, 10];
    let p = mask(&(0..100).map(|i| i < 80).collect::<Vec<_>>(), shape);
    let g = mask(&[true; 100], shape);
    assert!((avd(&p, &g).unwrap() - 20.0).abs() < 1e-6);
    assert!(avd(&g, &mask(&[false; 100], shape)).is_err());
}

#[test]
fn f1_hand_cases() {
    let shape = [1, 1, 7];
    let sets = |p: &[u8], g: &[u8]| {
        let to = |b: &[u8]| mask(&b.iter().map(|&v| v == 1).collect::<Vec<_>>(), shape);
        (
            connected_components(&to(p), Connectivity::TwentySix).unwrap(),
            connected_components(&to(g), Connectivity::TwentySix).unwrap(),
        )
    };
    // One predicted lesion covering one of two ground-truth lesions.
    let (p, g) = sets(&[1, 1, 0, 0, 0, 0, 0], &[0, 1, 0, 0, 1, 1, 0]);
    assert!((lesion_precision(&p, &g).unwrap() - 100.0).abs() < 1e-9);
    assert!((lesion_recall(&p, &g).unwrap() - 50.0).abs() < 1e-9);
    assert!((lesion_f1(&p, &g).unwrap() - 200.0 / 3.0).abs() < 1e-6);
    // Two predicted lesions, one overlapping the single ground-truth lesion.
    let (p, g) = sets(&[1, 0, 0, 1, 1, 0, 0], &[0, 0, 0, 0, 1, 1, 1]);
    assert!((lesion_precision(&p, &g).unwrap() - 50.0).abs() < 1e-9);
    assert!((lesion_recall(&p, &g).unwrap() - 100.0).abs() < 1e-9);
    assert!((lesion_f1(&p, &g).unwrap() - 200.0 / 3.0).abs() < 1e-6);
}

#[test]
fn single_lesion_identity_is_ideal_everywhere() {
    let shape = [3, 5, 5];
    let mut fg = vec![false; 75];
    for (z, y, x) in [(1, 2, 2), (1, 2, 3), (2, 2, 3)] {
        fg[idx(shape, z, y, x)] = true;
    }
    let m = mask(&fg, shape);
    let cc = connected_components(&m, Connectivity::TwentySix).unwrap();
    assert_eq!(cc.len(), 1);
    assert_eq!(dsc(&m, &m).unwrap(), 100.0);
    assert_eq!(avd(&m, &m).unwrap(), 0.0);
    assert_eq!(lesion_recall(&cc, &cc).unwrap(), 100.0);
    assert_eq!(lesion_f1(&cc, &cc).unwrap(), 100.0);
}

fn bits_strategy(n: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(prop::bool::weighted(0.3), n)
}

/// Applies a voxel permutation `perm[i]` (destination of voxel `i`).
fn permute(bits: &[bool], perm: &[usize]) -> Vec<bool> {
    let mut out = vec![false; bits.len()];
    for (i, &b) in bits.iter().enumerate() {
        out[perm[i]] = b;
    }
    out
}

/// Mirrors along each chosen axis; such flips preserve adjacency.
fn flip(bits: &[bool], shape: [usize; 3], axes: [bool; 3]) -> Vec<bool> {
    let [d, h, w] = shape;
    let mut out = vec![false; bits.len()];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let t = [
                    if axes[0] { d - 1 - z } else { z },
                    if axes[1] { h - 1 - y } else { y },
                    if axes[2] { w - 1 - x } else { x },
                ];
                out[idx(shape, t[0], t[1], t[2])] = bits[idx(shape, z, y, x)];
            }
        }
    }
    out
}

const PSHAPE: [usize; 3] = [4, 6, 5];
const PLEN: usize = 4 * 6 * 5;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dsc_is_symmetric(a in bits_strategy(PLEN), b in bits_strategy(PLEN)) {
        let (a, b) = (mask(&a, PSHAPE), mask(&b, PSHAPE));
        prop_assert_eq!(dsc(&a, &b).unwrap(), dsc(&b, &a).unwrap());
    }

    #[test]
    fn dsc_is_invariant_under_shared_permutation(
        a in bits_strategy(PLEN),
        b in bits_strategy(PLEN),
        perm in Just((0..PLEN).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let before = dsc(&mask(&a, PSHAPE), &mask(&b, PSHAPE)).unwrap();
        let after = dsc(&mask(&permute(&a, &perm), PSHAPE), &mask(&permute(&b, &perm), PSHAPE)).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn lesion_scores_ignore_relabelling(
        a in bits_strategy(PLEN),
        b in bits_strategy(PLEN),
        axes in prop::array::uniform3(any::<bool>()),
    ) {
        // Flipping permutes the component labels while keeping the lesions.
        let c = Connectivity::TwentySix;
        let sets = |x: &[bool]| connected_components(&mask(x, PSHAPE), c).unwrap();
        let (pa, pb) = (sets(&a), sets(&b));
        let (fa, fb) = (sets(&flip(&a, PSHAPE, axes)), sets(&flip(&b, PSHAPE, axes)));
        prop_assert_eq!(pa.len(), fa.len());
        prop_assert_eq!(lesion_recall(&pa, &pb).unwrap(), lesion_recall(&fa, &fb).unwrap());
        prop_assert_eq!(lesion_f1(&pa, &pb).unwrap(), lesion_f1(&fa, &fb).unwrap());
    }

    #[test]
    fn component_partition_is_independent_of_visit_order(
        a in bits_strategy(PLEN),
        axes in prop::array::uniform3(any::<bool>()),
        conn in prop::sample::select(CONNECTIVITIES.to_vec()),
    ) {
        // Labelling the flipped volume visits voxels in a different order;
        // mapped back, the partition must be identical.
        let direct = label_components(&a, PSHAPE, conn);
        let flipped = label_components(&flip(&a, PSHAPE, axes), PSHAPE, conn);
        let back: Vec<u32> = {
            let [d, h, w] = PSHAPE;
            let mut out = vec![0; PLEN];
            for z in 0..d { for y in 0..h { for x in 0..w {
                let t = [
                    if axes[0] { d - 1 - z } else { z },
                    if axes[1] { h - 1 - y } else { y },
                    if axes[2] { w - 1 - x } else { x },
                ];
                out[idx(PSHAPE, z, y, x)] = flipped.labels()[idx(PSHAPE, t[0], t[1], t[2])];
            }}}
            out
        };
        let mut pairs = std::collections::HashMap::new();
        for (&l1, &l2) in direct.labels().iter().zip(&back) {
            prop_assert_eq!(l1 == 0, l2 == 0);
            if l1 != 0 {
                let prev = pairs.insert(l1, l2);
                prop_assert!(prev.is_none() || prev == Some(l2));
            }
        }
        let distinct: std::collections::HashSet<_> = pairs.values().collect();
        prop_assert_eq!(distinct.len(), pairs.len());
    }

    #[test]
    fn metrics_stay_in_range(a in bits_strategy(PLEN), b in bits_strategy(PLEN)) {
        let (pa, pb) = (mask(&a, PSHAPE), mask(&b, PSHAPE));
        let d = dsc(&pa, &pb).unwrap();
        prop_assert!((0.0..=100.0).contains(&d));
        let c = Connectivity::TwentySix;
        let (sa, sb) = (connected_components(&pa, c).unwrap(), connected_components(&pb, c).unwrap());
        for v in [lesion_recall(&sa, &sb).unwrap(), lesion_f1(&sa, &sb).unwrap()] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
    }
}
