//! Blockwise Otsu binarisation and Zhang-Suen thinning.

use crate::image::{GrayImage, SkeletonMap};

/// Neighbour offsets in Zhang-Suen order P2..P9: N, NE, E, SE, S, SW, W, NW.
pub const NEIGHBORS: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

/// Otsu threshold on `[0, 1]` values using a 256-bin histogram.
pub fn otsu_threshold(values: &[f64]) -> f64 {
    let mut hist = [0usize; 256];
    for &v in values {
        hist[(v.clamp(0.0, 1.0) * 255.0).round() as usize] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::MIN, 0usize);
    for (t, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, t);
        }
    }
    // ridge pixels are those strictly darker than the boundary level + half a bin
    (best.1 as f64 + 0.5) / 255.0
}

/// Marks dark pixels as ridge using a per-block Otsu threshold. Nearly flat
/// blocks are all-ridge when dark on average and all-background otherwise.
pub fn binarize_blockwise(img: &GrayImage, block: usize) -> SkeletonMap {
    let (w, h) = img.dims();
    let mut out = SkeletonMap::empty(w, h);
    for by in (0..h).step_by(block) {
        for bx in (0..w).step_by(block) {
            let (x1, y1) = ((bx + block).min(w), (by + block).min(h));
            let vals: Vec<f64> = (by..y1)
                .flat_map(|y| (bx..x1).map(move |x| (x, y)))
                .map(|(x, y)| img.get(x, y))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            if var < 1e-4 {
                if mean < 0.5 {
                    for y in by..y1 {
                        for x in bx..x1 {
                            out.set(x, y, true);
                        }
                    }
                }
                continue;
            }
            let t = otsu_threshold(&vals);
            for y in by..y1 {
                for x in bx..x1 {
                    if img.get(x, y) < t {
                        out.set(x, y, true);
                    }
                }
            }
        }
    }
    out
}

fn neighbors(map: &SkeletonMap, x: usize, y: usize) -> [bool; 8] {
    let mut n = [false; 8];
    for (k, (dx, dy)) in NEIGHBORS.iter().enumerate() {
        n[k] = map.get_signed(x as isize + dx, y as isize + dy);
    }
    n
}

/// Number of 0→1 transitions around the cyclic neighbour sequence.
pub fn transitions(n: &[bool; 8]) -> usize {
    (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count()
}

fn zhang_suen_pass(map: &mut SkeletonMap, first: bool) -> bool {
    let (w, h) = map.dims();
    let mut remove = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !map.get(x, y) {
                continue;
            }
            let n = neighbors(map, x, y);
            let b = n.iter().filter(|&&v| v).count();
            if !(2..=6).contains(&b) || transitions(&n) != 1 {
                continue;
            }
            // P2=N(0) P4=E(2) P6=S(4) P8=W(6)
            let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
            let ok = if first {
                !(p2 && p4 && p6) && !(p4 && p6 && p8)
            } else {
                !(p2 && p4 && p8) && !(p2 && p6 && p8)
            };
            if ok {
                remove.push((x, y));
            }
        }
    }
    // Deleting all candidates at once can erase two-pixel-thick components
    // (a 2x2 block vanishes entirely), so each deletion is re-checked against
    // the current state.
    let mut changed = false;
    for &(x, y) in &remove {
        let n = neighbors(map, x, y);
        let b = n.iter().filter(|&&v| v).count();
        if (2..=6).contains(&b) && transitions(&n) == 1 {
            map.set(x, y, false);
            changed = true;
        }
    }
    changed
}

/// Deletes corner pixels of 4-connected staircases whose two arms already touch
/// diagonally, so the result has no fully set 2x2 blocks there.
fn remove_staircases(map: &mut SkeletonMap) -> bool {
    let (w, h) = map.dims();
    let mut changed = false;
    for y in 0..h {
        for x in 0..w {
            if !map.get(x, y) {
                continue;
            }
            let n = neighbors(map, x, y);
            // rotations of: N and E set, S, SW and W empty
            for r in 0..4 {
                let at = |k: usize| n[(k + 2 * r) % 8];
                if at(0) && at(2) && !at(4) && !at(5) && !at(6) {
                    map.set(x, y, false);
                    changed = true;
                    break;
                }
            }
        }
    }
    changed
}

/// Thins a binary ridge mask to a one-pixel-wide, 8-connected skeleton.
pub fn zhang_suen(mut map: SkeletonMap) -> SkeletonMap {
    loop {
        let mut changed = false;
        loop {
            let a = zhang_suen_pass(&mut map, true);
            let b = zhang_suen_pass(&mut map, false);
            if !(a || b) {
                break;
            }
            changed = true;
        }
        if remove_staircases(&mut map) {
            changed = true;
        }
        if !changed {
            return map;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn otsu_splits_two_levels() {
        let vals: Vec<f64> = (0..100).map(|i| if i < 30 { 0.1 } else { 0.9 }).collect();
        let t = otsu_threshold(&vals);
        assert!(t > 0.1 && t < 0.9);
    }

    #[test]
    fn two_by_two_block_is_reduced() {
        let map = SkeletonMap::from_fn(6, 6, |x, y| (2..4).contains(&x) && (2..4).contains(&y));
        let thin = zhang_suen(map);
        assert!((1..=2).contains(&thin.count()));
    }

    #[test]
    fn staircase_corner_removed() {
        // L-shaped 4-connected step: (1,1),(1,2),(2,2),(3,2)
        let mut map = SkeletonMap::empty(6, 5);
        for &(x, y) in &[(1, 0), (1, 1), (1, 2), (2, 2), (3, 2), (4, 2)] {
            map.set(x, y, true);
        }
        let thin = zhang_suen(map);
        assert!(!thin.get(1, 2));
        assert!(thin.get(1, 1) && thin.get(2, 2));
    }
}
