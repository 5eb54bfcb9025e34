//! Crossing-number minutia extraction, spur pruning, border suppression and
//! the binary minutia map.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::image::SkeletonMap;
use crate::minutia::{Minutia, MinutiaKind, MinutiaSet};

use super::thinning::NEIGHBORS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinutiaConfig {
    /// Branches shorter than this many pixels are pruned (0 disables).
    pub spur_length: usize,
    /// Minutiae closer than this to the foreground boundary are dropped (0 disables).
    pub border_margin: usize,
    /// Block size of the skeleton-derived foreground mask.
    pub mask_block: usize,
    /// Pixels traced along the ridge to estimate a minutia angle.
    pub trace_length: usize,
}

impl Default for MinutiaConfig {
    fn default() -> Self {
        Self {
            spur_length: 8,
            border_margin: 10,
            mask_block: 16,
            trace_length: 6,
        }
    }
}

impl MinutiaConfig {
    /// Plain crossing-number extraction with no pruning or suppression.
    pub fn raw() -> Self {
        Self {
            spur_length: 0,
            border_margin: 0,
            ..Self::default()
        }
    }
}

fn ring(map: &SkeletonMap, x: usize, y: usize) -> [bool; 8] {
    let mut n = [false; 8];
    for (k, (dx, dy)) in NEIGHBORS.iter().enumerate() {
        n[k] = map.get_signed(x as isize + dx, y as isize + dy);
    }
    n
}

/// Crossing number `½ Σ |P_i − P_{i+1}|` over the cyclic 8-neighbourhood.
pub fn crossing_number(map: &SkeletonMap, x: usize, y: usize) -> usize {
    let n = ring(map, x, y);
    (0..8).filter(|&i| n[i] != n[(i + 1) % 8]).count() / 2
}

fn ridge_neighbors(map: &SkeletonMap, x: usize, y: usize) -> Vec<(usize, usize)> {
    NEIGHBORS
        .iter()
        .filter_map(|(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            map.get_signed(nx, ny).then_some((nx as usize, ny as usize))
        })
        .collect()
}

/// Follows the ridge from `start`, never revisiting `blocked` pixels; stops at
/// junctions, dead ends, or after `max_steps` pixels. Returns the visited path
/// (excluding the origin) and whether a junction pixel terminated it.
fn trace(
    map: &SkeletonMap,
    start: (usize, usize),
    blocked: &HashSet<(usize, usize)>,
    max_steps: usize,
) -> (Vec<(usize, usize)>, bool) {
    let mut path = vec![start];
    let mut seen: HashSet<(usize, usize)> = blocked.clone();
    seen.insert(start);
    let mut cur = start;
    loop {
        let nbrs = ridge_neighbors(map, cur.0, cur.1);
        if nbrs.len() >= 3 && crossing_number(map, cur.0, cur.1) >= 3 {
            return (path, true);
        }
        if path.len() >= max_steps {
            return (path, false);
        }
        let next: Vec<_> = nbrs.into_iter().filter(|p| !seen.contains(p)).collect();
        // prefer 4-neighbours so diagonal shortcuts are not mistaken for branches
        let step = next
            .iter()
            .find(|p| p.0 == cur.0 || p.1 == cur.1)
            .or_else(|| next.first())
            .copied();
        match step {
            Some(p) => {
                // any other unseen neighbour is now reachable and must not be re-entered
                for q in &next {
                    seen.insert(*q);
                }
                seen.insert(p);
                path.push(p);
                cur = p;
            }
            None => return (path, false),
        }
    }
}

/// Contiguous runs of ridge neighbours around a pixel; one run per branch.
fn branch_starts(map: &SkeletonMap, x: usize, y: usize) -> Vec<(usize, usize)> {
    let n = ring(map, x, y);
    let mut starts = Vec::new();
    for i in 0..8 {
        if n[i] && !n[(i + 7) % 8] {
            // walk the run, preferring its 4-connected member
            let mut best = i;
            let mut j = i;
            while n[j % 8] {
                if (j % 8) % 2 == 0 {
                    best = j % 8;
                    break;
                }
                j += 1;
                if j - i >= 8 {
                    break;
                }
            }
            let (dx, dy) = NEIGHBORS[best];
            starts.push(((x as isize + dx) as usize, (y as isize + dy) as usize));
        }
    }
    starts
}

fn direction_from(origin: (usize, usize), path: &[(usize, usize)]) -> f64 {
    let end = path.last().copied().unwrap_or(origin);
    (end.1 as f64 - origin.1 as f64).atan2(end.0 as f64 - origin.0 as f64)
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let d = (a - b).rem_euclid(tau);
    d.min(tau - d)
}

fn minutia_angle(map: &SkeletonMap, x: usize, y: usize, kind: MinutiaKind, trace_len: usize) -> f64 {
    let origin = (x, y);
    let mut blocked = HashSet::new();
    blocked.insert(origin);
    let starts = branch_starts(map, x, y);
    for s in &starts {
        blocked.insert(*s);
    }
    let dirs: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let mut b = blocked.clone();
            b.remove(&s);
            let (path, _) = trace(map, s, &b, trace_len);
            direction_from(origin, &path)
        })
        .collect();
    match kind {
        // points from the ridge body out through the tip
        MinutiaKind::Ending => dirs.first().map(|d| d + std::f64::consts::PI).unwrap_or(0.0),
        // bisector of the two most similar branches (the fork arms)
        MinutiaKind::Bifurcation => {
            if dirs.len() < 2 {
                return dirs.first().copied().unwrap_or(0.0);
            }
            let mut best = (f64::MAX, 0, 1);
            for i in 0..dirs.len() {
                for j in i + 1..dirs.len() {
                    let d = circular_distance(dirs[i], dirs[j]);
                    if d < best.0 {
                        best = (d, i, j);
                    }
                }
            }
            let (a, b) = (dirs[best.1], dirs[best.2]);
            (a.sin() + b.sin()).atan2(a.cos() + b.cos())
        }
    }
}

/// Raw crossing-number classification: CN=1 endings, CN=3 bifurcations.
pub fn crossing_number_points(map: &SkeletonMap) -> Vec<(usize, usize, MinutiaKind)> {
    let (w, h) = map.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !map.get(x, y) {
                continue;
            }
            match crossing_number(map, x, y) {
                1 => out.push((x, y, MinutiaKind::Ending)),
                3 => out.push((x, y, MinutiaKind::Bifurcation)),
                _ => {}
            }
        }
    }
    out
}

/// Removes branches shorter than `min_len` that end in a ridge ending, and
/// isolated fragments shorter than `min_len`.
pub fn prune_spurs(map: &SkeletonMap, min_len: usize) -> SkeletonMap {
    let mut out = map.clone();
    if min_len == 0 {
        return out;
    }
    for _ in 0..2 {
        let endings: Vec<(usize, usize)> = crossing_number_points(&out)
            .into_iter()
            .filter(|p| p.2 == MinutiaKind::Ending)
            .map(|p| (p.0, p.1))
            .collect();
        let mut changed = false;
        for (x, y) in endings {
            if !out.get(x, y) {
                continue;
            }
            let (path, hit_junction) = trace(&out, (x, y), &HashSet::new(), min_len + 1);
            let short = path.len() < min_len + 1;
            if hit_junction && path.len() <= min_len {
                // keep the junction pixel itself
                for &(px, py) in &path[..path.len() - 1] {
                    out.set(px, py, false);
                }
                changed = true;
            } else if !hit_junction && short {
                for &(px, py) in &path {
                    out.set(px, py, false);
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    out
}

/// Foreground implied by a skeleton: blocks containing ridge pixels, with
/// enclosed background blocks filled.
pub fn skeleton_foreground(map: &SkeletonMap, block: usize) -> Vec<bool> {
    let (w, h) = map.dims();
    let (bw, bh) = (w.div_ceil(block), h.div_ceil(block));
    let mut blocks = vec![false; bw * bh];
    for y in 0..h {
        for x in 0..w {
            if map.get(x, y) {
                blocks[(y / block) * bw + x / block] = true;
            }
        }
    }
    let filled: Vec<bool> = (0..bw * bh)
        .map(|i| {
            let (bx, by) = (i % bw, i / bw);
            blocks[i]
                || (bx > 0
                    && by > 0
                    && bx + 1 < bw
                    && by + 1 < bh
                    && blocks[i - 1]
                    && blocks[i + 1]
                    && blocks[i - bw]
                    && blocks[i + bw])
        })
        .collect();
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            mask[y * w + x] = filled[(y / block) * bw + x / block];
        }
    }
    mask
}

fn near_boundary(mask: &[bool], w: usize, h: usize, x: usize, y: usize, margin: usize) -> bool {
    let m = margin as isize;
    for dy in -m..=m {
        for dx in -m..=m {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                return true;
            }
            if !mask[ny as usize * w + nx as usize] {
                return true;
            }
        }
    }
    false
}

pub fn extract_minutiae(skel: &SkeletonMap, cfg: &MinutiaConfig) -> MinutiaSet {
    let pruned = prune_spurs(skel, cfg.spur_length);
    let (w, h) = pruned.dims();
    let mask = (cfg.border_margin > 0).then(|| skeleton_foreground(&pruned, cfg.mask_block.max(1)));
    let items: Vec<Minutia> = crossing_number_points(&pruned)
        .into_iter()
        .filter(|&(x, y, _)| match &mask {
            Some(m) => !near_boundary(m, w, h, x, y, cfg.border_margin),
            None => true,
        })
        .map(|(x, y, kind)| {
            let angle = minutia_angle(&pruned, x, y, kind, cfg.trace_length);
            Minutia::new(x as f64, y as f64, angle, kind)
        })
        .collect();
    MinutiaSet::new(items, Some((w, h))).expect("pixel minutiae are distinct and in frame")
}

/// Binary map that is 1 exactly at the (rounded) minutia locations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinutiaMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl MinutiaMap {
    pub fn empty(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize) {
        self.data[y * self.width + x] = 1;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

pub fn minutia_map(mins: &MinutiaSet, dims: (usize, usize)) -> Result<MinutiaMap> {
    let (w, h) = dims;
    let mut map = MinutiaMap::empty(w, h);
    for m in mins.iter() {
        let (x, y) = (m.x.round(), m.y.round());
        if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
            return Err(Error::OutOfBounds {
                x: m.x,
                y: m.y,
                width: w,
                height: h,
            });
        }
        let (xi, yi) = (x as usize, y as usize);
        if map.get(xi, yi) {
            return Err(Error::InvalidParameter(format!(
                "two minutiae round to pixel ({xi}, {yi})"
            )));
        }
        map.set(xi, yi);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn segment() -> SkeletonMap {
        SkeletonMap::from_fn(40, 20, |x, y| y == 10 && (5..35).contains(&x))
    }

    fn y_junction() -> SkeletonMap {
        let mut m = SkeletonMap::empty(40, 40);
        for y in 20..35 {
            m.set(20, y, true); // stem going down
        }
        for k in 1..12 {
            m.set(20 - k, 20 - k, true); // left arm
            m.set(20 + k, 20 - k, true); // right arm
        }
        m
    }

    #[test]
    fn straight_segment_has_two_endings() {
        let set = extract_minutiae(&segment(), &MinutiaConfig::raw());
        assert_eq!(set.len(), 2);
        assert_eq!(set.count_kind(MinutiaKind::Ending), 2);
        let left = set.iter().find(|m| m.x == 5.0).unwrap();
        let right = set.iter().find(|m| m.x == 34.0).unwrap();
        // endings point outwards along the ridge
        assert!(circular_distance(left.angle, PI) < 1e-9);
        assert!(circular_distance(right.angle, 0.0) < 1e-9);
    }

    #[test]
    fn y_junction_has_one_bifurcation_three_endings() {
        let set = extract_minutiae(&y_junction(), &MinutiaConfig::raw());
        assert_eq!(set.count_kind(MinutiaKind::Bifurcation), 1);
        assert_eq!(set.count_kind(MinutiaKind::Ending), 3);
        let b = set.iter().find(|m| m.kind == MinutiaKind::Bifurcation).unwrap();
        assert_eq!((b.x, b.y), (20.0, 20.0));
        // arms open upwards (towards -y)
        assert!(circular_distance(b.angle, 1.5 * PI) < 1e-9, "{}", b.angle);
    }

    #[test]
    fn empty_skeleton_has_no_minutiae() {
        assert!(extract_minutiae(&SkeletonMap::empty(30, 30), &MinutiaConfig::default()).is_empty());
    }

    #[test]
    fn closed_loop_has_no_minutiae() {
        let m = SkeletonMap::from_fn(40, 40, |x, y| {
            let (dx, dy) = (x as isize - 20, y as isize - 20);
            (dx.abs() == 10 && dy.abs() <= 10) || (dy.abs() == 10 && dx.abs() <= 10)
        });
        assert!(extract_minutiae(&m, &MinutiaConfig::raw()).is_empty());
    }

    #[test]
    fn short_spur_is_pruned() {
        let mut m = SkeletonMap::from_fn(60, 40, |x, y| y == 20 && (5..55).contains(&x));
        for k in 1..4 {
            m.set(30, 20 - k, true);
        }
        let raw = extract_minutiae(&m, &MinutiaConfig::raw());
        assert_eq!(raw.count_kind(MinutiaKind::Bifurcation), 1);
        let cfg = MinutiaConfig {
            border_margin: 0,
            ..MinutiaConfig::default()
        };
        let pruned = extract_minutiae(&m, &cfg);
        assert_eq!(pruned.count_kind(MinutiaKind::Bifurcation), 0);
        assert_eq!(pruned.count_kind(MinutiaKind::Ending), 2);
    }

    #[test]
    fn border_minutiae_are_suppressed() {
        let set = extract_minutiae(&segment(), &MinutiaConfig::default());
        assert!(set.is_empty());
    }

    #[test]
    fn minutia_map_counts() {
        let set = MinutiaSet::new(
            vec![
                Minutia::new(1.0, 1.0, 0.0, MinutiaKind::Ending),
                Minutia::new(5.0, 2.0, 0.0, MinutiaKind::Ending),
                Minutia::new(9.0, 9.0, 1.0, MinutiaKind::Bifurcation),
            ],
            None,
        )
        .unwrap();
        let m = minutia_map(&set, (10, 10)).unwrap();
        assert_eq!(m.count(), 3);
        assert!(m.get(5, 2));
        assert_eq!(minutia_map(&MinutiaSet::empty(None), (4, 4)).unwrap().count(), 0);
        assert!(matches!(minutia_map(&set, (8, 8)), Err(Error::OutOfBounds { .. })));
    }
}
