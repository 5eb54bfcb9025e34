//! Ground-truth production: Gabor enhancement, binarisation, thinning,
//! crossing-number minutiae and the minutia map.

mod gabor;
mod minutiae;
mod thinning;

pub use gabor::{enhance_gabor, signature_period, FrequencyMode, GaborConfig};
pub use minutiae::{
    crossing_number, crossing_number_points, extract_minutiae, minutia_map, prune_spurs,
    skeleton_foreground, MinutiaConfig, MinutiaMap,
};
pub use thinning::{binarize_blockwise, otsu_threshold, transitions, zhang_suen, NEIGHBORS};

use crate::image::{GrayImage, SkeletonMap};

/// Block size for the adaptive Otsu threshold.
pub const BINARIZE_BLOCK: usize = 32;

/// Per-block Otsu binarisation followed by Zhang-Suen thinning.
pub fn skeletonize(enh: &GrayImage) -> SkeletonMap {
    zhang_suen(binarize_blockwise(enh, BINARIZE_BLOCK))
}

/// Blocks whose intensity variance exceeds `min_variance` are foreground.
pub fn foreground_mask(img: &GrayImage, block: usize, min_variance: f64) -> Vec<bool> {
    let (w, h) = img.dims();
    let mut mask = vec![false; w * h];
    for by in (0..h).step_by(block) {
        for bx in (0..w).step_by(block) {
            let (x1, y1) = ((bx + block).min(w), (by + block).min(h));
            let n = ((x1 - bx) * (y1 - by)) as f64;
            let mut s = 0.0;
            let mut s2 = 0.0;
            for y in by..y1 {
                for x in bx..x1 {
                    let v = img.get(x, y);
                    s += v;
                    s2 += v * v;
                }
            }
            let var = s2 / n - (s / n).powi(2);
            if var > min_variance {
                for y in by..y1 {
                    mask[y * w + bx..y * w + x1].fill(true);
                }
            }
        }
    }
    mask
}
