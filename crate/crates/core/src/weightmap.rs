//! Gaussian minutia weight map for the reconstruction loss.
//!
//! `w'` is the kernel-normalised correlation of a Gaussian window with the
//! binary minutia map (zero-padded); pixels that no window reaches take the
//! floor value `w₀ = w_g(r, r) / Σ w_g`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::Grid;
use crate::skeleton::MinutiaMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMapParams {
    pub sigma: f64,
    /// Half window size in pixels.
    pub r: usize,
}

impl Default for WeightMapParams {
    fn default() -> Self {
        Self { sigma: 8.0, r: 17 }
    }
}

impl WeightMapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || self.r < 1 {
            return Err(Error::InvalidParameter(
                "weight map needs sigma > 0 and r >= 1".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn kernel_value(&self, u: isize, v: isize) -> f64 {
        let s2 = self.sigma * self.sigma;
        (-((u * u + v * v) as f64) / (2.0 * s2)).exp() / (2.0 * PI * s2)
    }

    pub fn kernel_sum(&self) -> f64 {
        gaussian_kernel(self).data().iter().sum()
    }

    /// Floor value assigned where no minutia window reaches.
    pub fn floor(&self) -> f64 {
        self.kernel_value(self.r as isize, self.r as isize) / self.kernel_sum()
    }
}

/// Unnormalised `(2r+1)²` Gaussian window, indexed `(u + r, v + r)`.
pub fn gaussian_kernel(params: &WeightMapParams) -> Grid {
    let r = params.r as isize;
    let n = 2 * params.r + 1;
    Grid::from_fn(n, n, |x, y| params.kernel_value(x as isize - r, y as isize - r))
}

/// `w'` before the floor substitution, via separable correlation.
pub fn normalized_correlation(map: &MinutiaMap, params: &WeightMapParams) -> Result<Grid> {
    params.validate()?;
    let (w, h) = map.dims();
    let r = params.r as isize;
    let s2 = params.sigma * params.sigma;
    let taps: Vec<f64> = (-r..=r)
        .map(|u| (-((u * u) as f64) / (2.0 * s2)).exp())
        .collect();
    let mut rows = Grid::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, u) in (-r..=r).enumerate() {
                let xs = x as isize + u;
                if xs >= 0 && (xs as usize) < w && map.get(xs as usize, y) {
                    acc += taps[k];
                }
            }
            rows.set(x, y, acc);
        }
    }
    let norm = 1.0 / (2.0 * PI * s2) / params.kernel_sum();
    Ok(Grid::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (k, v) in (-r..=r).enumerate() {
            let ys = y as isize + v;
            if ys >= 0 && (ys as usize) < h {
                acc += taps[k] * rows.get(x, ys as usize);
            }
        }
        acc * norm
    }))
}

/// Final weight map: `w'` where non-zero, the floor `w₀` elsewhere.
pub fn build_weight_map(map: &MinutiaMap, params: &WeightMapParams) -> Result<Grid> {
    let floor = params.floor();
    Ok(normalized_correlation(map, params)?.map(|v| if v != 0.0 { v } else { floor }))
}
