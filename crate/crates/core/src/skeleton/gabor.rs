//! Contextual Gabor enhancement tuned to local ridge orientation and frequency.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::{GrayImage, Grid, OrientationField};

/// Number of orientation bins in the kernel bank (a multiple of 4 keeps
/// quarter-turn rotations exact).
const ANGLE_BINS: usize = 32;
const PERIOD_QUANTUM: f64 = 0.25;
const MIN_PERIOD: f64 = 3.0;
const MAX_PERIOD: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyMode {
    Estimated,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborConfig {
    /// Block size for frequency estimation.
    pub block_size: usize,
    pub kernel_radius: usize,
    /// Envelope width across the ridges.
    pub sigma_x: f64,
    /// Envelope width along the ridges.
    pub sigma_y: f64,
    pub frequency_mode: FrequencyMode,
    /// Cycles per pixel; also the fallback when estimation fails.
    pub fixed_frequency: f64,
}

impl Default for GaborConfig {
    fn default() -> Self {
        Self {
            block_size: 32,
            kernel_radius: 10,
            sigma_x: 4.0,
            sigma_y: 4.0,
            frequency_mode: FrequencyMode::Estimated,
            fixed_frequency: 1.0 / 9.0,
        }
    }
}

impl GaborConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_size < 8 {
            return Err(Error::InvalidParameter("Gabor block size must be >= 8".into()));
        }
        if !(self.fixed_frequency > 0.0 && self.fixed_frequency < 0.5) {
            return Err(Error::InvalidParameter(
                "Gabor frequency must lie in (0, 0.5)".into(),
            ));
        }
        if self.kernel_radius == 0 || !(self.sigma_x > 0.0 && self.sigma_y > 0.0) {
            return Err(Error::InvalidParameter(
                "Gabor kernel radius and sigmas must be positive".into(),
            ));
        }
        Ok(())
    }
}

struct Kernel {
    radius: isize,
    taps: Vec<f64>,
}

/// Even-symmetric, zero-mean Gabor kernel with unit gain at its tuned frequency.
fn gabor_kernel(theta: f64, period: f64, cfg: &GaborConfig) -> Kernel {
    let r = cfg.kernel_radius as isize;
    let n = (2 * r + 1) as usize;
    let (s, c) = theta.sin_cos();
    let mut taps = Vec::with_capacity(n * n);
    let mut carrier = Vec::with_capacity(n * n);
    for v in -r..=r {
        for u in -r..=r {
            let (x, y) = (u as f64, v as f64);
            let across = -x * s + y * c;
            let along = x * c + y * s;
            let env = (-0.5 * (across * across / (cfg.sigma_x * cfg.sigma_x)
                + along * along / (cfg.sigma_y * cfg.sigma_y)))
                .exp();
            let wave = (2.0 * PI * across / period).cos();
            taps.push(env * wave);
            carrier.push(wave);
        }
    }
    let mean = taps.iter().sum::<f64>() / taps.len() as f64;
    taps.iter_mut().for_each(|t| *t -= mean);
    let gain: f64 = taps.iter().zip(&carrier).map(|(t, w)| t * w).sum();
    taps.iter_mut().for_each(|t| *t /= gain);
    Kernel { radius: r, taps }
}

fn angle_bin(theta: f64) -> usize {
    ((theta / PI * ANGLE_BINS as f64).round() as usize) % ANGLE_BINS
}

fn quantize_period(period: f64) -> f64 {
    (period / PERIOD_QUANTUM).round() * PERIOD_QUANTUM
}

/// Ridge period from the projected gray profile (x-signature) across the ridges.
///
/// Returns `None` when fewer than two peaks are found or the period is implausible.
pub fn signature_period(img: &Grid, cx: f64, cy: f64, theta: f64, length: usize, width: usize) -> Option<f64> {
    let (w, h) = img.dims();
    let (s, c) = theta.sin_cos();
    let sample = |x: f64, y: f64| {
        let xc = x.clamp(0.0, (w - 1) as f64);
        let yc = y.clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (xc.floor() as usize, yc.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (xc - x0 as f64, yc - y0 as f64);
        let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
        let bot = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    };
    let half_len = (length as f64 - 1.0) / 2.0;
    let half_wid = (width as f64 - 1.0) / 2.0;
    let signature: Vec<f64> = (0..length)
        .map(|k| {
            let d = k as f64 - half_len;
            (0..width)
                .map(|t| {
                    let a = t as f64 - half_wid;
                    sample(cx + a * c - d * s, cy + a * s + d * c)
                })
                .sum::<f64>()
                / width as f64
        })
        .collect();
    let mean = signature.iter().sum::<f64>() / length as f64;
    let peaks: Vec<usize> = (1..length - 1)
        .filter(|&k| {
            signature[k] > mean && signature[k] > signature[k - 1] && signature[k] >= signature[k + 1]
        })
        .collect();
    if peaks.len() < 2 {
        return None;
    }
    let period = (peaks[peaks.len() - 1] - peaks[0]) as f64 / (peaks.len() - 1) as f64;
    (MIN_PERIOD..=MAX_PERIOD).contains(&period).then_some(period)
}

/// Per-block ridge period map (block-constant, `None` where estimation failed).
fn period_map(img: &Grid, orient: &OrientationField, cfg: &GaborConfig) -> Vec<f64> {
    let (w, h) = img.dims();
    let fallback = 1.0 / cfg.fixed_frequency;
    let mut out = vec![fallback; w * h];
    if cfg.frequency_mode == FrequencyMode::Fixed {
        return out;
    }
    let b = cfg.block_size;
    for by in (0..h).step_by(b) {
        for bx in (0..w).step_by(b) {
            let (x1, y1) = ((bx + b).min(w), (by + b).min(h));
            let cx = (bx + x1 - 1) as f64 / 2.0;
            let cy = (by + y1 - 1) as f64 / 2.0;
            let (ix, iy) = (cx.round() as usize, cy.round() as usize);
            let period = if orient.is_valid(ix.min(w - 1), iy.min(h - 1)) {
                // circular mean of doubled angles over the block
                let (mut sc, mut ss) = (0.0, 0.0);
                for y in by..y1 {
                    for x in bx..x1 {
                        if orient.is_valid(x, y) {
                            let (s2, c2) = (2.0 * orient.angle(x, y)).sin_cos();
                            sc += c2;
                            ss += s2;
                        }
                    }
                }
                let theta = 0.5 * ss.atan2(sc);
                signature_period(img, cx, cy, theta, b, b / 2).unwrap_or(fallback)
            } else {
                fallback
            };
            for y in by..y1 {
                for x in bx..x1 {
                    out[y * w + x] = period;
                }
            }
        }
    }
    out
}

/// Gabor-filters every valid pixel with a kernel tuned to its orientation and
/// block frequency; the response is rescaled so a pure ridge pattern spans
/// `[0, 1]`, dark ridges stay dark, and invalid pixels become valley white.
pub fn enhance_gabor(img: &GrayImage, orient: &OrientationField, cfg: &GaborConfig) -> Result<GrayImage> {
    cfg.validate()?;
    if img.dims() != orient.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            actual: orient.dims(),
        });
    }
    let g = img.as_grid();
    let (w, h) = g.dims();
    let periods = period_map(g, orient, cfg);
    let mut bank: HashMap<(usize, u64), Kernel> = HashMap::new();
    let mut response = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !orient.is_valid(x, y) {
                continue;
            }
            let bin = angle_bin(orient.angle(x, y));
            let period = quantize_period(periods[i]);
            let kernel = bank.entry((bin, period.to_bits())).or_insert_with(|| {
                gabor_kernel(bin as f64 * PI / ANGLE_BINS as f64, period, cfg)
            });
            let r = kernel.radius;
            let mut acc = 0.0;
            let mut k = 0;
            for v in -r..=r {
                let yy = (y as isize + v).clamp(0, h as isize - 1) as usize;
                for u in -r..=r {
                    let xx = (x as isize + u).clamp(0, w as isize - 1) as usize;
                    acc += kernel.taps[k] * g.get(xx, yy);
                    k += 1;
                }
            }
            response[i] = acc;
        }
    }
    let valid: Vec<f64> = response
        .iter()
        .zip(orient.mask())
        .filter(|(_, &m)| m)
        .map(|(r, _)| *r)
        .collect();
    let rms = if valid.is_empty() {
        0.0
    } else {
        (valid.iter().map(|r| r * r).sum::<f64>() / valid.len() as f64).sqrt()
    };
    // a unit-gain sinusoid of amplitude A has rms A/√2; map ±A onto ±0.5
    let gain = if rms > 1e-12 { 0.5 / (2f64.sqrt() * rms) } else { 0.0 };
    Ok(GrayImage::from_fn(w, h, |x, y| {
        if orient.is_valid(x, y) {
            0.5 + gain * response[y * w + x]
        } else {
            1.0
        }
    }))
}
