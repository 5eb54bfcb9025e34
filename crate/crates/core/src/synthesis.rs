//! Latent-fingerprint synthesis and training-pair production.
//!
//! A rolled print is distorted, speckled and fused with a background crop to
//! give a latent; its TV texture is the network input. The ground truth comes
//! from the undistorted print: TV texture, Gabor enhancement, thinning, a
//! FOMFE fit on the skeleton orientation, and the minutia weight map.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::distortion::{distort_image, sample_distortion, DistortionParamRanges};
use crate::error::{Error, Result};
use crate::image::{GrayImage, Grid, OrientationField, SkeletonMap};
use crate::io::{save_gray_image, save_skeleton, write_grid};
use crate::minutia::{write_minutiae, MinutiaSet};
use crate::orientation::{
    estimate_gray_orientation, estimate_skeleton_orientation, regularize, FomfeConfig,
    RawOrientationConfig,
};
use crate::rng::RandomSource;
use crate::skeleton::{
    enhance_gabor, extract_minutiae, foreground_mask, minutia_map, skeletonize, GaborConfig,
    MinutiaConfig,
};
use crate::tvdecomp::{decompose, TextureEncoding, TvConfig};
use crate::weightmap::{build_weight_map, WeightMapParams};

pub const MAX_SPECKLE_VARIANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeckleParams {
    pub variance: f64,
}

impl SpeckleParams {
    pub fn new(variance: f64) -> Result<Self> {
        if !(0.0..MAX_SPECKLE_VARIANCE).contains(&variance) {
            return Err(Error::InvalidParameter(format!(
                "speckle variance must lie in [0, {MAX_SPECKLE_VARIANCE}), got {variance}"
            )));
        }
        Ok(Self { variance })
    }

    /// Half-width of the zero-mean uniform noise with this variance.
    pub fn half_width(&self) -> f64 {
        (3.0 * self.variance).sqrt()
    }

    pub fn sample_noise(&self, rng: &mut RandomSource) -> f64 {
        let a = self.half_width();
        rng.uniform(-a, a)
    }
}

/// `b'' = b'(1 + n)`, clamped to `[0, 1]`.
pub fn add_speckle(img: &GrayImage, params: &SpeckleParams, rng: &mut RandomSource) -> GrayImage {
    let (w, h) = img.dims();
    GrayImage::from_fn(w, h, |x, y| {
        let v = img.get(x, y);
        v * (1.0 + params.sample_noise(rng))
    })
}

#[derive(Debug, Clone)]
pub struct FusionParams {
    pub lambda: f64,
    pub background: GrayImage,
}

impl FusionParams {
    pub fn new(lambda: f64, background: GrayImage) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!(
                "fusion weight must lie in [0, 1], got {lambda}"
            )));
        }
        Ok(Self { lambda, background })
    }
}

/// `c = (1 − λ) b'' + λ d`.
pub fn fuse_background(b2: &GrayImage, params: &FusionParams) -> Result<GrayImage> {
    if b2.dims() != params.background.dims() {
        return Err(Error::DimensionMismatch {
            expected: b2.dims(),
            actual: params.background.dims(),
        });
    }
    let l = params.lambda;
    let d = &params.background;
    let (w, h) = b2.dims();
    Ok(GrayImage::from_fn(w, h, |x, y| {
        (1.0 - l) * b2.get(x, y) + l * d.get(x, y)
    }))
}

/// Sampling intervals for the three noise stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseRanges {
    pub distortion: DistortionParamRanges,
    pub speckle_variance: (f64, f64),
    pub fusion_lambda: (f64, f64),
}

impl Default for NoiseRanges {
    fn default() -> Self {
        Self {
            distortion: DistortionParamRanges::default(),
            speckle_variance: (0.0, MAX_SPECKLE_VARIANCE),
            fusion_lambda: (0.2, 0.8),
        }
    }
}

impl NoiseRanges {
    /// Every stage reduces to the identity.
    pub fn none() -> Self {
        Self {
            distortion: DistortionParamRanges::none(),
            speckle_variance: (0.0, 0.0),
            fusion_lambda: (0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.distortion.validate()?;
        let (v0, v1) = self.speckle_variance;
        if !(0.0 <= v0 && v0 <= v1 && v1 <= MAX_SPECKLE_VARIANCE) {
            return Err(Error::InvalidParameter(format!(
                "speckle variance range must lie within [0, {MAX_SPECKLE_VARIANCE}]"
            )));
        }
        let (l0, l1) = self.fusion_lambda;
        if !(0.0 <= l0 && l0 <= l1 && l1 <= 1.0) {
            return Err(Error::InvalidParameter(
                "fusion weight range must lie within [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Crop of `bg` at a random offset, wrapping around when `bg` is smaller.
pub fn random_crop(bg: &GrayImage, dims: (usize, usize), rng: &mut RandomSource) -> GrayImage {
    let (bw, bh) = bg.dims();
    let ox = rng.index(bw.saturating_sub(dims.0) + 1);
    let oy = rng.index(bh.saturating_sub(dims.1) + 1);
    GrayImage::from_fn(dims.0, dims.1, |x, y| bg.get((ox + x) % bw, (oy + y) % bh))
}

/// Distortion → speckle → background fusion with independently drawn parameters.
pub fn synthesize_latent(
    rolled: &GrayImage,
    ranges: &NoiseRanges,
    backgrounds: &[GrayImage],
    rng: &mut RandomSource,
) -> Result<GrayImage> {
    if backgrounds.is_empty() {
        return Err(Error::InsufficientData("no background crops available".into()));
    }
    ranges.validate()?;
    let dims = rolled.dims();
    let dist = sample_distortion(&ranges.distortion, rng, dims);
    let speckle = SpeckleParams::new(rng.uniform(ranges.speckle_variance.0, ranges.speckle_variance.1))?;
    let lambda = rng.uniform_inclusive(ranges.fusion_lambda.0, ranges.fusion_lambda.1);
    let bg = random_crop(&backgrounds[rng.index(backgrounds.len())], dims, rng);
    let b1 = distort_image(rolled, &dist);
    let b2 = add_speckle(&b1, &speckle, rng);
    fuse_background(&b2, &FusionParams::new(lambda, bg)?)
}

/// Accepts or rejects rolled prints before synthesis.
pub trait QualityFilter: Sync {
    fn accept(&self, rolled: &GrayImage) -> bool;
}

/// Mean structure-tensor coherence over the valid foreground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceFilter {
    pub threshold: f64,
    pub orientation: RawOrientationConfig,
}

impl Default for CoherenceFilter {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            orientation: RawOrientationConfig {
                min_energy: 1e-4,
                ..RawOrientationConfig::default()
            },
        }
    }
}

impl QualityFilter for CoherenceFilter {
    fn accept(&self, rolled: &GrayImage) -> bool {
        estimate_gray_orientation(rolled, &self.orientation)
            .map(|r| r.mean_valid_coherence() >= self.threshold)
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub noise: NoiseRanges,
    pub tv: TvConfig,
    pub encoding: TextureEncoding,
    pub gabor: GaborConfig,
    pub orientation: RawOrientationConfig,
    pub fomfe: FomfeConfig,
    pub minutiae: MinutiaConfig,
    pub weights: WeightMapParams,
    /// Latents synthesised per rolled print.
    pub latents_per_print: usize,
    /// Block size and variance threshold of the gray foreground mask.
    pub mask_block: usize,
    pub mask_variance: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            noise: NoiseRanges::default(),
            tv: TvConfig::default(),
            encoding: TextureEncoding::default(),
            gabor: GaborConfig::default(),
            orientation: RawOrientationConfig::default(),
            fomfe: FomfeConfig::default(),
            minutiae: MinutiaConfig::default(),
            weights: WeightMapParams::default(),
            latents_per_print: 10,
            mask_block: 16,
            mask_variance: 1e-3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.tv.validate()?;
        self.gabor.validate()?;
        self.weights.validate()?;
        if self.mask_block == 0 {
            return Err(Error::InvalidParameter("mask block must be > 0".into()));
        }
        Ok(())
    }
}

/// Everything derived from one rolled print.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Encoded TV texture of the rolled print.
    pub rolled_texture: GrayImage,
    pub enhanced: GrayImage,
    pub skeleton: SkeletonMap,
    pub orientation: OrientationField,
    pub minutiae: MinutiaSet,
    pub weight_map: Grid,
}

#[derive(Debug, Clone)]
pub struct TrainingPair {
    /// Encoded TV texture of the synthesised latent (`l`).
    pub latent_texture: GrayImage,
    pub skeleton_gt: SkeletonMap,
    pub orientation_gt: OrientationField,
    pub weight_map: Grid,
}

/// TV texture of an image, encoded into `[0, 1]`.
pub fn texture_of(img: &GrayImage, tv: &TvConfig, enc: &TextureEncoding) -> Result<GrayImage> {
    Ok(decompose(img, tv)?.encoded_texture(enc))
}

pub fn build_ground_truth(rolled: &GrayImage, cfg: &SynthConfig) -> Result<GroundTruth> {
    let (w, h) = rolled.dims();
    let texture = texture_of(rolled, &cfg.tv, &cfg.encoding)?;
    let fg = foreground_mask(rolled, cfg.mask_block, cfg.mask_variance);
    // smooth orientation for the filter bank, restricted to the print area
    let raw = estimate_gray_orientation(&texture, &cfg.orientation)?;
    let smooth = regularize(&raw.field, &cfg.fomfe)?;
    let guide = OrientationField::new(
        w,
        h,
        smooth.angles().to_vec(),
        fg.clone(),
    )?;
    let enhanced = enhance_gabor(&texture, &guide, &cfg.gabor)?;
    let skeleton = skeletonize(&enhanced);
    let skel_orient = estimate_skeleton_orientation(&skeleton, &cfg.orientation)?;
    let orientation = regularize(&skel_orient.field, &cfg.fomfe)?;
    let minutiae = extract_minutiae(&skeleton, &cfg.minutiae);
    let weight_map = build_weight_map(&minutia_map(&minutiae, (w, h))?, &cfg.weights)?;
    Ok(GroundTruth {
        rolled_texture: texture,
        enhanced,
        skeleton,
        orientation,
        minutiae,
        weight_map,
    })
}

/// One latent and the shared ground truth of its rolled print.
pub fn build_training_pair(
    rolled: &GrayImage,
    gt: &GroundTruth,
    backgrounds: &[GrayImage],
    rng: &mut RandomSource,
    cfg: &SynthConfig,
) -> Result<(GrayImage, TrainingPair)> {
    let latent = synthesize_latent(rolled, &cfg.noise, backgrounds, rng)?;
    let latent_texture = texture_of(&latent, &cfg.tv, &cfg.encoding)?;
    Ok((
        latent,
        TrainingPair {
            latent_texture,
            skeleton_gt: gt.skeleton.clone(),
            orientation_gt: gt.orientation.clone(),
            weight_map: gt.weight_map.clone(),
        },
    ))
}

/// Ground truth plus the synthesised latents of one rolled print.
#[derive(Debug, Clone)]
pub struct PrintSamples {
    pub rolled: GrayImage,
    pub ground_truth: GroundTruth,
    /// Raw synthesised latents `c`.
    pub latents: Vec<GrayImage>,
    /// Encoded latent textures `l`, aligned with `latents`.
    pub latent_textures: Vec<GrayImage>,
}

impl PrintSamples {
    pub fn pairs(&self) -> impl Iterator<Item = TrainingPair> + '_ {
        self.latent_textures.iter().map(|l| TrainingPair {
            latent_texture: l.clone(),
            skeleton_gt: self.ground_truth.skeleton.clone(),
            orientation_gt: self.ground_truth.orientation.clone(),
            weight_map: self.ground_truth.weight_map.clone(),
        })
    }
}

/// Processes every rolled print on its own random stream, so results do not
/// depend on scheduling.
pub fn build_training_set(
    rolled: &[GrayImage],
    backgrounds: &[GrayImage],
    seed: u64,
    cfg: &SynthConfig,
) -> Result<Vec<PrintSamples>> {
    cfg.validate()?;
    let root = RandomSource::new(seed);
    rolled
        .par_iter()
        .enumerate()
        .map(|(i, print)| {
            let mut rng = root.derive(i as u64);
            let gt = build_ground_truth(print, cfg)?;
            let mut latents = Vec::with_capacity(cfg.latents_per_print);
            let mut textures = Vec::with_capacity(cfg.latents_per_print);
            for _ in 0..cfg.latents_per_print {
                let (c, pair) = build_training_pair(print, &gt, backgrounds, &mut rng, cfg)?;
                latents.push(c);
                textures.push(pair.latent_texture);
            }
            Ok(PrintSamples {
                rolled: print.clone(),
                ground_truth: gt,
                latents,
                latent_textures: textures,
            })
        })
        .collect()
}

/// Procedural rolled print: a smooth ridge phase field with spiral phase
/// singularities (each one a minutia), inside an elliptical finger mask.
pub fn generate_print(dims: (usize, usize), rng: &mut RandomSource) -> GrayImage {
    let (w, h) = dims;
    let (wf, hf) = (w as f64, h as f64);
    let period = rng.uniform(8.0, 11.0);
    // ridges curve around a centre placed below the frame
    let cx = wf * rng.uniform(0.3, 0.7);
    let cy = hf * rng.uniform(1.1, 1.8);
    let tilt = rng.uniform(-0.4, 0.4);
    let n_sing = 3 + rng.index(6);
    let singular: Vec<(f64, f64, f64)> = (0..n_sing)
        .map(|_| {
            let sign = if rng.index(2) == 0 { 1.0 } else { -1.0 };
            (wf * rng.uniform(0.2, 0.8), hf * rng.uniform(0.2, 0.8), sign)
        })
        .collect();
    let (mx, my) = (wf * rng.uniform(0.45, 0.55), hf * rng.uniform(0.45, 0.55));
    let (ax, ay) = (wf * rng.uniform(0.38, 0.48), hf * rng.uniform(0.42, 0.5));
    let contrast = rng.uniform(0.75, 0.95);
    GrayImage::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let (dx, dy) = (xf - cx, yf - cy);
        let r = (dx * dx + dy * dy).sqrt() + tilt * dx;
        let mut phase = TAU * r / period;
        for &(sx, sy, s) in &singular {
            phase += s * (yf - sy).atan2(xf - sx);
        }
        let ridge = 0.5 + 0.5 * contrast * phase.cos();
        let q = ((xf - mx) / ax).powi(2) + ((yf - my) / ay).powi(2);
        // soft edge over the outer tenth of the ellipse
        let inside = ((1.0 - q) / 0.2).clamp(0.0, 1.0);
        1.0 - inside * (1.0 - ridge)
    })
}

/// Procedural latent background: smooth blotches plus line clutter.
pub fn generate_background(dims: (usize, usize), rng: &mut RandomSource) -> GrayImage {
    let (w, h) = dims;
    let (wf, hf) = (w as f64, h as f64);
    let base = rng.uniform(0.45, 0.8);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..6 + rng.index(6))
        .map(|_| {
            (
                wf * rng.uniform(0.0, 1.0),
                hf * rng.uniform(0.0, 1.0),
                rng.uniform(0.05, 0.3) * wf.max(hf),
                rng.uniform(-0.3, 0.3),
            )
        })
        .collect();
    let lines: Vec<(f64, f64, f64, f64, f64)> = (0..2 + rng.index(6))
        .map(|_| {
            let a = rng.uniform(0.0, PI);
            (
                a.cos(),
                a.sin(),
                wf * rng.uniform(0.0, 1.0) * a.sin().abs() + hf * rng.uniform(0.0, 1.0) * a.cos().abs(),
                rng.uniform(0.8, 3.0),
                rng.uniform(-0.35, 0.2),
            )
        })
        .collect();
    let grain: Vec<f64> = (0..w * h).map(|_| 0.04 * rng.normal()).collect();
    GrayImage::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = base;
        for &(bx, by, s, a) in &blobs {
            let d2 = (xf - bx).powi(2) + (yf - by).powi(2);
            v += a * (-d2 / (2.0 * s * s)).exp();
        }
        for &(c, s, off, width, a) in &lines {
            // distance from the line {p : p·n = off} with normal n = (-s, c)
            let d = (-s * xf + c * yf - off).abs();
            if d < width {
                v += a * (1.0 - d / width);
            }
        }
        v + grain[y * w + x]
    })
}

/// Latents `i` of print `p` are named `{p:04}_{i:02}`.
pub fn latent_name(print: usize, index: usize) -> String {
    format!("{print:04}_{index:02}")
}

fn create_dirs(root: &Path, names: &[&str]) -> Result<()> {
    for n in names {
        let d = root.join(n);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    Ok(())
}

pub const MANIFEST_HEADER: &str =
    "latent\traw_latent\tskeleton\torientation\tweights\tgray\tminutiae\ttexture_scale\ttexture_offset";

/// Writes the dataset layout and `manifest.tsv`. The gray ground truth used by
/// the gray-target ablation is the inverted rolled texture (ridges bright).
pub fn write_dataset(root: &Path, samples: &[PrintSamples], cfg: &SynthConfig) -> Result<()> {
    create_dirs(
        root,
        &["latents", "raw_latents", "skeletons", "orients", "weights", "grays", "minutiae", "rolled"],
    )?;
    let mut manifest = String::from("# ppi 500\n");
    manifest.push_str(MANIFEST_HEADER);
    manifest.push('\n');
    for (p, s) in samples.iter().enumerate() {
        let id = format!("{p:04}");
        let gt = &s.ground_truth;
        save_gray_image(&s.rolled, root.join("rolled").join(format!("{id}.png")))?;
        save_skeleton(&gt.skeleton, root.join("skeletons").join(format!("{id}.png")))?;
        write_grid(&gt.orientation.to_grid(), root.join("orients").join(format!("{id}.grid")))?;
        write_grid(&gt.weight_map, root.join("weights").join(format!("{id}.grid")))?;
        let gray = gt.rolled_texture.as_grid().map(|v| 1.0 - v).to_image_clamped();
        save_gray_image(&gray, root.join("grays").join(format!("{id}.png")))?;
        write_minutiae(&gt.minutiae, root.join("minutiae").join(format!("{id}.min")))?;
        for (i, (c, l)) in s.latents.iter().zip(&s.latent_textures).enumerate() {
            let name = latent_name(p, i);
            save_gray_image(l, root.join("latents").join(format!("{name}.png")))?;
            save_gray_image(c, root.join("raw_latents").join(format!("{name}.png")))?;
            manifest.push_str(&format!(
                "latents/{name}.png\traw_latents/{name}.png\tskeletons/{id}.png\torients/{id}.grid\tweights/{id}.grid\tgrays/{id}.png\tminutiae/{id}.min\t{}\t{}\n",
                cfg.encoding.scale, cfg.encoding.offset
            ));
        }
    }
    let path = root.join("manifest.tsv");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}
