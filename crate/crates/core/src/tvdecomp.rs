//! Cartoon/texture split by total-variation (ROF) denoising.
//!
//! The cartoon minimises `TV(u) + (λ/2)‖u − f‖²`, solved with Chambolle's dual
//! projection; the texture is the residual `f − u`.

use crate::error::{Error, Result};
use crate::image::{GrayImage, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvConfig {
    /// λ in the ROF objective; larger keeps the cartoon closer to the input.
    pub fidelity_weight: f64,
    pub max_iters: usize,
    /// Stop once the dual variable moves less than this (max-norm) in one step.
    pub tolerance: f64,
    /// Dual step size; Chambolle's bound is 1/8.
    pub step: f64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            fidelity_weight: 0.15,
            max_iters: 100,
            tolerance: 1e-4,
            step: 0.125,
        }
    }
}

impl TvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fidelity_weight > 0.0 && self.tolerance > 0.0 && self.max_iters > 0) {
            return Err(Error::InvalidParameter(
                "TV fidelity weight, tolerance and iteration cap must be positive".into(),
            ));
        }
        if !(self.step > 0.0 && self.step <= 0.125) {
            return Err(Error::InvalidParameter(
                "TV dual step must lie in (0, 1/8]".into(),
            ));
        }
        Ok(())
    }
}

/// Affine map taking the signed texture into `[0, 1]` for the network input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureEncoding {
    pub scale: f64,
    pub offset: f64,
}

impl Default for TextureEncoding {
    fn default() -> Self {
        Self {
            scale: 1.0,
            offset: 0.5,
        }
    }
}

impl TextureEncoding {
    pub fn encode(&self, texture: &Grid) -> GrayImage {
        texture
            .map(|t| self.offset + self.scale * t)
            .to_image_clamped()
    }

    pub fn decode(&self, img: &GrayImage) -> Grid {
        img.as_grid().map(|v| (v - self.offset) / self.scale)
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    /// ROF minimiser, clamped to `[0, 1]`.
    pub cartoon: GrayImage,
    /// Signed residual `input − cartoon` (before clamping the cartoon).
    pub texture: Grid,
    /// ROF objective of the cartoon after each iteration (index 0 = initial iterate).
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Decomposition {
    pub fn encoded_texture(&self, enc: &TextureEncoding) -> GrayImage {
        enc.encode(&self.texture)
    }
}

/// ROF objective `Σ|∇u| + (λ/2)Σ(u − f)²` with forward differences.
pub fn rof_objective(u: &Grid, f: &Grid, lambda: f64) -> f64 {
    let (w, h) = u.dims();
    let mut tv = 0.0;
    let mut fid = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = u.get(x, y);
            let gx = if x + 1 < w { u.get(x + 1, y) - v } else { 0.0 };
            let gy = if y + 1 < h { u.get(x, y + 1) - v } else { 0.0 };
            tv += (gx * gx + gy * gy).sqrt();
            let d = v - f.get(x, y);
            fid += d * d;
        }
    }
    tv + 0.5 * lambda * fid
}

pub fn decompose(img: &GrayImage, cfg: &TvConfig) -> Result<Decomposition> {
    cfg.validate()?;
    let f = img.as_grid();
    let (w, h) = f.dims();
    let n = w * h;
    let lambda = cfg.fidelity_weight;
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut div = vec![0.0; n];
    let mut cartoon = f.clone();
    let mut objective = vec![rof_objective(&cartoon, f, lambda)];
    let mut converged = false;
    let mut iterations = 0;

    let fdata = f.data();
    while iterations < cfg.max_iters {
        iterations += 1;
        divergence(&px, &py, w, h, &mut div);
        // term = div p − λ f, whose gradient drives the dual update
        let term: Vec<f64> = div.iter().zip(fdata).map(|(d, fv)| d - lambda * fv).collect();
        let mut max_change: f64 = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let gx = if x + 1 < w { term[i + 1] - term[i] } else { 0.0 };
                let gy = if y + 1 < h { term[i + w] - term[i] } else { 0.0 };
                let norm = (gx * gx + gy * gy).sqrt();
                let denom = 1.0 + cfg.step * norm;
                let nx = (px[i] + cfg.step * gx) / denom;
                let ny = (py[i] + cfg.step * gy) / denom;
                max_change = max_change.max((nx - px[i]).abs()).max((ny - py[i]).abs());
                px[i] = nx;
                py[i] = ny;
            }
        }
        divergence(&px, &py, w, h, &mut div);
        for (i, c) in cartoon.data_mut().iter_mut().enumerate() {
            *c = fdata[i] - div[i] / lambda;
        }
        objective.push(rof_objective(&cartoon, f, lambda));
        if max_change < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let texture = Grid::new(
        w,
        h,
        fdata
            .iter()
            .zip(cartoon.data())
            .map(|(fv, c)| fv - c)
            .collect(),
    )?;
    Ok(Decomposition {
        cartoon: cartoon.to_image_clamped(),
        texture,
        objective,
        iterations,
        converged,
    })
}

/// Discrete divergence, the negative adjoint of the forward-difference gradient.
fn divergence(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let dx = if w == 1 {
                0.0
            } else if x == 0 {
                px[i]
            } else if x + 1 == w {
                -px[i - 1]
            } else {
                px[i] - px[i - 1]
            };
            let dy = if h == 1 {
                0.0
            } else if y == 0 {
                py[i]
            } else if y + 1 == h {
                -py[i - w]
            } else {
                py[i] - py[i - w]
            };
            out[i] = dx + dy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    #[test]
    fn constant_image_has_zero_texture() {
        let img = GrayImage::filled(20, 15, 0.37);
        let d = decompose(&img, &TvConfig::default()).unwrap();
        assert!(d.texture.data().iter().all(|&t| t == 0.0));
        assert_eq!(d.cartoon, img);
        let enc = d.encoded_texture(&TextureEncoding::default());
        assert!(enc.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn divergence_is_negative_adjoint_of_gradient() {
        let (w, h) = (7, 5);
        let mut rng = RandomSource::new(2);
        let u: Vec<f64> = (0..w * h).map(|_| rng.normal()).collect();
        let px: Vec<f64> = (0..w * h).map(|_| rng.normal()).collect();
        let py: Vec<f64> = (0..w * h).map(|_| rng.normal()).collect();
        let mut div = vec![0.0; w * h];
        divergence(&px, &py, w, h, &mut div);
        let mut lhs = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let gx = if x + 1 < w { u[i + 1] - u[i] } else { 0.0 };
                let gy = if y + 1 < h { u[i + w] - u[i] } else { 0.0 };
                lhs += gx * px[i] + gy * py[i];
            }
        }
        let rhs: f64 = -u.iter().zip(&div).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn large_fidelity_keeps_cartoon_near_input() {
        let mut rng = RandomSource::new(4);
        let img = GrayImage::from_fn(24, 24, |_, _| rng.uniform(0.0, 1.0));
        let cfg = TvConfig {
            fidelity_weight: 1e6,
            ..TvConfig::default()
        };
        let d = decompose(&img, &cfg).unwrap();
        let max_tex = d.texture.data().iter().fold(0.0f64, |m, t| m.max(t.abs()));
        assert!(max_tex < 1e-5, "{max_tex}");
    }

    #[test]
    fn rejects_bad_config() {
        let img = GrayImage::filled(4, 4, 0.5);
        let cfg = TvConfig {
            step: 0.3,
            ..TvConfig::default()
        };
        assert!(decompose(&img, &cfg).is_err());
    }
}
