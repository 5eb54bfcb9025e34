//! Ridge orientation: blockwise structure-tensor estimation and a global
//! bivariate Fourier model (FOMFE) of the doubled-angle field.
//!
//! Orientation angles are ridge *flow* directions in `[0, π)`; the gradient
//! direction is perpendicular to them.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::image::{wrap_pi, GrayImage, Grid, OrientationField, SkeletonMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawOrientationConfig {
    pub block: usize,
    /// Mean squared gradient magnitude per pixel below which a block is invalid.
    pub min_energy: f64,
    /// Blocks with lower coherence are marked invalid.
    pub min_coherence: f64,
}

impl Default for RawOrientationConfig {
    fn default() -> Self {
        Self {
            block: 16,
            min_energy: 1e-8,
            min_coherence: 0.0,
        }
    }
}

/// Blockwise structure-tensor estimate.
#[derive(Debug, Clone)]
pub struct RawOrientation {
    pub field: OrientationField,
    /// Eigenvalue contrast `(λ₁ − λ₂)/(λ₁ + λ₂)` in `[0, 1]`, per pixel.
    pub coherence: Grid,
    pub block: usize,
}

impl RawOrientation {
    /// Mean coherence over valid pixels (0 when nothing is valid).
    pub fn mean_valid_coherence(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (c, &m) in self.coherence.data().iter().zip(self.field.mask()) {
            if m {
                sum += c;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Sobel gradients with replicated borders.
pub fn sobel(g: &Grid) -> (Grid, Grid) {
    let (w, h) = g.dims();
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        g.get(xc, yc)
    };
    let gx = Grid::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1))
    });
    let gy = Grid::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1))
    });
    (gx, gy)
}

pub fn estimate_raw_orientation(input: &Grid, cfg: &RawOrientationConfig) -> Result<RawOrientation> {
    if cfg.block == 0 {
        return Err(Error::InvalidParameter("orientation block must be > 0".into()));
    }
    let (w, h) = input.dims();
    let (gx, gy) = sobel(input);
    let mut angle = vec![0.0; w * h];
    let mut mask = vec![false; w * h];
    let mut coherence = Grid::filled(w, h, 0.0);
    let b = cfg.block;
    for by in (0..h).step_by(b) {
        for bx in (0..w).step_by(b) {
            let (x1, y1) = ((bx + b).min(w), (by + b).min(h));
            let (mut gxx, mut gyy, mut gxy) = (0.0, 0.0, 0.0);
            for y in by..y1 {
                for x in bx..x1 {
                    let (a, c) = (gx.get(x, y), gy.get(x, y));
                    gxx += a * a;
                    gyy += c * c;
                    gxy += a * c;
                }
            }
            let count = ((x1 - bx) * (y1 - by)) as f64;
            let energy = gxx + gyy;
            let contrast = ((gxx - gyy).powi(2) + 4.0 * gxy * gxy).sqrt();
            let coh = if energy > 0.0 {
                (contrast / energy).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let valid = energy / count > cfg.min_energy && coh >= cfg.min_coherence;
            // dominant gradient direction, rotated onto the ridge flow
            let ridge = wrap_pi(0.5 * (2.0 * gxy).atan2(gxx - gyy) + FRAC_PI_2);
            for y in by..y1 {
                for x in bx..x1 {
                    let i = y * w + x;
                    mask[i] = valid;
                    angle[i] = if valid { ridge } else { 0.0 };
                    coherence.set(x, y, coh);
                }
            }
        }
    }
    Ok(RawOrientation {
        field: OrientationField::new(w, h, angle, mask)?,
        coherence,
        block: b,
    })
}

pub fn estimate_gray_orientation(img: &GrayImage, cfg: &RawOrientationConfig) -> Result<RawOrientation> {
    estimate_raw_orientation(img.as_grid(), cfg)
}

pub fn estimate_skeleton_orientation(
    skel: &SkeletonMap,
    cfg: &RawOrientationConfig,
) -> Result<RawOrientation> {
    estimate_raw_orientation(&skel.to_grid(), cfg)
}

const REFINEMENT_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FomfeConfig {
    /// Fourier order K; the model has `(2K+1)²` coefficients per component.
    pub order: usize,
    /// Spacing of the sample lattice drawn from the input field.
    pub sample_step: usize,
    /// Ridge damping added to the normal equations.
    pub damping: f64,
}

impl Default for FomfeConfig {
    fn default() -> Self {
        Self {
            order: 4,
            sample_step: 16,
            damping: 1e-8,
        }
    }
}

/// Truncated bivariate Fourier expansion of `cos 2θ` and `sin 2θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FomfeModel {
    pub order: usize,
    pub coeffs_cos: Vec<f64>,
    pub coeffs_sin: Vec<f64>,
    /// Domain extent used to normalise coordinates.
    pub domain: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct FomfeFit {
    pub model: FomfeModel,
    /// `(x, y, θ)` samples the model was fitted to.
    pub samples: Vec<(usize, usize, f64)>,
    /// Sum of squared residuals on `(cos 2θ, sin 2θ)` over the samples.
    pub residual: f64,
}

fn basis_1d(order: usize, t: f64, extent: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    let scale = PI * t / extent as f64;
    for m in 1..=order {
        let (s, c) = (m as f64 * scale).sin_cos();
        out.push(c);
        out.push(s);
    }
}

impl FomfeModel {
    pub fn basis_len(order: usize) -> usize {
        (2 * order + 1).pow(2)
    }

    /// Tensor-product basis at `(x, y)`, ordered with `x` fastest.
    pub fn basis(order: usize, domain: (usize, usize), x: f64, y: f64) -> Vec<f64> {
        let mut bx = Vec::new();
        let mut by = Vec::new();
        basis_1d(order, x, domain.0, &mut bx);
        basis_1d(order, y, domain.1, &mut by);
        let mut out = Vec::with_capacity(bx.len() * by.len());
        for vy in &by {
            for vx in &bx {
                out.push(vx * vy);
            }
        }
        out
    }

    /// Model values of `(cos 2θ, sin 2θ)` at a point.
    pub fn components(&self, x: f64, y: f64) -> (f64, f64) {
        let phi = Self::basis(self.order, self.domain, x, y);
        let c = phi.iter().zip(&self.coeffs_cos).map(|(a, b)| a * b).sum();
        let s = phi.iter().zip(&self.coeffs_sin).map(|(a, b)| a * b).sum();
        (c, s)
    }

    pub fn angle_at(&self, x: f64, y: f64) -> f64 {
        let (c, s) = self.components(x, y);
        wrap_pi(0.5 * s.atan2(c))
    }
}

/// Least-squares fit over the valid samples of `field` on a regular lattice.
pub fn fit_fomfe(field: &OrientationField, cfg: &FomfeConfig) -> Result<FomfeFit> {
    if cfg.sample_step == 0 {
        return Err(Error::InvalidParameter("FOMFE sample step must be > 0".into()));
    }
    let (w, h) = field.dims();
    let half = cfg.sample_step / 2;
    let mut samples = Vec::new();
    for y in (half.min(h - 1)..h).step_by(cfg.sample_step) {
        for x in (half.min(w - 1)..w).step_by(cfg.sample_step) {
            if field.is_valid(x, y) {
                samples.push((x, y, field.angle(x, y)));
            }
        }
    }
    fit_fomfe_samples(&samples, (w, h), cfg)
}

pub fn fit_fomfe_samples(
    samples: &[(usize, usize, f64)],
    domain: (usize, usize),
    cfg: &FomfeConfig,
) -> Result<FomfeFit> {
    let nb = FomfeModel::basis_len(cfg.order);
    if samples.len() < nb {
        return Err(Error::InsufficientData(format!(
            "FOMFE order {} needs at least {nb} valid samples, found {}",
            cfg.order,
            samples.len()
        )));
    }
    let mut ata = vec![0.0; nb * nb];
    let mut atc = vec![0.0; nb];
    let mut ats = vec![0.0; nb];
    for &(x, y, theta) in samples {
        let phi = FomfeModel::basis(cfg.order, domain, x as f64, y as f64);
        let (s2, c2) = (2.0 * theta).sin_cos();
        for i in 0..nb {
            atc[i] += phi[i] * c2;
            ats[i] += phi[i] * s2;
            let row = &mut ata[i * nb..(i + 1) * nb];
            for j in 0..nb {
                row[j] += phi[i] * phi[j];
            }
        }
    }
    let mut damped = ata.clone();
    for i in 0..nb {
        damped[i * nb + i] += cfg.damping;
    }
    let chol = cholesky(&damped, nb)?;
    // iterated Tikhonov: removes the damping bias on well-determined
    // directions while leaving unconstrained ones at zero
    let solve = |rhs: &[f64]| {
        let mut x = cholesky_solve(&chol, nb, rhs);
        for _ in 0..REFINEMENT_STEPS {
            let r: Vec<f64> = (0..nb)
                .map(|i| rhs[i] - (0..nb).map(|j| ata[i * nb + j] * x[j]).sum::<f64>())
                .collect();
            for (xi, di) in x.iter_mut().zip(cholesky_solve(&chol, nb, &r)) {
                *xi += di;
            }
        }
        x
    };
    let model = FomfeModel {
        order: cfg.order,
        coeffs_cos: solve(&atc),
        coeffs_sin: solve(&ats),
        domain,
    };
    let residual = fomfe_residual(&model, samples);
    Ok(FomfeFit {
        model,
        samples: samples.to_vec(),
        residual,
    })
}

/// Sum of squared doubled-angle residuals of a model over samples.
pub fn fomfe_residual(model: &FomfeModel, samples: &[(usize, usize, f64)]) -> f64 {
    samples
        .iter()
        .map(|&(x, y, theta)| {
            let (c, s) = model.components(x as f64, y as f64);
            let (s2, c2) = (2.0 * theta).sin_cos();
            (c - c2).powi(2) + (s - s2).powi(2)
        })
        .sum()
}

/// Dense per-pixel evaluation; every pixel is valid.
pub fn evaluate_fomfe(model: &FomfeModel, dims: (usize, usize)) -> OrientationField {
    let (w, h) = dims;
    // separable evaluation: per-row and per-column basis tables
    let k = 2 * model.order + 1;
    let mut bx = Vec::new();
    let cols: Vec<Vec<f64>> = (0..w)
        .map(|x| {
            basis_1d(model.order, x as f64, model.domain.0, &mut bx);
            bx.clone()
        })
        .collect();
    let mut by = Vec::new();
    OrientationField::from_fn(w, h, |x, y| {
        if x == 0 {
            basis_1d(model.order, y as f64, model.domain.1, &mut by);
        }
        let (mut c, mut s) = (0.0, 0.0);
        for (j, vy) in by.iter().enumerate() {
            for (i, vx) in cols[x].iter().enumerate() {
                let p = vx * vy;
                c += p * model.coeffs_cos[j * k + i];
                s += p * model.coeffs_sin[j * k + i];
            }
        }
        wrap_pi(0.5 * s.atan2(c))
    })
}

/// Fits FOMFE to a raw field and evaluates it densely. When the field has too
/// few valid samples for the configured order, the order is lowered to the
/// largest one the samples support.
pub fn regularize(field: &OrientationField, cfg: &FomfeConfig) -> Result<OrientationField> {
    let mut cfg = *cfg;
    loop {
        match fit_fomfe(field, &cfg) {
            Ok(fit) => return Ok(evaluate_fomfe(&fit.model, field.dims())),
            Err(Error::InsufficientData(_)) if cfg.order > 0 => cfg.order -= 1,
            Err(e) => return Err(e),
        }
    }
}

/// Smallest angular distance between two orientations (mod π).
pub fn orientation_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::InsufficientData(
                        "FOMFE normal equations are not positive definite".into(),
                    ));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sinusoid(w: usize, h: usize, ridge_deg: f64, period: f64) -> Grid {
        let (s, c) = ridge_deg.to_radians().sin_cos();
        Grid::from_fn(w, h, |x, y| {
            // phase is constant along (cos, sin): ridges run in that direction
            let t = -(x as f64) * s + y as f64 * c;
            0.5 + 0.4 * (2.0 * PI * t / period).cos()
        })
    }

    #[test]
    fn sinusoid_angle_recovered() {
        let g = sinusoid(128, 128, 30.0, 9.0);
        let raw = estimate_raw_orientation(&g, &RawOrientationConfig::default()).unwrap();
        for by in 1..7 {
            for bx in 1..7 {
                let a = raw.field.angle(bx * 16 + 8, by * 16 + 8);
                assert!(
                    orientation_difference(a, 30f64.to_radians()) < 2f64.to_radians(),
                    "block ({bx},{by}): {}",
                    a.to_degrees()
                );
            }
        }
        assert!(raw.mean_valid_coherence() > 0.8);
    }

    #[test]
    fn constant_image_is_invalid_with_zero_coherence() {
        let g = Grid::filled(64, 64, 0.3);
        let raw = estimate_raw_orientation(&g, &RawOrientationConfig::default()).unwrap();
        assert_eq!(raw.field.valid_count(), 0);
        assert!(raw.coherence.data().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn rotation_by_quarter_turn_shifts_angles() {
        let n = 128;
        let g = sinusoid(n, n, 20.0, 8.0);
        // rotate content: new(x, y) = old(y, n-1-x)
        let r = Grid::from_fn(n, n, |x, y| g.get(y, n - 1 - x));
        let cfg = RawOrientationConfig::default();
        let a = estimate_raw_orientation(&g, &cfg).unwrap();
        let b = estimate_raw_orientation(&r, &cfg).unwrap();
        for by in 1..7 {
            for bx in 1..7 {
                let (x, y) = (bx * 16 + 8, by * 16 + 8);
                let orig = a.field.angle(y, n - 1 - x);
                let rot = b.field.angle(x, y);
                assert!(orientation_difference(rot, orig + FRAC_PI_2) < 2f64.to_radians());
            }
        }
    }

    #[test]
    fn constant_field_fit_is_exact() {
        let theta0 = 0.7;
        let field = OrientationField::from_fn(96, 80, |_, _| theta0);
        let cfg = FomfeConfig {
            sample_step: 8,
            ..FomfeConfig::default()
        };
        let fit = fit_fomfe(&field, &cfg).unwrap();
        let dense = evaluate_fomfe(&fit.model, field.dims());
        for &a in dense.angles() {
            assert!(orientation_difference(a, theta0) < 1e-8);
        }
    }

    #[test]
    fn adding_pi_changes_nothing() {
        let field = OrientationField::from_fn(64, 64, |x, y| 0.01 * x as f64 + 0.02 * y as f64);
        let shifted = OrientationField::new(
            64,
            64,
            field.angles().iter().map(|a| a + PI).collect(),
            vec![true; 64 * 64],
        )
        .unwrap();
        let cfg = FomfeConfig {
            order: 2,
            sample_step: 4,
            ..FomfeConfig::default()
        };
        let a = fit_fomfe(&field, &cfg).unwrap();
        let b = fit_fomfe(&shifted, &cfg).unwrap();
        for (x, y) in a.model.coeffs_cos.iter().zip(&b.model.coeffs_cos) {
            assert!((x - y).abs() < 1e-9);
        }
        let ea = evaluate_fomfe(&a.model, (64, 64));
        let eb = evaluate_fomfe(&b.model, (64, 64));
        for (x, y) in ea.angles().iter().zip(eb.angles()) {
            assert!(orientation_difference(*x, *y) < 1e-9);
        }
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let field = OrientationField::from_fn(32, 32, |_, _| 0.1);
        let err = fit_fomfe(&field, &FomfeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn dense_evaluation_matches_pointwise() {
        let field = OrientationField::from_fn(80, 64, |x, y| ((x as f64) * 0.05).sin() + 0.01 * y as f64);
        let fit = fit_fomfe(&field, &FomfeConfig { sample_step: 4, ..FomfeConfig::default() }).unwrap();
        let dense = evaluate_fomfe(&fit.model, (80, 64));
        for &(x, y) in &[(0, 0), (17, 33), (79, 63)] {
            assert!(
                orientation_difference(dense.angle(x, y), fit.model.angle_at(x as f64, y as f64)) < 1e-12
            );
        }
    }
}
