//! Plastic skin distortion: a rigid torsion/traction blended in through an
//! elliptical gradual-transition region.
//!
//! A point `p` moves to `p + Δ(p) · g(h(p), k)` where `Δ` is the rigid
//! displacement, `h` the signed elliptical distance and `g` the raised-cosine
//! transition of width `k`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::rng::RandomSource;

pub type Point = [f64; 2];

/// Value sampled for locations that fall outside the source canvas (valley white).
pub const BACKGROUND: f64 = 1.0;

const INVERSE_ITERATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionParams {
    /// Skin plasticity coefficient, width of the transition band.
    pub k: f64,
    /// Rotation angle in degrees.
    pub theta_deg: f64,
    /// Traction (translation) in pixels.
    pub displacement: Point,
    pub rotation_center: Point,
    pub ellipse_center: Point,
    pub semi_x: f64,
    pub semi_y: f64,
}

impl DistortionParams {
    pub fn new(
        k: f64,
        theta_deg: f64,
        displacement: Point,
        rotation_center: Point,
        ellipse_center: Point,
        semi_x: f64,
        semi_y: f64,
    ) -> Result<Self> {
        let p = Self {
            k,
            theta_deg,
            displacement,
            rotation_center,
            ellipse_center,
            semi_x,
            semi_y,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "plasticity k must be > 0, got {}",
                self.k
            )));
        }
        if !(self.semi_x > 0.0 && self.semi_y > 0.0) {
            return Err(Error::InvalidParameter(
                "ellipse semi-axes must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Zero rotation and zero traction, centred in a `width`x`height` frame.
    pub fn identity(width: usize, height: usize) -> Self {
        let c = image_center(width, height);
        Self {
            k: 1.0,
            theta_deg: 0.0,
            displacement: [0.0, 0.0],
            rotation_center: c,
            ellipse_center: c,
            semi_x: 0.4 * width as f64 / 2.0,
            semi_y: 0.6 * width as f64 / 2.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.theta_deg == 0.0 && self.displacement == [0.0, 0.0]
    }
}

/// Sampling intervals for [`sample_distortion`]; semi-axes are fractions of
/// half the image width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionParamRanges {
    pub k: (f64, f64),
    pub theta_deg: (f64, f64),
    pub displacement: (f64, f64),
    /// `s_x ∈ [lo·s, hi·s]`, `s` = half image width.
    pub semi_x_frac: (f64, f64),
    /// `s_y ∈ [lo·s_x, hi·s_x]`.
    pub semi_y_ratio: (f64, f64),
}

impl Default for DistortionParamRanges {
    fn default() -> Self {
        Self {
            k: (0.5, 2.0),
            theta_deg: (0.0, 5.0),
            displacement: (-15.0, 15.0),
            semi_x_frac: (0.2, 0.6),
            semi_y_ratio: (1.0, 2.0),
        }
    }
}

impl DistortionParamRanges {
    /// Ranges that always produce the identity transform.
    pub fn none() -> Self {
        Self {
            theta_deg: (0.0, 0.0),
            displacement: (0.0, 0.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if !(ordered(self.k)
            && ordered(self.theta_deg)
            && ordered(self.displacement)
            && ordered(self.semi_x_frac)
            && ordered(self.semi_y_ratio))
        {
            return Err(Error::InvalidParameter(
                "distortion ranges must be finite with lo <= hi".into(),
            ));
        }
        if self.k.0 <= 0.0 || self.semi_x_frac.0 <= 0.0 || self.semi_y_ratio.0 <= 0.0 {
            return Err(Error::InvalidParameter(
                "k and semi-axis ranges must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn image_center(width: usize, height: usize) -> Point {
    [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0]
}

/// Signed elliptical distance: `sqrt(q - 1)` outside the ellipse, `-sqrt(1 - q)`
/// inside, with `q = (p - o_e)ᵀ A⁻¹ (p - o_e)` and `A = diag(s_x², s_y²)`.
pub fn ellipse_distance(p: Point, params: &DistortionParams) -> f64 {
    let dx = p[0] - params.ellipse_center[0];
    let dy = p[1] - params.ellipse_center[1];
    let q = dx * dx / (params.semi_x * params.semi_x) + dy * dy / (params.semi_y * params.semi_y);
    if q >= 1.0 {
        (q - 1.0).sqrt()
    } else {
        -(1.0 - q).sqrt()
    }
}

/// Raised-cosine transition from 0 (inside) to 1 (beyond `k`).
pub fn gradual_transition(h: f64, k: f64) -> f64 {
    if h <= 0.0 {
        0.0
    } else if h < k {
        0.5 * (1.0 - (PI * h / k).cos())
    } else {
        1.0
    }
}

/// Rigid displacement `(R_θ (p - o_r) + o_r + e) - p`.
pub fn displacement(p: Point, params: &DistortionParams) -> Point {
    let (s, c) = params.theta_deg.to_radians().sin_cos();
    let rx = p[0] - params.rotation_center[0];
    let ry = p[1] - params.rotation_center[1];
    // R_θ = [[cos, sin], [-sin, cos]]
    let qx = c * rx + s * ry + params.rotation_center[0] + params.displacement[0];
    let qy = -s * rx + c * ry + params.rotation_center[1] + params.displacement[1];
    [qx - p[0], qy - p[1]]
}

/// Forward map of a single point.
pub fn distort_point(p: Point, params: &DistortionParams) -> Point {
    let d = displacement(p, params);
    let g = gradual_transition(ellipse_distance(p, params), params.k);
    [p[0] + d[0] * g, p[1] + d[1] * g]
}

/// Approximate inverse of [`distort_point`] by fixed-point iteration from `q`.
pub fn undistort_point(q: Point, params: &DistortionParams) -> Point {
    let mut p = q;
    for _ in 0..INVERSE_ITERATIONS {
        let d = displacement(p, params);
        let g = gradual_transition(ellipse_distance(p, params), params.k);
        p = [q[0] - d[0] * g, q[1] - d[1] * g];
    }
    p
}

/// Renders the distorted image by inverse mapping with bilinear sampling.
pub fn distort_image(img: &GrayImage, params: &DistortionParams) -> GrayImage {
    if params.is_identity() {
        return img.clone();
    }
    let (w, h) = img.dims();
    GrayImage::from_fn(w, h, |x, y| {
        let src = undistort_point([x as f64, y as f64], params);
        sample_bilinear(img, src[0], src[1])
    })
}

/// Bilinear sample; integer coordinates return the stored pixel exactly and
/// taps outside the canvas read [`BACKGROUND`].
pub fn sample_bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = img.dims();
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let tap = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            BACKGROUND
        } else {
            img.get(xi as usize, yi as usize)
        }
    };
    let top = if fx == 0.0 {
        tap(x0, y0)
    } else {
        tap(x0, y0) * (1.0 - fx) + tap(x0 + 1.0, y0) * fx
    };
    if fy == 0.0 {
        return top;
    }
    let bottom = if fx == 0.0 {
        tap(x0, y0 + 1.0)
    } else {
        tap(x0, y0 + 1.0) * (1.0 - fx) + tap(x0 + 1.0, y0 + 1.0) * fx
    };
    top * (1.0 - fy) + bottom * fy
}

/// Draws each parameter uniformly from its interval; both centres sit at the
/// image centre.
pub fn sample_distortion(
    ranges: &DistortionParamRanges,
    rng: &mut RandomSource,
    dims: (usize, usize),
) -> DistortionParams {
    let s = dims.0 as f64 / 2.0;
    let k = rng.uniform_inclusive(ranges.k.0, ranges.k.1);
    let theta_deg = rng.uniform_inclusive(ranges.theta_deg.0, ranges.theta_deg.1);
    let ex = rng.uniform_inclusive(ranges.displacement.0, ranges.displacement.1);
    let ey = rng.uniform_inclusive(ranges.displacement.0, ranges.displacement.1);
    let semi_x = rng.uniform_inclusive(ranges.semi_x_frac.0 * s, ranges.semi_x_frac.1 * s);
    let semi_y = rng.uniform_inclusive(ranges.semi_y_ratio.0 * semi_x, ranges.semi_y_ratio.1 * semi_x);
    let c = image_center(dims.0, dims.1);
    DistortionParams {
        k,
        theta_deg,
        displacement: [ex, ey],
        rotation_center: c,
        ellipse_center: c,
        semi_x,
        semi_y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(theta: f64, e: Point) -> DistortionParams {
        DistortionParams::new(1.0, theta, e, [0.0, 0.0], [50.0, 50.0], 10.0, 20.0).unwrap()
    }

    #[test]
    fn ellipse_distance_cases() {
        let p = params(0.0, [0.0, 0.0]);
        assert!(ellipse_distance([60.0, 50.0], &p).abs() < 1e-9);
        assert!((ellipse_distance([70.0, 50.0], &p) - 3f64.sqrt()).abs() < 1e-12);
        assert!(ellipse_distance([50.0, 50.0], &p) < 0.0);
        assert_eq!(ellipse_distance([50.0, 50.0], &p), -1.0);
    }

    #[test]
    fn transition_branches() {
        assert_eq!(gradual_transition(-0.3, 1.7), 0.0);
        assert!((gradual_transition(0.75, 1.5) - 0.5).abs() < 1e-12);
        assert_eq!(gradual_transition(1.5, 1.5), 1.0);
        assert_eq!(gradual_transition(0.0, 1.5), 0.0);
    }

    #[test]
    fn transition_continuous_at_branch_points() {
        for &k in &[0.5, 1.0, 2.0] {
            let eps = 1e-12;
            assert!((gradual_transition(eps, k) - gradual_transition(-eps, k)).abs() < 1e-9);
            assert!((gradual_transition(k - eps, k) - gradual_transition(k + eps, k)).abs() < 1e-9);
        }
    }

    #[test]
    fn displacement_cases() {
        let id = params(0.0, [0.0, 0.0]);
        assert_eq!(displacement([13.0, -4.0], &id), [0.0, 0.0]);
        let tr = params(0.0, [5.0, -3.0]);
        assert_eq!(displacement([13.0, -4.0], &tr), [5.0, -3.0]);
        // hand multiply: R_90 = [[0, 1], [-1, 0]], R·(1,0) = (0,-1), Δ = (-1,-1)
        let rot = params(90.0, [0.0, 0.0]);
        let d = displacement([1.0, 0.0], &rot);
        assert!((d[0] + 1.0).abs() < 1e-12 && (d[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(DistortionParams::new(0.0, 0.0, [0.0; 2], [0.0; 2], [0.0; 2], 1.0, 1.0).is_err());
        assert!(DistortionParams::new(1.0, 0.0, [0.0; 2], [0.0; 2], [0.0; 2], 0.0, 1.0).is_err());
    }

    #[test]
    fn identity_render_is_bit_exact() {
        let mut rng = RandomSource::new(1);
        let img = GrayImage::from_fn(33, 21, |_, _| rng.uniform(0.0, 1.0));
        let p = DistortionParams {
            theta_deg: 0.0,
            displacement: [0.0, 0.0],
            ..sample_distortion(&DistortionParamRanges::default(), &mut rng, (33, 21))
        };
        assert_eq!(distort_image(&img, &p), img);
    }

    #[test]
    fn interior_unchanged_exterior_translated() {
        // a dark dot far outside the ellipse, and a dark dot at its centre
        let mut data = vec![1.0; 100 * 100];
        data[10 * 100 + 10] = 0.0;
        data[50 * 100 + 50] = 0.0;
        let img = GrayImage::new(100, 100, data).unwrap();
        let p = DistortionParams::new(1.0, 0.0, [5.0, -3.0], [50.0, 50.0], [50.0, 50.0], 10.0, 12.0)
            .unwrap();
        let out = distort_image(&img, &p);
        // forward-splat oracle for the far point: (10,10) + (5,-3)
        let fwd = distort_point([10.0, 10.0], &p);
        assert_eq!(fwd, [15.0, 7.0]);
        assert_eq!(out.get(15, 7), 0.0);
        assert_eq!(out.get(10, 10), 1.0);
        // centre of the ellipse is inside (h < 0) and stays put
        assert_eq!(out.get(50, 50), 0.0);
    }

    #[test]
    fn sampled_ranges_hold() {
        let ranges = DistortionParamRanges::default();
        let mut rng = RandomSource::new(5);
        for _ in 0..10_000 {
            let p = sample_distortion(&ranges, &mut rng, (200, 240));
            assert!((0.5..=2.0).contains(&p.k));
            assert!((0.0..=5.0).contains(&p.theta_deg));
            assert!(p.displacement.iter().all(|e| (-15.0..=15.0).contains(e)));
            assert!((20.0..=60.0).contains(&p.semi_x));
            assert!(p.semi_y >= p.semi_x && p.semi_y <= 2.0 * p.semi_x);
            assert_eq!(p.rotation_center, [99.5, 119.5]);
            assert_eq!(p.ellipse_center, p.rotation_center);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let ranges = DistortionParamRanges::default();
        let mut a = RandomSource::new(9);
        let mut b = RandomSource::new(9);
        for _ in 0..50 {
            assert_eq!(
                sample_distortion(&ranges, &mut a, (64, 64)),
                sample_distortion(&ranges, &mut b, (64, 64))
            );
        }
    }
}
