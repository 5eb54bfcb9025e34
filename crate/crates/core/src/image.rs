//! Raster containers shared by every stage of the pipeline.
//!
//! All grids are row-major with `(x, y)` addressing, `x` along the width.

use crate::error::{Error, Result};

/// Real-valued 2-D grid with no range constraint (textures, weight maps, responses).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Copies the `w`x`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Grid> {
        if x0 + w > self.width || y0 + h > self.height || w == 0 || h == 0 {
            return Err(Error::InvalidParameter(format!(
                "crop {w}x{h}@({x0},{y0}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        Ok(Grid::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }

    /// Clamps into `[0, 1]` and wraps as an image.
    pub fn to_image_clamped(&self) -> GrayImage {
        GrayImage {
            grid: self.map(|v| v.clamp(0.0, 1.0)),
        }
    }
}

/// Intensity image with every value in `[0, 1]`; ridges are dark (low values).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    grid: Grid,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "gray intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            grid: Grid::new(width, height, data)?,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Self {
            grid: Grid::filled(width, height, value),
        }
    }

    /// Builds an image from a function; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            grid: Grid::from_fn(width, height, |x, y| f(x, y).clamp(0.0, 1.0)),
        }
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    pub fn data(&self) -> &[f64] {
        &self.grid.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y)
    }

    pub fn as_grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<GrayImage> {
        Ok(GrayImage {
            grid: self.grid.crop(x0, y0, w, h)?,
        })
    }
}

/// Binary ridge map: 1 on skeleton (ridge) pixels, 0 elsewhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl SkeletonMap {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter(
                "skeleton values must be 0 or 1".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut map = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    map.set(x, y, true);
                }
            }
        }
        map
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    /// Out-of-range coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, ridge: bool) {
        self.data[y * self.width + x] = ridge as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Ridge pixels as 1.0, background as 0.0.
    pub fn to_grid(&self) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    /// Gray rendering with dark ridges on a white background.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            grid: Grid {
                width: self.width,
                height: self.height,
                data: self.data.iter().map(|&v| 1.0 - v as f64).collect(),
            },
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<SkeletonMap> {
        if x0 + w > self.width || y0 + h > self.height || w == 0 || h == 0 {
            return Err(Error::InvalidParameter("skeleton crop out of range".into()));
        }
        Ok(SkeletonMap::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }
}

/// Per-pixel ridge flow direction in `[0, π)` with a validity mask.
///
/// The angle is the direction along the ridges, measured from the +x axis
/// towards +y (image rows grow downwards).
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationField {
    width: usize,
    height: usize,
    angle: Vec<f64>,
    mask: Vec<bool>,
}

impl OrientationField {
    /// Angles are reduced modulo π; masked-out entries are stored as 0.
    pub fn new(width: usize, height: usize, angle: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        check_dims(width, height, angle.len())?;
        check_dims(width, height, mask.len())?;
        if angle.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("non-finite orientation".into()));
        }
        let angle = angle
            .into_iter()
            .zip(&mask)
            .map(|(a, &m)| if m { wrap_pi(a) } else { 0.0 })
            .collect();
        Ok(Self {
            width,
            height,
            angle,
            mask,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut angle = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                angle.push(wrap_pi(f(x, y)));
            }
        }
        Self {
            width,
            height,
            angle,
            mask: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angle
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn angle(&self, x: usize, y: usize) -> f64 {
        self.angle[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Angle grid (invalid pixels hold 0).
    pub fn to_grid(&self) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            data: self.angle.clone(),
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<OrientationField> {
        if x0 + w > self.width || y0 + h > self.height || w == 0 || h == 0 {
            return Err(Error::InvalidParameter(
                "orientation crop out of range".into(),
            ));
        }
        let mut angle = Vec::with_capacity(w * h);
        let mut mask = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                angle.push(self.angle(x, y));
                mask.push(self.is_valid(x, y));
            }
        }
        Ok(Self {
            width: w,
            height: h,
            angle,
            mask,
        })
    }
}

/// Reduces an angle into `[0, π)`.
pub fn wrap_pi(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::PI);
    // rem_euclid can round up to exactly π for tiny negative inputs
    if r >= std::f64::consts::PI {
        0.0
    } else {
        r
    }
}

/// Reduces an angle into `[0, 2π)`.
pub fn wrap_two_pi(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = a.rem_euclid(tau);
    if r >= tau {
        0.0
    } else {
        r
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "grid dimensions must be positive, got {width}x{height}"
        )));
    }
    if width * height != len {
        return Err(Error::InvalidParameter(format!(
            "buffer of {len} values does not fit {width}x{height}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_rejects_out_of_range() {
        assert!(GrayImage::new(2, 1, vec![0.0, 1.5]).is_err());
        assert!(GrayImage::new(2, 1, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(Grid::new(0, 3, vec![]).is_err());
    }

    #[test]
    fn orientation_is_wrapped() {
        let f = OrientationField::new(2, 1, vec![-0.5, 4.0], vec![true, true]).unwrap();
        assert!((f.angle(0, 0) - (std::f64::consts::PI - 0.5)).abs() < 1e-12);
        assert!((f.angle(1, 0) - (4.0 - std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn wrap_pi_never_returns_pi() {
        assert!(wrap_pi(-1e-18) < std::f64::consts::PI);
        assert_eq!(wrap_pi(std::f64::consts::PI), 0.0);
    }
}
