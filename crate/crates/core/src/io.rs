//! Raster file I/O: 8-bit grayscale PNG and the binary real-valued grid format.
//!
//! Grid files hold an 8-byte magic `FGGRID\0\x01`, little-endian `u32` width and
//! height, then `width * height` little-endian `f32` values in row-major order.

use std::io::Write;
use std::path::Path;

use image::{ColorType, ImageReader};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Grid, SkeletonMap};

pub const GRID_MAGIC: [u8; 8] = *b"FGGRID\0\x01";

pub fn load_gray_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    if decoded.color() != ColorType::L8 {
        return Err(Error::NotGrayscale {
            path: path.to_path_buf(),
            found: format!("{:?}", decoded.color()),
        });
    }
    let luma = decoded.into_luma8();
    let (w, h) = luma.dimensions();
    let data = luma.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    GrayImage::new(w as usize, h as usize, data)
}

/// Writes an 8-bit grayscale PNG, rounding to the nearest level.
pub fn save_gray_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Decode {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
}

/// Skeletons are stored with ridge pixels white (255).
pub fn save_skeleton(skel: &SkeletonMap, path: impl AsRef<Path>) -> Result<()> {
    let img = GrayImage::new(
        skel.width(),
        skel.height(),
        skel.data().iter().map(|&v| v as f64).collect(),
    )?;
    save_gray_image(&img, path)
}

/// Any pixel at or above mid-gray is a ridge pixel.
pub fn load_skeleton(path: impl AsRef<Path>) -> Result<SkeletonMap> {
    let img = load_gray_image(path)?;
    let data = img.data().iter().map(|&v| (v >= 0.5) as u8).collect();
    SkeletonMap::new(img.width(), img.height(), data)
}

pub fn write_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(16 + 4 * grid.data().len());
    bytes.extend_from_slice(&GRID_MAGIC);
    bytes.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    for &v in grid.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if bytes.len() < 16 || bytes[..8] != GRID_MAGIC {
        return Err(bad("missing grid magic"));
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != w * h * 4 {
        return Err(bad("payload length does not match dimensions"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Grid::new(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    #[test]
    fn pixel_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("px.png");
        image::GrayImage::from_raw(3, 1, vec![255, 0, 128])
            .unwrap()
            .save(&p)
            .unwrap();
        let img = load_gray_image(&p).unwrap();
        assert_eq!(img.get(0, 0), 1.0);
        assert_eq!(img.get(1, 0), 0.0);
        assert!((img.get(2, 0) - 128.0 / 255.0).abs() < 1e-9);
    }

    #[test]
    fn constant_round_trip_within_one_level() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let img = GrayImage::filled(16, 9, 0.5);
        save_gray_image(&img, &p).unwrap();
        let back = load_gray_image(&p).unwrap();
        assert_eq!(back.dims(), (16, 9));
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn random_image_round_trip_matches_quantizer() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.png");
        let mut rng = RandomSource::new(11);
        let img = GrayImage::from_fn(192, 192, |_, _| rng.uniform_inclusive(0.0, 1.0));
        save_gray_image(&img, &p).unwrap();
        let back = load_gray_image(&p).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            // independent quantize-dequantize oracle
            let q = (a * 255.0 + 0.5).floor() / 255.0;
            assert!((q - b).abs() < 1e-12);
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn skeleton_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.png");
        let skel = SkeletonMap::from_fn(20, 10, |x, y| (x * 7 + y * 3) % 5 == 0);
        save_skeleton(&skel, &p).unwrap();
        assert_eq!(load_skeleton(&p).unwrap(), skel);
    }

    #[test]
    fn color_image_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        image::RgbImage::new(4, 4).save(&p).unwrap();
        let err = load_gray_image(&p).unwrap_err();
        assert!(matches!(err, Error::NotGrayscale { .. }), "{err}");
        assert!(err.to_string().contains("grayscale"));
    }

    #[test]
    fn missing_and_garbage_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_gray_image(dir.path().join("nope.png")),
            Err(Error::Io { .. })
        ));
        let p = dir.path().join("junk.png");
        std::fs::write(&p, b"not an image at all").unwrap();
        assert!(matches!(load_gray_image(&p), Err(Error::Decode { .. })));
    }

    #[test]
    fn grid_round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.grid");
        let g = Grid::from_fn(5, 3, |x, y| x as f64 * 0.1 - y as f64 * 1e-3);
        write_grid(&g, &p).unwrap();
        let back = read_grid(&p).unwrap();
        assert_eq!(back.dims(), (5, 3));
        for (a, b) in g.data().iter().zip(back.data()) {
            assert_eq!(*b, *a as f32 as f64);
        }
        std::fs::write(&p, b"FGGRID\0\x01\x02\0\0\0\x02\0\0\0").unwrap();
        assert!(read_grid(&p).is_err());
    }
}
