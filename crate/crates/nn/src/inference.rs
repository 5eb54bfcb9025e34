//! Sliding-window enhancement of full-size latents.

use fingergan_core::image::GrayImage;

use crate::error::{NnError, Result};
use crate::layers::Mode;
use crate::network::Generator;
use crate::tensor::Tensor;

pub const DEFAULT_WINDOW: usize = 192;
pub const DEFAULT_STEP: usize = 8;
/// Windows evaluated per forward call.
pub const PATCH_BATCH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
    /// Gaussian weights centred on each window (sigma = window / 4).
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    pub window: usize,
    pub step: usize,
    pub aggregation: Aggregation,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            step: DEFAULT_STEP,
            aggregation: Aggregation::Mean,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.step == 0 || self.step > self.window {
            return Err(NnError::Config(format!(
                "need 0 < step <= window, got step {} window {}",
                self.step, self.window
            )));
        }
        Ok(())
    }
}

/// Anything that maps `[n, 1, w, w]` patches to same-shaped predictions.
pub trait PatchModel {
    fn predict(&mut self, patches: &Tensor) -> Result<Tensor>;
}

impl PatchModel for Generator {
    fn predict(&mut self, patches: &Tensor) -> Result<Tensor> {
        self.forward(patches, Mode::Eval)
    }
}

/// Window origins along one axis: `ceil((len - window) / step) + 1` of them,
/// plus the padded length they cover.
pub fn window_origins(len: usize, window: usize, step: usize) -> (Vec<usize>, usize) {
    let n = if len <= window {
        1
    } else {
        (len - window).div_ceil(step) + 1
    };
    let origins: Vec<usize> = (0..n).map(|i| i * step).collect();
    let padded = (n - 1) * step + window;
    (origins, padded)
}

/// Mirror index into `0..len` (edge pixel not repeated), any overshoot.
fn reflect(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let m = i % period;
    if m < len {
        m
    } else {
        period - m
    }
}

/// Per-pixel summary of how the output was assembled.
#[derive(Debug, Clone)]
pub struct Tiling {
    pub windows_x: Vec<usize>,
    pub windows_y: Vec<usize>,
    /// Windows covering each original pixel (row-major).
    pub coverage: Vec<u32>,
}

impl Tiling {
    pub fn window_count(&self) -> usize {
        self.windows_x.len() * self.windows_y.len()
    }
}

fn window_weights(window: usize, agg: Aggregation) -> Vec<f64> {
    match agg {
        Aggregation::Mean => vec![1.0; window * window],
        Aggregation::Gaussian => {
            let c = (window as f64 - 1.0) / 2.0;
            let s2 = 2.0 * (window as f64 / 4.0).powi(2);
            (0..window * window)
                .map(|i| {
                    let (y, x) = ((i / window) as f64, (i % window) as f64);
                    (-((x - c).powi(2) + (y - c).powi(2)) / s2).exp()
                })
                .collect()
        }
    }
}

/// Enhances `img` window by window and aggregates overlapping predictions
/// with an incremental weighted mean (so agreeing predictions pass through
/// exactly).
pub fn enhance_full_image(
    img: &GrayImage,
    model: &mut dyn PatchModel,
    cfg: &InferenceConfig,
) -> Result<(GrayImage, Tiling)> {
    cfg.validate()?;
    let (w, h) = img.dims();
    if w == 0 || h == 0 {
        return Err(NnError::Shape("empty image".into()));
    }
    let win = cfg.window;
    let (ox, pw) = window_origins(w, win, cfg.step);
    let (oy, ph) = window_origins(h, win, cfg.step);
    let padded: Vec<f64> = (0..ph * pw)
        .map(|i| img.get(reflect(i % pw, w), reflect(i / pw, h)))
        .collect();
    let weights = window_weights(win, cfg.aggregation);
    let mut mean = vec![0.0; pw * ph];
    let mut total = vec![0.0; pw * ph];
    let mut coverage = vec![0u32; w * h];
    let origins: Vec<(usize, usize)> = oy.iter().flat_map(|&y| ox.iter().map(move |&x| (x, y))).collect();
    for chunk in origins.chunks(PATCH_BATCH) {
        let mut batch = Tensor::zeros([chunk.len(), 1, win, win]);
        for (b, &(x0, y0)) in chunk.iter().enumerate() {
            let dst = batch.sample_mut(b);
            for y in 0..win {
                let row = (y0 + y) * pw + x0;
                dst[y * win..(y + 1) * win].copy_from_slice(&padded[row..row + win]);
            }
        }
        let pred = model.predict(&batch)?;
        if pred.shape() != batch.shape() {
            return Err(NnError::Shape(format!(
                "model returned {:?} for {:?}",
                pred.shape(),
                batch.shape()
            )));
        }
        for (b, &(x0, y0)) in chunk.iter().enumerate() {
            let src = pred.sample(b);
            for y in 0..win {
                for x in 0..win {
                    let (i, wgt) = ((y0 + y) * pw + x0 + x, weights[y * win + x]);
                    total[i] += wgt;
                    mean[i] += (wgt / total[i]) * (src[y * win + x] - mean[i]);
                    if x0 + x < w && y0 + y < h {
                        coverage[(y0 + y) * w + x0 + x] += 1;
                    }
                }
            }
        }
    }
    let out = (0..w * h)
        .map(|i| mean[(i / w) * pw + i % w].clamp(0.0, 1.0))
        .collect();
    Ok((
        GrayImage::new(w, h, out)?,
        Tiling {
            windows_x: ox,
            windows_y: oy,
            coverage,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(f64);

    impl PatchModel for Constant {
        fn predict(&mut self, p: &Tensor) -> Result<Tensor> {
            Ok(Tensor::filled(p.shape(), self.0))
        }
    }

    #[test]
    fn origins_examples() {
        assert_eq!(window_origins(200, 192, 8), (vec![0, 8], 200));
        assert_eq!(window_origins(192, 192, 8), (vec![0], 192));
        assert_eq!(window_origins(201, 192, 8), (vec![0, 8, 16], 208));
        assert_eq!(window_origins(100, 192, 8), (vec![0], 192));
        assert_eq!(window_origins(384, 192, 192), (vec![0, 192], 384));
    }

    proptest::proptest! {
        #[test]
        fn origins_cover_every_pixel(len in 1usize..600, window in 1usize..64, step_frac in 0.0f64..1.0) {
            let step = 1 + ((window - 1) as f64 * step_frac) as usize;
            let (origins, padded) = window_origins(len, window, step);
            proptest::prop_assert!(padded >= len);
            proptest::prop_assert_eq!(*origins.last().unwrap() + window, padded);
            // dropping the last window would leave pixels uncovered
            proptest::prop_assert!(origins.len() == 1 || origins[origins.len() - 2] + window < len);
        }

        #[test]
        fn reflect_stays_in_range(i in 0usize..10_000, len in 1usize..300) {
            proptest::prop_assert!(reflect(i, len) < len);
        }
    }

    #[test]
    fn reflect_indices() {
        let r: Vec<usize> = (0..9).map(|i| reflect(i, 4)).collect();
        assert_eq!(r, vec![0, 1, 2, 3, 2, 1, 0, 1, 2]);
    }

    #[test]
    fn constant_model_is_exact_for_both_aggregations() {
        let img = GrayImage::from_fn(37, 29, |x, y| ((x + y) % 5) as f64 / 5.0);
        for agg in [Aggregation::Mean, Aggregation::Gaussian] {
            let cfg = InferenceConfig {
                window: 16,
                step: 3,
                aggregation: agg,
            };
            let (out, tiling) = enhance_full_image(&img, &mut Constant(0.7), &cfg).unwrap();
            assert!(out.data().iter().all(|&v| v == 0.7));
            assert!(tiling.coverage.iter().all(|&c| c >= 1));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let img = GrayImage::filled(8, 8, 0.0);
        let cfg = InferenceConfig {
            window: 4,
            step: 5,
            aggregation: Aggregation::Mean,
        };
        assert!(enhance_full_image(&img, &mut Constant(0.1), &cfg).is_err());
    }
}
