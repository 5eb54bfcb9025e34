use fingergan_core::image::GrayImage;
use fingergan_core::rng::RandomSource;
use fingergan_nn::data::image_tensor;
use fingergan_nn::inference::*;
use fingergan_nn::network::GeneratorSpec;
use fingergan_nn::{Generator, Mode, Result, Tensor};

/// Fills window `k` (in evaluation order) with `(k + 1) / 10`.
struct WindowId(usize);

impl PatchModel for WindowId {
    fn predict(&mut self, p: &Tensor) -> Result<Tensor> {
        let mut out = Tensor::zeros(p.shape());
        for b in 0..p.batch() {
            self.0 += 1;
            let v = self.0 as f64 / 10.0;
            out.sample_mut(b).iter_mut().for_each(|x| *x = v);
        }
        Ok(out)
    }
}

struct Identity;

impl PatchModel for Identity {
    fn predict(&mut self, p: &Tensor) -> Result<Tensor> {
        Ok(p.clone())
    }
}

fn noise_image(w: usize, h: usize, seed: u64) -> GrayImage {
    let mut rng = RandomSource::new(seed);
    GrayImage::from_fn(w, h, |_, _| rng.uniform(0.0, 1.0))
}

#[test]
fn two_hundred_pixel_tiling_oracle() {
    let img = noise_image(200, 200, 1);
    let cfg = InferenceConfig::default();
    let (out, tiling) = enhance_full_image(&img, &mut WindowId(0), &cfg).unwrap();
    assert_eq!(tiling.windows_x, vec![0, 8]);
    assert_eq!(tiling.windows_y, vec![0, 8]);
    assert_eq!(tiling.window_count(), 4);
    // windows in row-major order: (0,0)=0.1, (8,0)=0.2, (0,8)=0.3, (8,8)=0.4
    let origins = [(0usize, 0usize, 0.1), (8, 0, 0.2), (0, 8, 0.3), (8, 8, 0.4)];
    for y in 0..200 {
        for x in 0..200 {
            let covering: Vec<f64> = origins
                .iter()
                .filter(|(ox, oy, _)| (*ox..ox + 192).contains(&x) && (*oy..oy + 192).contains(&y))
                .map(|o| o.2)
                .collect();
            assert_eq!(tiling.coverage[y * 200 + x] as usize, covering.len());
            let want = covering.iter().sum::<f64>() / covering.len() as f64;
            assert!((out.get(x, y) - want).abs() < 1e-12, "({x},{y})");
        }
    }
    assert_eq!(tiling.coverage.iter().min(), Some(&1));
    assert_eq!(tiling.coverage.iter().max(), Some(&4));
}

#[test]
fn agreeing_predictions_pass_through_exactly() {
    let img = noise_image(201, 230, 2);
    for aggregation in [Aggregation::Mean, Aggregation::Gaussian] {
        let cfg = InferenceConfig {
            window: 64,
            step: 8,
            aggregation,
        };
        let (out, _) = enhance_full_image(&img, &mut Identity, &cfg).unwrap();
        assert_eq!(out.data(), img.data());
    }
}

#[test]
fn single_window_equals_direct_forward() {
    let mut g = Generator::new(&GeneratorSpec { base_channels: 2, ..Default::default() }, &mut RandomSource::new(3));
    let img = noise_image(192, 192, 4);
    let direct = g.forward(&image_tensor(&img), Mode::Eval).unwrap();
    let (out, tiling) = enhance_full_image(&img, &mut g, &InferenceConfig::default()).unwrap();
    assert_eq!(tiling.window_count(), 1);
    assert_eq!(out.data(), direct.data());
}

#[test]
fn non_overlapping_windows_form_a_mosaic() {
    let mut g = Generator::new(&GeneratorSpec { base_channels: 2, ..Default::default() }, &mut RandomSource::new(5));
    let img = noise_image(64, 64, 6);
    let cfg = InferenceConfig {
        window: 32,
        step: 32,
        aggregation: Aggregation::Mean,
    };
    let (out, tiling) = enhance_full_image(&img, &mut g, &cfg).unwrap();
    assert!(tiling.coverage.iter().all(|&c| c == 1));
    for (x0, y0) in [(0, 0), (32, 0), (0, 32), (32, 32)] {
        let patch = image_tensor(&img.crop(x0, y0, 32, 32).unwrap());
        let pred = g.forward(&patch, Mode::Eval).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                assert_eq!(out.get(x0 + x, y0 + y), pred.at(0, 0, y, x));
            }
        }
    }
}

#[test]
fn small_images_are_reflect_padded() {
    let img = noise_image(20, 11, 7);
    let cfg = InferenceConfig {
        window: 16,
        step: 4,
        aggregation: Aggregation::Mean,
    };
    let (out, tiling) = enhance_full_image(&img, &mut Identity, &cfg).unwrap();
    assert_eq!(out.dims(), (20, 11));
    assert_eq!(tiling.windows_y, vec![0]);
    assert_eq!(out.data(), img.data());
}
