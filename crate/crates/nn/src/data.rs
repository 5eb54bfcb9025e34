//! Training data: aligned (latent, skeleton, orientation, weight, gray) planes
//! and random patch batches cut at a shared offset.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use fingergan_core::image::{GrayImage, Grid};
use fingergan_core::io::{load_gray_image, load_skeleton, read_grid};
use fingergan_core::rng::RandomSource;
use fingergan_core::synthesis::{PrintSamples, MANIFEST_HEADER};

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Reconstruction target selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Target {
    #[default]
    Skeleton,
    /// Gray rolled texture with ridges bright.
    Gray,
}

/// Full-size ground-truth planes shared by every latent of one print.
#[derive(Debug)]
pub struct PrintTruth {
    pub skeleton: Vec<f64>,
    /// Orientation encoded as `angle / π`.
    pub orientation: Vec<f64>,
    pub weights: Vec<f64>,
    pub gray: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub latent: Arc<Vec<f64>>,
    pub truth: Arc<PrintTruth>,
    pub width: usize,
    pub height: usize,
}

/// One batch of aligned patches, each `[n, 1, p, p]`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub latent: Tensor,
    pub target: Tensor,
    pub orientation: Tensor,
    pub weights: Tensor,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
}

fn encode_angles(angles: &[f64]) -> Vec<f64> {
    angles.iter().map(|a| a.rem_euclid(PI) / PI).collect()
}

fn check_dims(what: &str, got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got != want {
        return Err(NnError::Dataset(format!(
            "{what} is {}x{}, latent is {}x{}",
            got.0, got.1, want.0, want.1
        )));
    }
    Ok(())
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(NnError::Dataset("no training samples".into()));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Builds the set from in-memory synthesis output.
    pub fn from_prints(prints: &[PrintSamples]) -> Result<Self> {
        let mut samples = Vec::new();
        for p in prints {
            let gt = &p.ground_truth;
            let (w, h) = gt.skeleton.dims();
            let truth = Arc::new(PrintTruth {
                skeleton: gt.skeleton.to_grid().into_data(),
                orientation: encode_angles(gt.orientation.angles()),
                weights: gt.weight_map.data().to_vec(),
                gray: gt.rolled_texture.data().iter().map(|v| 1.0 - v).collect(),
            });
            for l in &p.latent_textures {
                check_dims("latent", l.dims(), (w, h))?;
                samples.push(Sample {
                    latent: Arc::new(l.data().to_vec()),
                    truth: truth.clone(),
                    width: w,
                    height: h,
                });
            }
        }
        Self::new(samples)
    }

    /// Loads a dataset directory through its `manifest.tsv`.
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join("manifest.tsv");
        let text = fs::read_to_string(&path).map_err(|e| NnError::io(&path, e))?;
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        match lines.next() {
            Some(h) if h == MANIFEST_HEADER => {}
            other => {
                return Err(NnError::Dataset(format!(
                    "{}: unexpected header {:?}",
                    path.display(),
                    other.unwrap_or("")
                )))
            }
        }
        let mut truths: HashMap<String, Arc<PrintTruth>> = HashMap::new();
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 6 {
                return Err(NnError::Dataset(format!(
                    "{}: row {} has {} columns",
                    path.display(),
                    lineno + 1,
                    cols.len()
                )));
            }
            let latent = load_gray_image(root.join(cols[0]))?;
            let dims = latent.dims();
            let key = format!("{}|{}|{}|{}", cols[2], cols[3], cols[4], cols[5]);
            let truth = match truths.get(&key) {
                Some(t) => t.clone(),
                None => {
                    let skel = load_skeleton(root.join(cols[2]))?;
                    let orient = read_grid(root.join(cols[3]))?;
                    let weights = read_grid(root.join(cols[4]))?;
                    let gray = load_gray_image(root.join(cols[5]))?;
                    check_dims(cols[2], skel.dims(), dims)?;
                    check_dims(cols[3], orient.dims(), dims)?;
                    check_dims(cols[4], weights.dims(), dims)?;
                    check_dims(cols[5], gray.dims(), dims)?;
                    let t = Arc::new(PrintTruth {
                        skeleton: skel.to_grid().into_data(),
                        orientation: encode_angles(orient.data()),
                        weights: weights.into_data(),
                        gray: gray.data().to_vec(),
                    });
                    truths.insert(key, t.clone());
                    t
                }
            };
            samples.push(Sample {
                latent: Arc::new(latent.data().to_vec()),
                truth,
                width: dims.0,
                height: dims.1,
            });
        }
        Self::new(samples)
    }

    /// Aligned `patch × patch` crops of the given samples at the given
    /// top-left offsets.
    pub fn batch_at(
        &self,
        indices: &[usize],
        offsets: &[(usize, usize)],
        patch: usize,
        target: Target,
        unit_weights: bool,
    ) -> Result<Batch> {
        let n = indices.len();
        let shape = [n, 1, patch, patch];
        let mut planes = [(); 4].map(|_| Tensor::zeros(shape));
        for (b, (&i, &(x0, y0))) in indices.iter().zip(offsets).enumerate() {
            let s = self
                .samples
                .get(i)
                .ok_or_else(|| NnError::Dataset(format!("sample {i} out of range")))?;
            if x0 + patch > s.width || y0 + patch > s.height {
                return Err(NnError::Dataset(format!(
                    "patch {patch} at ({x0}, {y0}) exceeds {}x{} sample {i}",
                    s.width, s.height
                )));
            }
            let tgt = match target {
                Target::Skeleton => &s.truth.skeleton,
                Target::Gray => &s.truth.gray,
            };
            let sources: [&[f64]; 4] = [&s.latent, tgt, &s.truth.orientation, &s.truth.weights];
            for (plane, src) in planes.iter_mut().zip(sources) {
                let dst = plane.sample_mut(b);
                for y in 0..patch {
                    let row = (y0 + y) * s.width + x0;
                    dst[y * patch..(y + 1) * patch].copy_from_slice(&src[row..row + patch]);
                }
            }
            if unit_weights {
                planes[3].sample_mut(b).iter_mut().for_each(|v| *v = 1.0);
            }
        }
        let [latent, target, orientation, weights] = planes;
        Ok(Batch {
            latent,
            target,
            orientation,
            weights,
            indices: indices.to_vec(),
        })
    }

    /// Random aligned crops of the given samples.
    pub fn random_batch(
        &self,
        indices: &[usize],
        patch: usize,
        target: Target,
        unit_weights: bool,
        rng: &mut RandomSource,
    ) -> Result<Batch> {
        let mut offsets = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = self
                .samples
                .get(i)
                .ok_or_else(|| NnError::Dataset(format!("sample {i} out of range")))?;
            if s.width < patch || s.height < patch {
                return Err(NnError::Dataset(format!(
                    "sample {i} ({}x{}) smaller than patch {patch}",
                    s.width, s.height
                )));
            }
            offsets.push((rng.index(s.width - patch + 1), rng.index(s.height - patch + 1)));
        }
        self.batch_at(indices, &offsets, patch, target, unit_weights)
    }
}

/// Converts a gray image into a `[1, 1, h, w]` tensor.
pub fn image_tensor(img: &GrayImage) -> Tensor {
    let (w, h) = img.dims();
    Tensor::from_vec([1, 1, h, w], img.data().to_vec()).expect("image dims match data")
}

/// Converts plane `n` of a `[_, 1, h, w]` tensor into a grid.
pub fn tensor_grid(t: &Tensor, n: usize) -> Grid {
    let (h, w) = t.spatial();
    Grid::new(w, h, t.sample(n).to_vec()).expect("tensor plane dims match")
}

#[cfg(test)]
mod tests {
    use super::*;
    use fingergan_core::synthesis::{build_training_set, generate_background, generate_print, SynthConfig};

    fn tiny_prints() -> Vec<PrintSamples> {
        let mut rng = RandomSource::new(11);
        let rolled = vec![generate_print((64, 64), &mut rng)];
        let bgs = vec![generate_background((64, 64), &mut rng)];
        let cfg = SynthConfig {
            latents_per_print: 2,
            ..Default::default()
        };
        build_training_set(&rolled, &bgs, 3, &cfg).unwrap()
    }

    #[test]
    fn crops_are_aligned() {
        let ds = Dataset::from_prints(&tiny_prints()).unwrap();
        assert_eq!(ds.len(), 2);
        let b = ds.batch_at(&[1], &[(5, 9)], 16, Target::Skeleton, false).unwrap();
        let s = &ds.samples()[1];
        assert_eq!(b.latent.at(0, 0, 3, 4), s.latent[(9 + 3) * 64 + 5 + 4]);
        assert_eq!(b.target.at(0, 0, 3, 4), s.truth.skeleton[(9 + 3) * 64 + 5 + 4]);
        assert_eq!(b.weights.at(0, 0, 0, 0), s.truth.weights[9 * 64 + 5]);
        let u = ds.batch_at(&[1], &[(5, 9)], 16, Target::Gray, true).unwrap();
        assert!(u.weights.data().iter().all(|&w| w == 1.0));
        assert_eq!(u.target.at(0, 0, 0, 0), s.truth.gray[9 * 64 + 5]);
        assert!(ds.batch_at(&[0], &[(50, 0)], 16, Target::Skeleton, false).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let prints = tiny_prints();
        let dir = tempfile::tempdir().unwrap();
        fingergan_core::synthesis::write_dataset(dir.path(), &prints, &SynthConfig::default()).unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        let mem = Dataset::from_prints(&prints).unwrap();
        assert_eq!(ds.len(), mem.len());
        let a = &ds.samples()[0];
        let b = &mem.samples()[0];
        assert_eq!(a.truth.skeleton, b.truth.skeleton);
        // grids are stored as f32
        for (x, y) in a.truth.weights.iter().zip(&b.truth.weights) {
            assert_eq!(*x, *y as f32 as f64);
        }
        // 8-bit PNG quantization on the latent
        for (x, y) in a.latent.iter().zip(b.latent.iter()) {
            assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
        }
        assert!(Arc::ptr_eq(&ds.samples()[0].truth, &ds.samples()[1].truth));
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(Dataset::new(Vec::new()).is_err());
    }
}
