//! Alternating discriminator/generator training.
//!
//! Batch composition and crop offsets are pure functions of the seed and the
//! iteration number, so a resumed run replays exactly the batches an
//! uninterrupted run would have seen.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use fingergan_core::rng::RandomSource;

use crate::checkpoint::{collect, restore, Checkpoint};
use crate::data::{Batch, Dataset, Target};
use crate::error::{NnError, Result};
use crate::layers::Mode;
use crate::loss::{
    discriminator_loss, generator_adversarial_loss, reconstruction_loss, reconstruction_per_sample,
    LossConfig,
};
use crate::network::{discriminator_input, Discriminator, Generator, Network, NetworkSpec};
use crate::optim::{Adam, AdamConfig};
use crate::tensor::Tensor;

pub const METRICS_HEADER: &str = "iter\td_loss\tg_adv\tL_r\td_acc_real\td_acc_fake";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";

/// Ablation switches; all off is the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablation {
    /// Reconstruction loss only.
    pub no_discriminator: bool,
    /// Gray rolled texture as the reconstruction target.
    pub gray_gt: bool,
    /// Unit weight map.
    pub no_weight: bool,
}

impl Ablation {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_discriminator {
            parts.push("no-discriminator");
        }
        if self.gray_gt {
            parts.push("gray-gt");
        }
        if self.no_weight {
            parts.push("no-weight");
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join(",")
        }
    }

    pub fn target(&self) -> Target {
        if self.gray_gt {
            Target::Gray
        } else {
            Target::Skeleton
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_iterations: u64,
    /// 0 disables periodic checkpoints (a final one is still written).
    pub checkpoint_every: u64,
    pub seed: u64,
    pub loss: LossConfig,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 16,
            max_iterations: 50_000,
            checkpoint_every: 1000,
            seed: 0,
            loss: LossConfig::default(),
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NnError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch size must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(NnError::Config("max iterations must be positive".into()));
        }
        self.loss.validate()
    }

    /// Settings a resumed run must share with the run that wrote the checkpoint.
    pub fn resume_tag(&self) -> String {
        format!(
            "lr={} batch={} eta={} saturating={} ablation={}",
            self.learning_rate,
            self.batch_size,
            self.loss.eta,
            self.loss.saturating,
            self.ablation.label()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub iteration: u64,
    /// NaN when the discriminator is disabled (same for the other D fields).
    pub d_loss: f64,
    pub g_adv: f64,
    pub l_r: f64,
    pub d_acc_real: f64,
    pub d_acc_fake: f64,
}

impl StepMetrics {
    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.iteration, self.d_loss, self.g_adv, self.l_r, self.d_acc_real, self.d_acc_fake
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorStats {
    pub loss: f64,
    pub acc_real: f64,
    pub acc_fake: f64,
}

pub struct Trainer {
    pub spec: NetworkSpec,
    pub cfg: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub g_opt: Adam,
    pub d_opt: Adam,
    /// Completed iterations.
    pub iteration: u64,
}

fn scores(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

impl Trainer {
    pub fn new(spec: NetworkSpec, cfg: TrainConfig) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        let mut rng = RandomSource::new(cfg.seed).derive(u64::MAX);
        let generator = Generator::new(&spec.generator, &mut rng);
        let discriminator = Discriminator::new(&spec.discriminator, spec.patch_size, &mut rng);
        let adam = AdamConfig {
            lr: cfg.learning_rate,
            ..Default::default()
        };
        Ok(Self {
            spec,
            cfg,
            generator,
            discriminator,
            g_opt: Adam::new(adam),
            d_opt: Adam::new(adam),
            iteration: 0,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint, cfg: TrainConfig) -> Result<Self> {
        if ck.seed != cfg.seed || ck.train_tag != cfg.resume_tag() {
            return Err(NnError::Config(format!(
                "checkpoint was written with seed={} [{}], current run has seed={} [{}]",
                ck.seed,
                ck.train_tag,
                cfg.seed,
                cfg.resume_tag()
            )));
        }
        let mut t = Self::new(ck.spec, cfg)?;
        restore(&mut t.generator, &ck.g_params, &ck.g_buffers)?;
        restore(&mut t.discriminator, &ck.d_params, &ck.d_buffers)?;
        t.g_opt = ck.g_opt.clone();
        t.d_opt = ck.d_opt.clone();
        t.iteration = ck.iteration;
        Ok(t)
    }

    pub fn checkpoint(&mut self) -> Checkpoint {
        let (g_params, g_buffers) = collect(&mut self.generator);
        let (d_params, d_buffers) = collect(&mut self.discriminator);
        Checkpoint {
            spec: self.spec,
            iteration: self.iteration,
            seed: self.cfg.seed,
            train_tag: self.cfg.resume_tag(),
            g_params,
            g_buffers,
            d_params,
            d_buffers,
            g_opt: self.g_opt.clone(),
            d_opt: self.d_opt.clone(),
        }
    }

    /// Sample indices and crops for 0-based iteration `it`: epochs are
    /// seed-derived permutations walked in order.
    pub fn batch_for(&self, data: &Dataset, it: u64) -> Result<Batch> {
        let n = data.len() as u64;
        let b = self.cfg.batch_size as u64;
        let root = RandomSource::new(self.cfg.seed);
        let mut indices = Vec::with_capacity(b as usize);
        let mut perm_epoch = u64::MAX;
        let mut perm: Vec<usize> = Vec::new();
        for k in 0..b {
            let pos = it * b + k;
            let epoch = pos / n;
            if epoch != perm_epoch {
                perm = (0..data.len()).collect();
                root.derive(epoch << 1).shuffle(&mut perm);
                perm_epoch = epoch;
            }
            indices.push(perm[(pos % n) as usize]);
        }
        let mut crops = root.derive((it << 1) | 1);
        data.random_batch(
            &indices,
            self.spec.patch_size,
            self.cfg.ablation.target(),
            self.cfg.ablation.no_weight,
            &mut crops,
        )
    }

    /// Generator forward in training mode; must precede the step functions.
    pub fn generate(&mut self, batch: &Batch) -> Result<Tensor> {
        self.generator.forward(&batch.latent, Mode::Train)
    }

    fn joint_input(&self, batch: &Batch, fake: &Tensor) -> Result<Tensor> {
        let real = discriminator_input(&batch.target, &batch.orientation)?;
        let fake = discriminator_input(fake, &batch.orientation)?;
        Tensor::concat_batch(&[&real, &fake])
    }

    /// One discriminator update on `[real; fake]`; the generator is untouched.
    pub fn discriminator_step(&mut self, batch: &Batch, fake: &Tensor) -> Result<DiscriminatorStats> {
        let n = fake.batch();
        let x = self.joint_input(batch, fake)?;
        self.discriminator.zero_grad();
        let s = scores(&self.discriminator.forward(&x, Mode::Train)?);
        let (loss, dr, df) = discriminator_loss(&s[..n], &s[n..]);
        let grad = Tensor::from_vec([2 * n, 1, 1, 1], dr.into_iter().chain(df).collect())?;
        self.discriminator.backward(&grad);
        self.d_opt.step(&mut self.discriminator);
        Ok(DiscriminatorStats {
            loss,
            acc_real: s[..n].iter().filter(|&&v| v > 0.5).count() as f64 / n as f64,
            acc_fake: s[n..].iter().filter(|&&v| v < 0.5).count() as f64 / n as f64,
        })
    }

    /// One generator update on `g_adv + η·L_r` (or `L_r` alone without a
    /// discriminator). Returns `(g_adv, L_r)`; the discriminator is untouched.
    pub fn generator_step(&mut self, batch: &Batch, fake: &Tensor) -> Result<(f64, f64)> {
        let n = fake.batch();
        let (l_r, mut grad) = reconstruction_loss(fake, &batch.target, &batch.weights)?;
        let mut g_adv = f64::NAN;
        if !self.cfg.ablation.no_discriminator {
            let eta = self.cfg.loss.eta;
            grad.data_mut().iter_mut().for_each(|g| *g *= eta);
            let x = self.joint_input(batch, fake)?;
            let s = scores(&self.discriminator.forward(&x, Mode::TrainFrozenStats)?);
            let (adv, dfake) = generator_adversarial_loss(&s[n..], self.cfg.loss.saturating);
            g_adv = adv;
            let ds = Tensor::from_vec([2 * n, 1, 1, 1], vec![0.0; n].into_iter().chain(dfake).collect())?;
            let dx = self.discriminator.backward(&ds);
            // discriminator gradients from this pass are discarded
            self.discriminator.zero_grad();
            let dfake_in = dx.slice_batch(n, 2 * n).split_channels(&[1, 1]).swap_remove(0);
            grad.add_assign(&dfake_in);
        }
        self.generator.zero_grad();
        self.generator.backward(&grad);
        self.g_opt.step(&mut self.generator);
        Ok((g_adv, l_r))
    }

    /// One full iteration on the next batch.
    pub fn step(&mut self, data: &Dataset) -> Result<StepMetrics> {
        let batch = self.batch_for(data, self.iteration)?;
        self.step_on(&batch)
    }

    pub fn step_on(&mut self, batch: &Batch) -> Result<StepMetrics> {
        let fake = self.generate(batch)?;
        let d = if self.cfg.ablation.no_discriminator {
            DiscriminatorStats {
                loss: f64::NAN,
                acc_real: f64::NAN,
                acc_fake: f64::NAN,
            }
        } else {
            self.discriminator_step(batch, &fake)?
        };
        let (g_adv, l_r) = self.generator_step(batch, &fake)?;
        self.iteration += 1;
        let m = StepMetrics {
            iteration: self.iteration,
            d_loss: d.loss,
            g_adv,
            l_r,
            d_acc_real: d.acc_real,
            d_acc_fake: d.acc_fake,
        };
        let check = [("d_loss", d.loss), ("g_adv", g_adv), ("L_r", l_r)];
        for (name, v) in check {
            let expected_nan = self.cfg.ablation.no_discriminator && name != "L_r";
            if !v.is_finite() && !expected_nan {
                return Err(NnError::NonFinite {
                    iteration: self.iteration,
                    batch: batch.indices.clone(),
                    detail: format!("{name} = {v}"),
                });
            }
        }
        Ok(m)
    }

    /// Per-sample weighted L1 of the evaluation-mode generator on the given
    /// batch (no parameter or statistic changes).
    pub fn evaluate(&mut self, batch: &Batch) -> Result<Vec<f64>> {
        let out = self.generator.forward(&batch.latent, Mode::Eval)?;
        reconstruction_per_sample(&out, &batch.target, &batch.weights)
    }
}

/// Center crops of every sample with the weights of `target` (held-out scoring).
pub fn center_batch(data: &Dataset, patch: usize, ablation: Ablation, indices: &[usize]) -> Result<Batch> {
    let offsets: Vec<(usize, usize)> = indices
        .iter()
        .map(|&i| {
            let s = &data.samples()[i];
            (s.width.saturating_sub(patch) / 2, s.height.saturating_sub(patch) / 2)
        })
        .collect();
    data.batch_at(indices, &offsets, patch, ablation.target(), ablation.no_weight)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<StepMetrics>,
    pub checkpoints: Vec<PathBuf>,
    pub final_iteration: u64,
}

fn write_line(path: &Path, line: &str, append: bool) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(path)
        .map_err(|e| NnError::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| NnError::io(path, e))
}

/// Runs `trainer` up to `cfg.max_iterations`, appending to `run_dir/metrics.tsv`
/// and writing checkpoints; a fresh trainer starts a new log.
pub fn train(trainer: &mut Trainer, data: &Dataset, run_dir: &Path) -> Result<TrainOutcome> {
    train_with_progress(trainer, data, run_dir, &mut |_| {})
}

/// [`train`], calling `progress` after every logged step.
pub fn train_with_progress(
    trainer: &mut Trainer,
    data: &Dataset,
    run_dir: &Path,
    progress: &mut dyn FnMut(&StepMetrics),
) -> Result<TrainOutcome> {
    fs::create_dir_all(run_dir).map_err(|e| NnError::io(run_dir, e))?;
    let log = run_dir.join(METRICS_FILE);
    if trainer.iteration == 0 || !log.exists() {
        write_line(
            &log,
            &format!("# ablation={} seed={}", trainer.cfg.ablation.label(), trainer.cfg.seed),
            false,
        )?;
        write_line(&log, METRICS_HEADER, true)?;
    } else {
        truncate_log(&log, trainer.iteration)?;
    }
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    let save = |t: &mut Trainer, checkpoints: &mut Vec<PathBuf>| -> Result<()> {
        let ck = t.checkpoint();
        let path = run_dir.join(format!("ckpt-{:06}.ckpt", t.iteration));
        ck.save(&path)?;
        ck.save(&run_dir.join(LATEST_CHECKPOINT))?;
        checkpoints.push(path);
        Ok(())
    };
    while trainer.iteration < trainer.cfg.max_iterations {
        let m = trainer.step(data)?;
        write_line(&log, &m.tsv_row(), true)?;
        progress(&m);
        metrics.push(m);
        let every = trainer.cfg.checkpoint_every;
        if every > 0 && trainer.iteration % every == 0 && trainer.iteration < trainer.cfg.max_iterations {
            save(trainer, &mut checkpoints)?;
        }
    }
    save(trainer, &mut checkpoints)?;
    Ok(TrainOutcome {
        metrics,
        checkpoints,
        final_iteration: trainer.iteration,
    })
}

/// Drops log rows past `iteration` (left by a run that outlived its last checkpoint).
fn truncate_log(path: &Path, iteration: u64) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| NnError::io(path, e))?;
    let mut kept = String::new();
    for line in text.lines() {
        let row_iter = line.split('\t').next().and_then(|f| f.parse::<u64>().ok());
        if matches!(row_iter, Some(i) if i > iteration) {
            continue;
        }
        kept.push_str(line);
        kept.push('\n');
    }
    fs::write(path, kept).map_err(|e| NnError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_labels() {
        assert_eq!(Ablation::default().label(), "full");
        let a = Ablation {
            no_weight: true,
            gray_gt: true,
            ..Default::default()
        };
        assert_eq!(a.label(), "gray-gt,no-weight");
        assert_eq!(a.target(), Target::Gray);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
    }
}
