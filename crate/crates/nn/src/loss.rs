//! Minutia-weighted reconstruction loss and the adversarial losses, each with
//! its analytic gradient.

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Score clamp for the logarithms.
pub const SCORE_EPS: f64 = 1e-7;
pub const DEFAULT_ETA: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub eta: f64,
    /// Generator term `log(1 - D(fake))` instead of `-log D(fake)`.
    pub saturating: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            saturating: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(NnError::Config(format!("eta must be non-negative, got {}", self.eta)));
        }
        Ok(())
    }
}

fn check_same(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NnError::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Batch mean of `Σ w |g - out|` and its gradient with respect to `out`.
/// The gradient of `|·|` at zero is taken as zero.
pub fn reconstruction_loss(out: &Tensor, target: &Tensor, weights: &Tensor) -> Result<(f64, Tensor)> {
    check_same(out, target, "reconstruction target")?;
    check_same(out, weights, "reconstruction weights")?;
    let n = out.batch().max(1) as f64;
    let mut grad = Tensor::zeros(out.shape());
    let mut total = 0.0;
    for (((gv, &o), &t), &w) in grad
        .data_mut()
        .iter_mut()
        .zip(out.data())
        .zip(target.data())
        .zip(weights.data())
    {
        let d = o - t;
        total += w * d.abs();
        *gv = w * sign(d) / n;
    }
    Ok((total / n, grad))
}

/// Per-sample weighted L1 (`Σ w |g - out|` for each batch entry).
pub fn reconstruction_per_sample(out: &Tensor, target: &Tensor, weights: &Tensor) -> Result<Vec<f64>> {
    check_same(out, target, "reconstruction target")?;
    check_same(out, weights, "reconstruction weights")?;
    Ok((0..out.batch())
        .map(|b| {
            out.sample(b)
                .iter()
                .zip(target.sample(b))
                .zip(weights.sample(b))
                .map(|((o, t), w)| w * (o - t).abs())
                .sum()
        })
        .collect())
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clamp(s: f64) -> f64 {
    s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

/// Derivative of a clamped log term: zero where the clamp is active.
fn active(s: f64) -> f64 {
    if (SCORE_EPS..=1.0 - SCORE_EPS).contains(&s) {
        1.0
    } else {
        0.0
    }
}

/// Discriminator loss `mean(-log D(real)) + mean(-log(1 - D(fake)))` with
/// gradients for both score vectors.
pub fn discriminator_loss(real: &[f64], fake: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let (nr, nf) = (real.len().max(1) as f64, fake.len().max(1) as f64);
    let mut loss = 0.0;
    let dr = real
        .iter()
        .map(|&s| {
            loss -= clamp(s).ln() / nr;
            -active(s) / (clamp(s) * nr)
        })
        .collect();
    let df = fake
        .iter()
        .map(|&s| {
            loss -= (1.0 - clamp(s)).ln() / nf;
            active(s) / ((1.0 - clamp(s)) * nf)
        })
        .collect();
    (loss, dr, df)
}

/// Generator adversarial term and its gradient with respect to the fake scores.
pub fn generator_adversarial_loss(fake: &[f64], saturating: bool) -> (f64, Vec<f64>) {
    let n = fake.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = fake
        .iter()
        .map(|&s| {
            let c = clamp(s);
            if saturating {
                loss += (1.0 - c).ln() / n;
                -active(s) / ((1.0 - c) * n)
            } else {
                loss -= c.ln() / n;
                -active(s) / (c * n)
            }
        })
        .collect();
    (loss, grad)
}

/// Both adversarial losses: `(d_loss, g_loss)` with the non-saturating generator term.
pub fn adversarial_losses(real: &[f64], fake: &[f64]) -> (f64, f64) {
    (discriminator_loss(real, fake).0, generator_adversarial_loss(fake, false).0)
}

pub fn total_generator_loss(g_adv: f64, l_r: f64, cfg: &LossConfig) -> f64 {
    g_adv + cfg.eta * l_r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruction_examples() {
        let g = Tensor::from_vec([1, 1, 2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let ones = Tensor::filled([1, 1, 2, 2], 1.0);
        assert_eq!(reconstruction_loss(&g, &g, &ones).unwrap().0, 0.0);
        let half = Tensor::filled([1, 1, 2, 2], 0.5);
        assert!((reconstruction_loss(&half, &g, &ones).unwrap().0 - 2.0).abs() < 1e-15);
        let twos = Tensor::filled([1, 1, 2, 2], 2.0);
        assert!((reconstruction_loss(&half, &g, &twos).unwrap().0 - 4.0).abs() < 1e-15);
        assert!(reconstruction_loss(&half, &Tensor::zeros([1, 1, 2, 3]), &ones).is_err());
    }

    #[test]
    fn adversarial_examples() {
        let (d, g) = adversarial_losses(&[0.5], &[0.5]);
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((g - 2f64.ln()).abs() < 1e-12);
        let (d, _) = adversarial_losses(&[1.0], &[0.0]);
        assert!(d < 1e-6);
        let (d, _) = adversarial_losses(&[0.0], &[1.0]);
        assert!(d.is_finite());
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let (_, g) = adversarial_losses(&[0.5], &[i as f64 / 100.0]);
            assert!(g < prev);
            prev = g;
        }
        assert!((total_generator_loss(1.0, 100.0, &LossConfig::default()) - 1.1).abs() < 1e-12);
    }
}
