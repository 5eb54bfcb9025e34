//! Differentiable layers with explicit forward/backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`, so a
//! backward call must follow the matching forward call.

use fingergan_core::rng::RandomSource;

use crate::error::{NnError, Result};
use crate::tensor::{gemm, MatRef, Tensor};

/// Initial weight standard deviation.
pub const INIT_STD: f64 = 0.02;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Batch-norm behaviour for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running statistics updated.
    Train,
    /// Batch statistics, running statistics left untouched.
    TrainFrozenStats,
    /// Running statistics.
    Eval,
}

/// A learnable array with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    fn new(name: String, value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Self { name, value, grad }
    }

    fn normal(name: String, len: usize, std: f64, rng: &mut RandomSource) -> Self {
        Self::new(name, (0..len).map(|_| std * rng.normal()).collect())
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Non-learnable persistent state (batch-norm running statistics).
#[derive(Debug, Clone)]
pub struct Buffer {
    pub name: String,
    pub value: Vec<f64>,
}

pub trait Layer {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor>;
    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, dy: &Tensor) -> Tensor;
    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Param)) {}
    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut Buffer)) {}
}

fn cached<'a>(cache: &'a Option<Tensor>, layer: &str) -> &'a Tensor {
    cache
        .as_ref()
        .unwrap_or_else(|| panic!("{layer}: backward called before forward"))
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    pad: usize,
    /// `[out_c, in_c, k, k]`
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut RandomSource,
    ) -> Self {
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: Param::normal(format!("{name}.weight"), out_c * in_c * k * k, INIT_STD, rng),
            bias: Param::new(format!("{name}.bias"), vec![0.0; out_c]),
            input: None,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        if hp < self.k || wp < self.k {
            return None;
        }
        Some(((hp - self.k) / self.stride + 1, (wp - self.k) / self.stride + 1))
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, ho: usize, wo: usize, col: &mut [f64]) {
        let (k, s, p) = (self.k, self.stride as isize, self.pad as isize);
        let plane = ho * wo;
        for c in 0..self.in_c {
            let src = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut col[((c * k + ky) * k + kx) * plane..][..plane];
                    for oy in 0..ho {
                        let iy = oy as isize * s + ky as isize - p;
                        let dst = &mut row[oy * wo..(oy + 1) * wo];
                        if iy < 0 || iy >= h as isize {
                            dst.iter_mut().for_each(|v| *v = 0.0);
                            continue;
                        }
                        let line = &src[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = ox as isize * s + kx as isize - p;
                            *d = if ix < 0 || ix >= w as isize {
                                0.0
                            } else {
                                line[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], h: usize, w: usize, ho: usize, wo: usize, dx: &mut [f64]) {
        let (k, s, p) = (self.k, self.stride as isize, self.pad as isize);
        let plane = ho * wo;
        for c in 0..self.in_c {
            let dst = &mut dx[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &col[((c * k + ky) * k + kx) * plane..][..plane];
                    for oy in 0..ho {
                        let iy = oy as isize * s + ky as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..wo {
                            let ix = ox as isize * s + kx as isize - p;
                            if ix >= 0 && ix < w as isize {
                                dst[iy as usize * w + ix as usize] += row[oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let [n, c, h, w] = x.shape();
        if c != self.in_c {
            return Err(NnError::Shape(format!(
                "{}: expected {} input channels, got {c}",
                self.weight.name, self.in_c
            )));
        }
        let (ho, wo) = self.output_size(h, w).ok_or_else(|| {
            NnError::Shape(format!("{}: input {h}x{w} smaller than kernel", self.weight.name))
        })?;
        let kk = self.in_c * self.k * self.k;
        let plane = ho * wo;
        let mut col = vec![0.0; kk * plane];
        let mut y = Tensor::zeros([n, self.out_c, ho, wo]);
        for b in 0..n {
            self.im2col(x.sample(b), h, w, ho, wo, &mut col);
            let out = y.sample_mut(b);
            for (o, chunk) in out.chunks_mut(plane).enumerate() {
                chunk.iter_mut().for_each(|v| *v = self.bias.value[o]);
            }
            gemm(
                1.0,
                MatRef::new(&self.weight.value, self.out_c, kk),
                MatRef::new(&col, kk, plane),
                1.0,
                out,
            );
        }
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = cached(&self.input, "conv2d");
        let [n, _, h, w] = x.shape();
        let [_, _, ho, wo] = dy.shape();
        let kk = self.in_c * self.k * self.k;
        let plane = ho * wo;
        let mut col = vec![0.0; kk * plane];
        let mut dcol = vec![0.0; kk * plane];
        let mut dx = Tensor::zeros(x.shape());
        for b in 0..n {
            let g = dy.sample(b);
            for (o, chunk) in g.chunks(plane).enumerate() {
                self.bias.grad[o] += chunk.iter().sum::<f64>();
            }
            self.im2col(x.sample(b), h, w, ho, wo, &mut col);
            gemm(
                1.0,
                MatRef::new(g, self.out_c, plane),
                MatRef::new(&col, kk, plane).t(),
                1.0,
                &mut self.weight.grad,
            );
            gemm(
                1.0,
                MatRef::new(&self.weight.value, self.out_c, kk).t(),
                MatRef::new(g, self.out_c, plane),
                0.0,
                &mut dcol,
            );
            self.col2im(&dcol, h, w, ho, wo, dx.sample_mut(b));
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// 2×2 stride-2 transposed convolution (exact spatial doubling).
#[derive(Debug, Clone)]
pub struct UpConv2x2 {
    in_c: usize,
    out_c: usize,
    /// `[in_c, out_c, 2, 2]`
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl UpConv2x2 {
    pub fn new(name: &str, in_c: usize, out_c: usize, rng: &mut RandomSource) -> Self {
        Self {
            in_c,
            out_c,
            weight: Param::normal(format!("{name}.weight"), in_c * out_c * 4, INIT_STD, rng),
            bias: Param::new(format!("{name}.bias"), vec![0.0; out_c]),
            input: None,
        }
    }
}

impl Layer for UpConv2x2 {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let [n, c, h, w] = x.shape();
        if c != self.in_c {
            return Err(NnError::Shape(format!(
                "{}: expected {} input channels, got {c}",
                self.weight.name, self.in_c
            )));
        }
        let plane = h * w;
        let rows = self.out_c * 4;
        let mut tmp = vec![0.0; rows * plane];
        let mut y = Tensor::zeros([n, self.out_c, 2 * h, 2 * w]);
        for b in 0..n {
            gemm(
                1.0,
                MatRef::new(&self.weight.value, self.in_c, rows).t(),
                MatRef::new(x.sample(b), self.in_c, plane),
                0.0,
                &mut tmp,
            );
            let out = y.sample_mut(b);
            for o in 0..self.out_c {
                let bias = self.bias.value[o];
                for a in 0..2 {
                    for bb in 0..2 {
                        let src = &tmp[(o * 4 + a * 2 + bb) * plane..][..plane];
                        for i in 0..h {
                            for j in 0..w {
                                out[(o * 2 * h + 2 * i + a) * 2 * w + 2 * j + bb] =
                                    src[i * w + j] + bias;
                            }
                        }
                    }
                }
            }
        }
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = cached(&self.input, "upconv");
        let [n, _, h, w] = x.shape();
        let plane = h * w;
        let rows = self.out_c * 4;
        let mut gathered = vec![0.0; rows * plane];
        let mut dx = Tensor::zeros(x.shape());
        for b in 0..n {
            let g = dy.sample(b);
            for o in 0..self.out_c {
                let mut bsum = 0.0;
                for a in 0..2 {
                    for bb in 0..2 {
                        let dst = &mut gathered[(o * 4 + a * 2 + bb) * plane..][..plane];
                        for i in 0..h {
                            for j in 0..w {
                                let v = g[(o * 2 * h + 2 * i + a) * 2 * w + 2 * j + bb];
                                dst[i * w + j] = v;
                                bsum += v;
                            }
                        }
                    }
                }
                self.bias.grad[o] += bsum;
            }
            gemm(
                1.0,
                MatRef::new(x.sample(b), self.in_c, plane),
                MatRef::new(&gathered, rows, plane).t(),
                1.0,
                &mut self.weight.grad,
            );
            gemm(
                1.0,
                MatRef::new(&self.weight.value, self.in_c, rows),
                MatRef::new(&gathered, rows, plane),
                0.0,
                dx.sample_mut(b),
            );
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Buffer,
    pub running_var: Buffer,
    // cache: normalized input, per-channel 1/std, mode used
    xhat: Option<Tensor>,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(format!("{name}.gamma"), vec![1.0; channels]),
            beta: Param::new(format!("{name}.beta"), vec![0.0; channels]),
            running_mean: Buffer {
                name: format!("{name}.running_mean"),
                value: vec![0.0; channels],
            },
            running_var: Buffer {
                name: format!("{name}.running_var"),
                value: vec![1.0; channels],
            },
            xhat: None,
            inv_std: Vec::new(),
            batch_stats: true,
        }
    }
}

impl Layer for BatchNorm2d {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [n, c, h, w] = x.shape();
        if c != self.channels {
            return Err(NnError::Shape(format!(
                "{}: expected {} channels, got {c}",
                self.gamma.name, self.channels
            )));
        }
        let plane = h * w;
        let count = (n * plane) as f64;
        let batch_stats = mode != Mode::Eval;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        if batch_stats {
            for b in 0..n {
                for (ch, chunk) in x.sample(b).chunks(plane).enumerate() {
                    mean[ch] += chunk.iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= count);
            for b in 0..n {
                for (ch, chunk) in x.sample(b).chunks(plane).enumerate() {
                    var[ch] += chunk.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= count);
            if mode == Mode::Train {
                let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                for ch in 0..c {
                    let rm = &mut self.running_mean.value[ch];
                    *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean[ch];
                    let rv = &mut self.running_var.value[ch];
                    *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * var[ch] * unbias;
                }
            }
        } else {
            mean.copy_from_slice(&self.running_mean.value);
            var.copy_from_slice(&self.running_var.value);
        }
        self.inv_std = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        for b in 0..n {
            let src = x.sample(b);
            let xh = xhat.sample_mut(b);
            for ch in 0..c {
                let (m, s) = (mean[ch], self.inv_std[ch]);
                for i in ch * plane..(ch + 1) * plane {
                    xh[i] = (src[i] - m) * s;
                }
            }
            let out = y.sample_mut(b);
            for ch in 0..c {
                let (g, be) = (self.gamma.value[ch], self.beta.value[ch]);
                for i in ch * plane..(ch + 1) * plane {
                    out[i] = g * xh[i] + be;
                }
            }
        }
        self.xhat = Some(xhat);
        self.batch_stats = batch_stats;
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let xhat = cached(&self.xhat, "batchnorm");
        let [n, c, h, w] = xhat.shape();
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for b in 0..n {
            let (g, xh) = (dy.sample(b), xhat.sample(b));
            for ch in 0..c {
                for i in ch * plane..(ch + 1) * plane {
                    dgamma[ch] += g[i] * xh[i];
                    dbeta[ch] += g[i];
                }
            }
        }
        let mut dx = Tensor::zeros(xhat.shape());
        for b in 0..n {
            let (g, xh) = (dy.sample(b), xhat.sample(b));
            let out = dx.sample_mut(b);
            for ch in 0..c {
                let scale = self.gamma.value[ch] * self.inv_std[ch];
                for i in ch * plane..(ch + 1) * plane {
                    out[i] = if self.batch_stats {
                        scale * (g[i] - dbeta[ch] / count - xh[i] * dgamma[ch] / count)
                    } else {
                        scale * g[i]
                    };
                }
            }
        }
        for ch in 0..c {
            self.gamma.grad[ch] += dgamma[ch];
            self.beta.grad[ch] += dbeta[ch];
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Buffer)) {
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

#[derive(Debug, Clone)]
pub struct LeakyRelu {
    slope: f64,
    input: Option<Tensor>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        Self { slope, input: None }
    }
}

impl Layer for LeakyRelu {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let s = self.slope;
        self.input = Some(x.clone());
        Ok(x.map(|v| if v > 0.0 { v } else { s * v }))
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = cached(&self.input, "leaky relu");
        let mut dx = dy.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            if v <= 0.0 {
                *d *= self.slope;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid {
    output: Option<Tensor>,
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Layer for Sigmoid {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = x.map(sigmoid);
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let y = cached(&self.output, "sigmoid");
        let mut dx = dy.clone();
        for (d, &s) in dx.data_mut().iter_mut().zip(y.data()) {
            *d *= s * (1.0 - s);
        }
        dx
    }
}

/// Per-sample, per-channel spatial mean: `[n, c, h, w] → [n, c, 1, 1]`.
#[derive(Debug, Clone, Default)]
pub struct SpatialMean {
    shape: Option<[usize; 4]>,
}

impl Layer for SpatialMean {
    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let [n, c, h, w] = x.shape();
        let plane = h * w;
        let data = x
            .data()
            .chunks(plane)
            .map(|ch| ch.iter().sum::<f64>() / plane as f64)
            .collect();
        self.shape = Some(x.shape());
        Tensor::from_vec([n, c, 1, 1], data)
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let shape = self.shape.expect("spatial mean: backward called before forward");
        let plane = shape[2] * shape[3];
        let mut dx = Tensor::zeros(shape);
        for (chunk, &g) in dx.data_mut().chunks_mut(plane).zip(dy.data()) {
            chunk.iter_mut().for_each(|v| *v = g / plane as f64);
        }
        dx
    }
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential {
    layers: Vec<Box<dyn Layer + Send>>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, layer: impl Layer + Send + 'static) -> Self {
        self.layers.push(Box::new(layer));
        self
    }

    /// Convolution, batch norm, leaky ReLU.
    #[allow(clippy::too_many_arguments)]
    pub fn conv_block(
        self,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        slope: f64,
        rng: &mut RandomSource,
    ) -> Self {
        self.push(Conv2d::new(&format!("{name}.conv"), in_c, out_c, k, stride, pad, rng))
            .push(BatchNorm2d::new(&format!("{name}.bn"), out_c))
            .push(LeakyRelu::new(slope))
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, mode)?;
        }
        Ok(h)
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let mut g = dy.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g);
        }
        g
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for l in &mut self.layers {
            l.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Buffer)) {
        for l in &mut self.layers {
            l.visit_buffers(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tensor(shape: [usize; 4], rng: &mut RandomSource) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
    }

    /// Checks input and parameter gradients of `loss = Σ r ⊙ layer(x)` by
    /// central differences.
    fn check_layer(layer: &mut dyn Layer, x: &Tensor, mode: Mode, rng: &mut RandomSource) {
        let y = layer.forward(x, mode).unwrap();
        let r = random_tensor(y.shape(), rng);
        // finite differences must not move running statistics
        let fd_mode = if mode == Mode::Eval { Mode::Eval } else { Mode::TrainFrozenStats };
        let loss = |layer: &mut dyn Layer, x: &Tensor| -> f64 {
            let y = layer.forward(x, fd_mode).unwrap();
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        layer.visit_params(&mut |p| p.zero_grad());
        layer.forward(x, fd_mode).unwrap();
        let dx = layer.backward(&r);
        let h = 1e-5;
        for i in (0..x.len()).step_by(x.len() / 7 + 1) {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(layer, &xp) - loss(layer, &xm)) / (2.0 * h);
            let an = dx.data()[i];
            assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "dx[{i}]: fd {fd} vs {an}");
        }
        let mut grads = Vec::new();
        layer.visit_params(&mut |p| grads.push(p.grad.clone()));
        for (pi, g) in grads.iter().enumerate() {
            for j in (0..g.len()).step_by(g.len() / 5 + 1) {
                let mut eval = |delta: f64| {
                    let mut k = 0;
                    layer.visit_params(&mut |p| {
                        if k == pi {
                            p.value[j] += delta;
                        }
                        k += 1;
                    });
                    let v = loss(layer, x);
                    let mut k = 0;
                    layer.visit_params(&mut |p| {
                        if k == pi {
                            p.value[j] -= delta;
                        }
                        k += 1;
                    });
                    v
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                assert!(
                    (fd - g[j]).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "param {pi}[{j}]: fd {fd} vs {}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn conv_gradients() {
        let mut rng = RandomSource::new(1);
        for &(k, s, p) in &[(3, 1, 1), (2, 2, 0), (4, 2, 1), (3, 1, 0)] {
            let mut conv = Conv2d::new("c", 3, 4, k, s, p, &mut rng);
            conv.weight.value.iter_mut().for_each(|v| *v *= 20.0);
            let x = random_tensor([2, 3, 8, 8], &mut rng);
            check_layer(&mut conv, &x, Mode::Train, &mut rng);
        }
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = RandomSource::new(2);
        let mut conv = Conv2d::new("c", 2, 3, 4, 2, 1, &mut rng);
        conv.bias.value = vec![0.1, -0.2, 0.3];
        let x = random_tensor([1, 2, 6, 6], &mut rng);
        let y = conv.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), [1, 3, 3, 3]);
        for o in 0..3 {
            for oy in 0..3 {
                for ox in 0..3 {
                    let mut want = conv.bias.value[o];
                    for c in 0..2 {
                        for ky in 0..4 {
                            for kx in 0..4 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if (0..6).contains(&iy) && (0..6).contains(&ix) {
                                    want += conv.weight.value[((o * 2 + c) * 4 + ky) * 4 + kx]
                                        * x.at(0, c, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    assert!((y.at(0, o, oy, ox) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn upconv_doubles_and_differentiates() {
        let mut rng = RandomSource::new(3);
        let mut up = UpConv2x2::new("u", 3, 2, &mut rng);
        up.weight.value.iter_mut().for_each(|v| *v *= 20.0);
        let x = random_tensor([2, 3, 4, 5], &mut rng);
        let y = up.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), [2, 2, 8, 10]);
        // y[o, 2i+a, 2j+b] = Σ_c x[c,i,j] W[c,o,a,b]
        let want: f64 = (0..3).map(|c| x.at(1, c, 2, 3) * up.weight.value[(c * 2 + 1) * 4 + 2]).sum();
        assert!((y.at(1, 1, 5, 6) - want).abs() < 1e-12);
        check_layer(&mut up, &x, Mode::Train, &mut rng);
    }

    #[test]
    fn batchnorm_gradients_in_both_modes() {
        let mut rng = RandomSource::new(4);
        let mut bn = BatchNorm2d::new("bn", 3);
        bn.gamma.value = vec![1.5, -0.7, 0.3];
        bn.beta.value = vec![0.2, 0.0, -1.0];
        let x = random_tensor([3, 3, 4, 4], &mut rng);
        check_layer(&mut bn, &x, Mode::TrainFrozenStats, &mut rng);
        bn.running_mean.value = vec![0.1, 0.2, -0.3];
        bn.running_var.value = vec![0.5, 2.0, 1.0];
        check_layer(&mut bn, &x, Mode::Eval, &mut rng);
    }

    #[test]
    fn batchnorm_running_statistics() {
        let mut bn = BatchNorm2d::new("bn", 1);
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = bn.forward(&x, Mode::TrainFrozenStats).unwrap();
        assert_eq!(bn.running_mean.value, vec![0.0]);
        assert!(y.data().iter().sum::<f64>().abs() < 1e-12);
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean.value[0] - 0.25).abs() < 1e-12);
        // unbiased variance 5/3
        assert!((bn.running_var.value[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn activations_and_mean() {
        let mut rng = RandomSource::new(5);
        let x = random_tensor([2, 2, 3, 3], &mut rng);
        check_layer(&mut LeakyRelu::new(0.2), &x, Mode::Train, &mut rng);
        check_layer(&mut Sigmoid::default(), &x, Mode::Train, &mut rng);
        check_layer(&mut SpatialMean::default(), &x, Mode::Train, &mut rng);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn sequential_block_gradients() {
        let mut rng = RandomSource::new(6);
        let mut seq = Sequential::new().conv_block("b", 2, 3, 3, 1, 1, 0.2, &mut rng).push(Sigmoid::default());
        let x = random_tensor([2, 2, 5, 5], &mut rng);
        check_layer(&mut seq, &x, Mode::TrainFrozenStats, &mut rng);
    }
}
