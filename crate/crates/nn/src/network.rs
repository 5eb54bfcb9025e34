//! Skip-connected encoder-decoder generator and the two-channel discriminator.

use fingergan_core::rng::RandomSource;
use sha2::{Digest, Sha256};

use crate::error::{NnError, Result};
use crate::layers::{
    BatchNorm2d, Buffer, Conv2d, Layer, LeakyRelu, Mode, Param, Sequential, Sigmoid, SpatialMean,
    UpConv2x2,
};
use crate::tensor::Tensor;

pub const DEFAULT_PATCH: usize = 192;
pub const DEFAULT_CHANNELS: usize = 64;
pub const LEAKY_SLOPE: f64 = 0.2;
/// Encoder depth: inputs must be divisible by 2^DOWNSAMPLES.
pub const DOWNSAMPLES: usize = 4;
/// Smallest patch surviving the discriminator's six halvings.
pub const MIN_PATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    /// Kernel count of C1; doubled at every downsampling.
    pub base_channels: usize,
    pub leaky_slope: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            base_channels: DEFAULT_CHANNELS,
            leaky_slope: LEAKY_SLOPE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminatorSpec {
    pub base_channels: usize,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self {
            base_channels: DEFAULT_CHANNELS,
            leaky_slope: LEAKY_SLOPE,
        }
    }
}

/// Both architectures plus the training patch size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSpec {
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub patch_size: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            generator: GeneratorSpec::default(),
            discriminator: DiscriminatorSpec::default(),
            patch_size: DEFAULT_PATCH,
        }
    }
}

impl NetworkSpec {
    /// Reduced spec for CPU-scale experiments.
    pub fn toy(patch_size: usize, base_channels: usize) -> Self {
        Self {
            generator: GeneratorSpec {
                base_channels,
                ..Default::default()
            },
            discriminator: DiscriminatorSpec {
                base_channels,
                ..Default::default()
            },
            patch_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 1 << DOWNSAMPLES;
        if self.patch_size == 0 || self.patch_size % unit != 0 {
            return Err(NnError::Config(format!(
                "patch size {} is not a positive multiple of {unit}",
                self.patch_size
            )));
        }
        if self.patch_size < MIN_PATCH {
            return Err(NnError::Config(format!(
                "patch size {} is below the discriminator minimum {MIN_PATCH}",
                self.patch_size
            )));
        }
        if self.generator.base_channels == 0 || self.discriminator.base_channels == 0 {
            return Err(NnError::Config("channel counts must be positive".into()));
        }
        for s in [self.generator.leaky_slope, self.discriminator.leaky_slope] {
            if !(0.0..1.0).contains(&s) {
                return Err(NnError::Config(format!("leaky slope {s} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Canonical text form; its digest identifies compatible checkpoints.
    pub fn canonical(&self) -> String {
        format!(
            "fingergan-net v1 patch={} g.base={} g.slope={} d.base={} d.slope={}",
            self.patch_size,
            self.generator.base_channels,
            self.generator.leaky_slope,
            self.discriminator.base_channels,
            self.discriminator.leaky_slope
        )
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }
}

fn conv_params(k: usize, cin: usize, cout: usize) -> usize {
    k * k * cin * cout + cout
}

/// Learnable parameters of `conv + batch norm`.
fn block_params(k: usize, cin: usize, cout: usize) -> usize {
    conv_params(k, cin, cout) + 2 * cout
}

pub fn count_generator_parameters(spec: &GeneratorSpec) -> usize {
    let c = spec.base_channels;
    let mut total = block_params(3, 1, c) + block_params(3, c, c);
    let mut ch = c;
    for _ in 0..3 {
        total += block_params(2, ch, 2 * ch) + block_params(3, 2 * ch, 2 * ch);
        ch *= 2;
    }
    total += block_params(2, ch, 2 * ch);
    for _ in 0..4 {
        // up-convolution to ch, then 3x3 over [up ‖ skip]
        total += block_params(2, 2 * ch, ch) + block_params(3, 2 * ch, ch);
        ch /= 2;
    }
    total + block_params(3, c, 1)
}

pub fn count_discriminator_parameters(spec: &DiscriminatorSpec) -> usize {
    let c = spec.base_channels;
    let widths = [c, c, 2 * c, 2 * c, 4 * c, 4 * c];
    let mut cin = 2;
    let mut total = 0;
    for &w in &widths {
        total += block_params(4, cin, w);
        cin = w;
    }
    total + block_params(3, cin, 1)
}

/// `(generator, discriminator)` learnable parameter counts.
pub fn count_parameters(spec: &NetworkSpec) -> (usize, usize) {
    (
        count_generator_parameters(&spec.generator),
        count_discriminator_parameters(&spec.discriminator),
    )
}

/// Shared visitor plumbing for the two networks.
pub trait Network {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param));
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Buffer));

    fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    fn parameter_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }

    /// Flattened copy of all parameters and buffers (for equality checks).
    fn snapshot(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.extend_from_slice(&p.value));
        self.visit_buffers(&mut |b| out.extend_from_slice(&b.value));
        out
    }
}

pub struct Generator {
    encoder: Vec<Sequential>,
    up: Vec<Sequential>,
    fuse: Vec<Sequential>,
    head: Sequential,
    skip_channels: Vec<usize>,
    /// Per-skip switch (C1..C4); a disabled skip feeds zeros.
    pub skips_enabled: [bool; 4],
    trace: Vec<(String, [usize; 4])>,
}

impl Generator {
    pub fn new(spec: &GeneratorSpec, rng: &mut RandomSource) -> Self {
        let (c, s) = (spec.base_channels, spec.leaky_slope);
        let mut encoder = vec![Sequential::new()
            .conv_block("g.c1.1", 1, c, 3, 1, 1, s, rng)
            .conv_block("g.c1.2", c, c, 3, 1, 1, s, rng)];
        let mut ch = c;
        for i in 2..=4 {
            encoder.push(
                Sequential::new()
                    .conv_block(&format!("g.c{i}.1"), ch, 2 * ch, 2, 2, 0, s, rng)
                    .conv_block(&format!("g.c{i}.2"), 2 * ch, 2 * ch, 3, 1, 1, s, rng),
            );
            ch *= 2;
        }
        encoder.push(Sequential::new().conv_block("g.c5.1", ch, 2 * ch, 2, 2, 0, s, rng));
        let skip_channels = vec![c, 2 * c, 4 * c, 8 * c];
        let (mut up, mut fuse) = (Vec::new(), Vec::new());
        for i in 1..=4 {
            let name = format!("g.dc{i}.1");
            up.push(
                Sequential::new()
                    .push(UpConv2x2::new(&format!("{name}.upconv"), 2 * ch, ch, rng))
                    .push(BatchNorm2d::new(&format!("{name}.bn"), ch))
                    .push(LeakyRelu::new(s)),
            );
            fuse.push(Sequential::new().conv_block(&format!("g.dc{i}.2"), 2 * ch, ch, 3, 1, 1, s, rng));
            ch /= 2;
        }
        let head = Sequential::new()
            .push(Conv2d::new("g.dc5.1.conv", c, 1, 3, 1, 1, rng))
            .push(BatchNorm2d::new("g.dc5.1.bn", 1))
            .push(Sigmoid::default());
        Self {
            encoder,
            up,
            fuse,
            head,
            skip_channels,
            skips_enabled: [true; 4],
            trace: Vec::new(),
        }
    }

    /// Block output shapes of the last forward pass, in execution order.
    pub fn trace(&self) -> &[(String, [usize; 4])] {
        &self.trace
    }

    /// `[n, 1, h, w]` patches in `[0, 1]` to `[n, 1, h, w]` maps in `(0, 1)`.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [_, c, h, w] = x.shape();
        let unit = 1 << DOWNSAMPLES;
        if c != 1 || h == 0 || w == 0 || h % unit != 0 || w % unit != 0 {
            return Err(NnError::Shape(format!(
                "generator input must be [n, 1, h, w] with h, w multiples of {unit}; got {:?}",
                x.shape()
            )));
        }
        self.trace.clear();
        let mut skips = Vec::with_capacity(4);
        let mut hcur = x.clone();
        for (i, block) in self.encoder.iter_mut().enumerate() {
            hcur = block.forward(&hcur, mode)?;
            self.trace.push((format!("C{}", i + 1), hcur.shape()));
            if i < 4 {
                skips.push(hcur.clone());
            }
        }
        for k in 0..4 {
            let u = self.up[k].forward(&hcur, mode)?;
            let si = 3 - k;
            let skip = if self.skips_enabled[si] {
                skips[si].clone()
            } else {
                Tensor::zeros(skips[si].shape())
            };
            let cat = Tensor::concat_channels(&[&u, &skip])?;
            hcur = self.fuse[k].forward(&cat, mode)?;
            self.trace.push((format!("DC{}", k + 1), hcur.shape()));
        }
        let out = self.head.forward(&hcur, mode)?;
        self.trace.push(("DC5".into(), out.shape()));
        Ok(out)
    }

    /// Backpropagates `d loss / d output`, accumulating parameter gradients.
    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let mut g = self.head.backward(dy);
        let mut dskips: Vec<Option<Tensor>> = vec![None, None, None, None];
        for k in (0..4).rev() {
            let si = 3 - k;
            let dcat = self.fuse[k].backward(&g);
            let up_c = dcat.channels() - self.skip_channels[si];
            let mut parts = dcat.split_channels(&[up_c, self.skip_channels[si]]);
            let dskip = parts.pop().expect("two parts");
            if self.skips_enabled[si] {
                dskips[si] = Some(dskip);
            }
            g = self.up[k].backward(&parts[0]);
        }
        for i in (0..5).rev() {
            if i < 4 {
                if let Some(ds) = dskips[i].take() {
                    g.add_assign(&ds);
                }
            }
            g = self.encoder[i].backward(&g);
        }
        g
    }
}

impl Network for Generator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for s in self.encoder.iter_mut().chain(self.up.iter_mut().zip(self.fuse.iter_mut()).flat_map(|(a, b)| [a, b])) {
            s.visit_params(f);
        }
        self.head.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Buffer)) {
        for s in self.encoder.iter_mut().chain(self.up.iter_mut().zip(self.fuse.iter_mut()).flat_map(|(a, b)| [a, b])) {
            s.visit_buffers(f);
        }
        self.head.visit_buffers(f);
    }
}

pub struct Discriminator {
    body: Sequential,
    head: Sequential,
    patch_size: usize,
}

impl Discriminator {
    /// Built for `patch_size` inputs: the final 3x3 convolution is valid
    /// when the body output is at least 3x3 and same-padded otherwise.
    pub fn new(spec: &DiscriminatorSpec, patch_size: usize, rng: &mut RandomSource) -> Self {
        let (c, s) = (spec.base_channels, spec.leaky_slope);
        let widths = [c, c, 2 * c, 2 * c, 4 * c, 4 * c];
        let mut body = Sequential::new();
        let mut cin = 2;
        let mut size = patch_size;
        for (i, &w) in widths.iter().enumerate() {
            body = body.conv_block(&format!("d.c{}", i + 1), cin, w, 4, 2, 1, s, rng);
            cin = w;
            size /= 2;
        }
        let pad = if size >= 3 { 0 } else { 1 };
        let head = Sequential::new()
            .push(Conv2d::new("d.c7.conv", cin, 1, 3, 1, pad, rng))
            .push(BatchNorm2d::new("d.c7.bn", 1))
            .push(SpatialMean::default())
            .push(Sigmoid::default());
        Self {
            body,
            head,
            patch_size,
        }
    }

    /// `[n, 2, p, p]` (skeleton-like map, encoded orientation) to `[n, 1, 1, 1]`
    /// scores in `(0, 1)`.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [_, c, h, w] = x.shape();
        if c != 2 || h != self.patch_size || w != self.patch_size {
            return Err(NnError::Shape(format!(
                "discriminator expects [n, 2, {p}, {p}], got {:?}",
                x.shape(),
                p = self.patch_size
            )));
        }
        let f = self.body.forward(x, mode)?;
        self.head.forward(&f, mode)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let g = self.head.backward(dy);
        self.body.backward(&g)
    }
}

impl Network for Discriminator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.body.visit_params(f);
        self.head.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Buffer)) {
        self.body.visit_buffers(f);
        self.head.visit_buffers(f);
    }
}

/// Stacks a skeleton-like map and an encoded orientation into the
/// discriminator's two-channel input.
pub fn discriminator_input(skeleton: &Tensor, orientation: &Tensor) -> Result<Tensor> {
    Tensor::concat_channels(&[skeleton, orientation])
}
