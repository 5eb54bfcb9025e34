//! Binary checkpoint container.
//!
//! Layout (little endian): magic, format version, spec fields and their
//! SHA-256, iteration, seed, training tag, then named parameter and buffer
//! arrays for both networks and both optimizer states. A SHA-256 of all
//! preceding bytes closes the file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{NnError, Result};
use crate::network::{DiscriminatorSpec, GeneratorSpec, Network, NetworkSpec};
use crate::optim::{Adam, AdamConfig};

const MAGIC: &[u8; 8] = b"FGANCKPT";
pub const FORMAT_VERSION: u32 = 1;

pub type NamedArrays = Vec<(String, Vec<f64>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub iteration: u64,
    pub seed: u64,
    /// Settings that must match for a bit-exact resume.
    pub train_tag: String,
    pub g_params: NamedArrays,
    pub g_buffers: NamedArrays,
    pub d_params: NamedArrays,
    pub d_buffers: NamedArrays,
    pub g_opt: Adam,
    pub d_opt: Adam,
}

pub fn collect(net: &mut dyn Network) -> (NamedArrays, NamedArrays) {
    let (mut p, mut b) = (Vec::new(), Vec::new());
    net.visit_params(&mut |x| p.push((x.name.clone(), x.value.clone())));
    net.visit_buffers(&mut |x| b.push((x.name.clone(), x.value.clone())));
    (p, b)
}

/// Copies named arrays into `net`; every array must be present with the
/// right length.
pub fn restore(net: &mut dyn Network, params: &NamedArrays, buffers: &NamedArrays) -> Result<()> {
    let mut err = None;
    let mut pi = params.iter();
    net.visit_params(&mut |x| match pi.next() {
        Some((name, v)) if *name == x.name && v.len() == x.value.len() => x.value.copy_from_slice(v),
        other => {
            err.get_or_insert(format!(
                "parameter {} does not match stored {:?}",
                x.name,
                other.map(|o| &o.0)
            ));
        }
    });
    let mut bi = buffers.iter();
    net.visit_buffers(&mut |x| match bi.next() {
        Some((name, v)) if *name == x.name && v.len() == x.value.len() => x.value.copy_from_slice(v),
        other => {
            err.get_or_insert(format!(
                "buffer {} does not match stored {:?}",
                x.name,
                other.map(|o| &o.0)
            ));
        }
    });
    if pi.next().is_some() || bi.next().is_some() {
        err.get_or_insert("checkpoint holds extra arrays".into());
    }
    match err {
        Some(e) => Err(NnError::Shape(e)),
        None => Ok(()),
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn floats(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }
    fn arrays(&mut self, a: &NamedArrays) {
        self.u64(a.len() as u64);
        for (name, v) in a {
            self.str(name);
            self.floats(v);
        }
    }
    fn adam(&mut self, o: &Adam) {
        self.f64(o.cfg.lr);
        self.f64(o.cfg.beta1);
        self.f64(o.cfg.beta2);
        self.f64(o.cfg.eps);
        self.u64(o.step);
        self.u64(o.moments.len() as u64);
        for (m, v) in &o.moments {
            self.floats(m);
            self.floats(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        if self.buf.len() - self.pos < n {
            return Err("truncated".into());
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self, unit: usize) -> std::result::Result<usize, String> {
        let n = self.u64()? as usize;
        if n.saturating_mul(unit) > self.buf.len() - self.pos {
            return Err("length field exceeds file".into());
        }
        Ok(n)
    }
    fn str(&mut self) -> std::result::Result<String, String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid utf-8".to_string())
    }
    fn floats(&mut self) -> std::result::Result<Vec<f64>, String> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn arrays(&mut self) -> std::result::Result<NamedArrays, String> {
        let n = self.len(16)?;
        (0..n).map(|_| Ok((self.str()?, self.floats()?))).collect()
    }
    fn adam(&mut self) -> std::result::Result<Adam, String> {
        let cfg = AdamConfig {
            lr: self.f64()?,
            beta1: self.f64()?,
            beta2: self.f64()?,
            eps: self.f64()?,
        };
        let step = self.u64()?;
        let n = self.len(16)?;
        let moments = (0..n)
            .map(|_| Ok((self.floats()?, self.floats()?)))
            .collect::<std::result::Result<_, String>>()?;
        Ok(Adam { cfg, step, moments })
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.0.extend_from_slice(&self.spec.hash());
        w.u64(self.spec.patch_size as u64);
        w.u64(self.spec.generator.base_channels as u64);
        w.f64(self.spec.generator.leaky_slope);
        w.u64(self.spec.discriminator.base_channels as u64);
        w.f64(self.spec.discriminator.leaky_slope);
        w.u64(self.iteration);
        w.u64(self.seed);
        w.str(&self.train_tag);
        w.arrays(&self.g_params);
        w.arrays(&self.g_buffers);
        w.arrays(&self.d_params);
        w.arrays(&self.d_buffers);
        w.adam(&self.g_opt);
        w.adam(&self.d_opt);
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |message: String| NnError::Checkpoint {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(fail("not a checkpoint file".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(fail("content digest mismatch (corrupted file)".into()));
        }
        let mut r = Reader {
            buf: body,
            pos: MAGIC.len(),
        };
        let parse = |r: &mut Reader| -> std::result::Result<Checkpoint, String> {
            let version = r.u32()?;
            if version != FORMAT_VERSION {
                return Err(format!("unsupported format version {version}"));
            }
            let hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
            let spec = NetworkSpec {
                patch_size: r.u64()? as usize,
                generator: GeneratorSpec {
                    base_channels: r.u64()? as usize,
                    leaky_slope: r.f64()?,
                },
                discriminator: DiscriminatorSpec {
                    base_channels: r.u64()? as usize,
                    leaky_slope: r.f64()?,
                },
            };
            if spec.hash() != hash {
                return Err("stored spec hash does not match stored spec".into());
            }
            Ok(Checkpoint {
                spec,
                iteration: r.u64()?,
                seed: r.u64()?,
                train_tag: r.str()?,
                g_params: r.arrays()?,
                g_buffers: r.arrays()?,
                d_params: r.arrays()?,
                d_buffers: r.arrays()?,
                g_opt: r.adam()?,
                d_opt: r.adam()?,
            })
        };
        let ck = parse(&mut r).map_err(fail)?;
        if r.pos != body.len() {
            return Err(fail("trailing bytes".into()));
        }
        Ok(ck)
    }

    /// Atomic write: temporary file in the same directory, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = temp_path(path);
        let mut f = fs::File::create(&tmp).map_err(|e| NnError::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| NnError::io(&tmp, e))?;
        f.sync_all().map_err(|e| NnError::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, path).map_err(|e| NnError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| NnError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Loads and checks that the checkpoint was written for `expected`.
    pub fn load_for(path: &Path, expected: &NetworkSpec) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.spec.hash() != expected.hash() {
            return Err(NnError::Checkpoint {
                path: path.to_path_buf(),
                message: format!(
                    "spec hash mismatch: file has [{}], expected [{}]",
                    ck.spec.canonical(),
                    expected.canonical()
                ),
            });
        }
        Ok(ck)
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}
