//! Model weights: the SVW1 container and the seeded generator.
//!
//! SVW1 layout: the 8-byte magic `SVW1\0\0\0\0`, a little-endian `u32` header
//! length, a UTF-8 header with one `name rank dim0 dim1 ...` line per tensor,
//! then every tensor's values as little-endian `f32`, in header order.

use std::fmt::Write as _;

use crate::config::{MergeMode, ModelConfig};
use crate::error::{Error, Result};
use crate::patch_embed::StemWeights;
use crate::rng::XorShift64Star;
use crate::traversal::MergeWeights;

use super::block::BlockWeights;
use super::selective::S6Weights;

pub const SVW1_MAGIC: &[u8; 8] = b"SVW1\0\0\0\0";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Self {
        Self { name: name.into(), dims, data }
    }
}

pub fn write_svw1(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut header = String::new();
    for t in tensors {
        if t.name.is_empty() || t.name.contains(char::is_whitespace) {
            return Err(Error::arg(format!("tensor name {:?} must be non-empty without whitespace", t.name)));
        }
        if t.dims.iter().product::<usize>() != t.data.len() {
            return Err(Error::shape(format!("{}: dims {:?} vs {} values", t.name, t.dims, t.data.len())));
        }
        let _ = write!(header, "{} {}", t.name, t.dims.len());
        for d in &t.dims {
            let _ = write!(header, " {d}");
        }
        header.push('\n');
    }
    let len = u32::try_from(header.len()).map_err(|_| Error::arg("SVW1 header too large"))?;
    let mut out = Vec::with_capacity(12 + header.len() + 4 * tensors.iter().map(|t| t.data.len()).sum::<usize>());
    out.extend_from_slice(SVW1_MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for t in tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_svw1(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    if bytes.len() < 12 || &bytes[..8] != SVW1_MAGIC {
        return Err(Error::parse(0, "missing SVW1 magic"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let header = bytes.get(12..12 + len).ok_or_else(|| Error::parse(8, "header length exceeds file"))?;
    let header = std::str::from_utf8(header).map_err(|e| Error::parse(12 + e.valid_up_to(), "header is not UTF-8"))?;
    let mut offset = 12 + len;
    let mut line_start = 12;
    let mut tensors = Vec::new();
    for line in header.split_terminator('\n') {
        let bad = |msg: &str| Error::parse(line_start, format!("{msg} in header line {line:?}"));
        let mut fields = line.split(' ');
        let name = fields.next().filter(|n| !n.is_empty()).ok_or_else(|| bad("empty name"))?;
        let rank: usize = fields.next().and_then(|r| r.parse().ok()).ok_or_else(|| bad("bad rank"))?;
        let dims: Vec<usize> = fields.map(|d| d.parse().map_err(|_| bad("bad dimension"))).collect::<Result<_>>()?;
        if dims.len() != rank {
            return Err(bad("rank does not match dimension count"));
        }
        let count: usize = dims.iter().product();
        let payload = bytes
            .get(offset..offset + 4 * count)
            .ok_or_else(|| Error::parse(offset, format!("payload of {name} is truncated")))?;
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        tensors.push(NamedTensor::new(name, dims, data));
        offset += 4 * count;
        line_start += line.len() + 1;
    }
    if offset != bytes.len() {
        return Err(Error::parse(offset, format!("{} trailing bytes", bytes.len() - offset)));
    }
    Ok(tensors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub stem: StemWeights,
    /// `layers[l][b]` is block `b` of stage `l`.
    pub layers: Vec<Vec<BlockWeights>>,
    /// `C x classes`
    pub head_weight: Vec<f32>,
    pub head_bias: Vec<f32>,
}

/// Every weight tensor of `cfg` in canonical order as `(name, dims)`.
pub fn tensor_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (c, n, p) = (cfg.channels, cfg.state, cfg.patch);
    let mut out = vec![
        ("stem.projection".to_string(), vec![p * p * cfg.in_channels, c]),
        ("stem.bias".to_string(), vec![c]),
    ];
    let probe = S6Weights::zeros(c, n);
    for (l, &blocks) in cfg.layout.iter().enumerate() {
        for b in 0..blocks {
            for t in 0..2 * cfg.m {
                for (name, rows, cols, _) in probe.tensors() {
                    let dims = if rows == 1 { vec![cols] } else { vec![rows, cols] };
                    out.push((format!("layer{l}.block{b}.scan{t}.{name}"), dims));
                }
            }
            if cfg.merge_mode == MergeMode::ConcatProj {
                out.push((format!("layer{l}.block{b}.merge.weight"), vec![2 * cfg.m * c, c]));
                out.push((format!("layer{l}.block{b}.merge.bias"), vec![c]));
            }
        }
    }
    out.push(("head.weight".to_string(), vec![c, cfg.classes]));
    out.push(("head.bias".to_string(), vec![cfg.classes]));
    out
}

impl ModelWeights {
    /// Deterministic weights for `cfg`, drawn in [`tensor_layout`] order from
    /// one xorshift64* stream seeded with `seed`:
    ///
    /// - every matrix: uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// - `b_delta`: `softplus^-1(d)` with `log d` uniform in `[log 1e-3, log 1e-1)`
    /// - `a_log[i] = ln(i + 1)`, no draw
    /// - every other bias: zero, no draw
    pub fn seeded(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = XorShift64Star::new(seed);
        let tensors: Vec<NamedTensor> = tensor_layout(cfg)
            .into_iter()
            .map(|(name, dims)| {
                let count: usize = dims.iter().product();
                let data = if name.ends_with(".b_delta") {
                    let (lo, hi) = (1e-3f64.ln(), 1e-1f64.ln());
                    (0..count).map(|_| (lo + (hi - lo) * rng.next_f64()).exp().exp_m1().ln() as f32).collect()
                } else if name.ends_with(".a_log") {
                    (0..count).map(|i| ((i + 1) as f64).ln() as f32).collect()
                } else if dims.len() == 2 {
                    let scale = 1.0 / (dims[0] as f64).sqrt();
                    (0..count).map(|_| rng.symmetric(scale) as f32).collect()
                } else {
                    vec![0.0; count]
                };
                NamedTensor::new(name, dims, data)
            })
            .collect();
        Self::from_tensors(cfg, tensors)
    }

    /// Assembles weights from tensors that follow [`tensor_layout`] exactly.
    pub fn from_tensors(cfg: &ModelConfig, tensors: Vec<NamedTensor>) -> Result<Self> {
        let layout = tensor_layout(cfg);
        if tensors.len() != layout.len() {
            return Err(Error::shape(format!("{} tensors, config needs {}", tensors.len(), layout.len())));
        }
        for (t, (name, dims)) in tensors.iter().zip(&layout) {
            if &t.name != name || &t.dims != dims {
                return Err(Error::shape(format!("found {} {:?}, expected {name} {dims:?}", t.name, t.dims)));
            }
        }
        let mut it = tensors.into_iter().map(|t| t.data);
        let mut next = || it.next().expect("length checked");
        let (c, n, m) = (cfg.channels, cfg.state, cfg.m);
        let stem = StemWeights::new(cfg.patch, cfg.in_channels, c, next(), next())?;
        let mut layers = Vec::with_capacity(cfg.layout.len());
        for &blocks in &cfg.layout {
            let mut layer = Vec::with_capacity(blocks);
            for _ in 0..blocks {
                let scans = (0..2 * m)
                    .map(|_| {
                        let mut s = S6Weights::zeros(c, n);
                        for slot in s.tensors_mut() {
                            *slot = next();
                        }
                        s.validate().map(|_| s)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let merge = match cfg.merge_mode {
                    MergeMode::ConcatProj => MergeWeights::Projection { weight: next(), bias: next() },
                    MergeMode::Sum => MergeWeights::Sum,
                    MergeMode::Mean => MergeWeights::Mean,
                };
                layer.push(BlockWeights { scans, merge });
            }
            layers.push(layer);
        }
        let head_weight = next();
        let head_bias = next();
        Ok(Self { stem, layers, head_weight, head_bias })
    }

    /// Tensors in [`tensor_layout`] order.
    pub fn to_tensors(&self, cfg: &ModelConfig) -> Vec<NamedTensor> {
        let mut data: Vec<Vec<f32>> = vec![self.stem.projection.clone(), self.stem.bias.clone()];
        for layer in &self.layers {
            for block in layer {
                for s in &block.scans {
                    data.extend(s.tensors().into_iter().map(|(_, _, _, v)| v.clone()));
                }
                if let MergeWeights::Projection { weight, bias } = &block.merge {
                    data.push(weight.clone());
                    data.push(bias.clone());
                }
            }
        }
        data.push(self.head_weight.clone());
        data.push(self.head_bias.clone());
        tensor_layout(cfg).into_iter().zip(data).map(|((name, dims), d)| NamedTensor::new(name, dims, d)).collect()
    }

    pub fn load(cfg: &ModelConfig, bytes: &[u8]) -> Result<Self> {
        Self::from_tensors(cfg, read_svw1(bytes)?)
    }

    pub fn save(&self, cfg: &ModelConfig) -> Result<Vec<u8>> {
        write_svw1(&self.to_tensors(cfg))
    }
}
