//! Binary checkpoint container.
//!
//! Layout: the magic bytes `P2TJ`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the UTF-8 header, then the tensor
//! payload as little-endian `f64`. The header is canonical `key=value` text:
//! configuration, metrics log and a tensor directory whose offsets are byte
//! positions within the payload.

use std::fmt::Write as _;
use std::io::{Read, Write};

use super::{EpochMetrics, TrainConfig, TrainError};
use crate::autodiff::{AdamState, Tensor};
use crate::config::parse_pairs;
use crate::model::{Model, ModelConfig, ParamSet};

pub const MAGIC: &[u8; 4] = b"P2TJ";
pub const FORMAT_VERSION: u32 = 1;

/// A trained model with everything needed to resume or reproduce it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub params: ParamSet,
    pub adam: Option<AdamState>,
    pub epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model, TrainError> {
        Ok(Model::from_params(self.model_config.clone(), self.params.clone())?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        save_checkpoint(self, &mut out).expect("writing to memory");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        load_checkpoint(bytes)
    }
}

/// One entry of the tensor directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectoryEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
    /// Byte length of the segment.
    pub len: usize,
}

fn shape_text(shape: &[usize]) -> String {
    shape
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

fn collect_tensors(c: &Checkpoint) -> Vec<(String, Vec<usize>, &[f64])> {
    let mut out: Vec<(String, Vec<usize>, &[f64])> = c
        .params
        .iter()
        .map(|(n, t)| (n.to_string(), t.shape().to_vec(), t.data()))
        .collect();
    if let Some(a) = &c.adam {
        for ((n, t), m) in c.params.iter().zip(&a.m) {
            out.push((format!("adam.m.{n}"), t.shape().to_vec(), m));
        }
        for ((n, t), v) in c.params.iter().zip(&a.v) {
            out.push((format!("adam.v.{n}"), t.shape().to_vec(), v));
        }
    }
    out
}

fn header_text(c: &Checkpoint, tensors: &[(String, Vec<usize>, &[f64])]) -> String {
    let mut h = String::new();
    writeln!(h, "format_version={}", c.format_version).unwrap();
    writeln!(h, "epoch={}", c.epoch).unwrap();
    for (k, v) in c.model_config.to_pairs() {
        writeln!(h, "model.{k}={v}").unwrap();
    }
    for (k, v) in c.train_config.to_pairs() {
        writeln!(h, "train.{k}={v}").unwrap();
    }
    for m in &c.metrics {
        let val = m.val_mse.map(|v| v.to_string()).unwrap_or_default();
        writeln!(h, "metrics.{}={},{}", m.epoch, m.train_mse, val).unwrap();
    }
    match &c.adam {
        Some(a) => writeln!(h, "adam.step_count={}", a.step_count).unwrap(),
        None => writeln!(h, "adam.step_count=none").unwrap(),
    }
    let mut offset = 0;
    for (i, (name, shape, data)) in tensors.iter().enumerate() {
        let len = data.len() * 8;
        writeln!(
            h,
            "tensor.{i}={name} shape={} offset={offset} len={len}",
            shape_text(shape)
        )
        .unwrap();
        offset += len;
    }
    h
}

pub fn save_checkpoint<W: Write>(c: &Checkpoint, mut sink: W) -> Result<(), TrainError> {
    let tensors = collect_tensors(c);
    let header = header_text(c, &tensors);
    sink.write_all(MAGIC)?;
    sink.write_all(&c.format_version.to_le_bytes())?;
    sink.write_all(&(header.len() as u64).to_le_bytes())?;
    sink.write_all(header.as_bytes())?;
    let mut buf = Vec::new();
    for (_, _, data) in &tensors {
        buf.clear();
        buf.reserve(data.len() * 8);
        for x in *data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        sink.write_all(&buf)?;
    }
    Ok(())
}

fn bad_header(msg: impl Into<String>) -> TrainError {
    TrainError::BadHeader(msg.into())
}

fn parse_entry(text: &str) -> Result<DirectoryEntry, TrainError> {
    let mut parts = text.split(' ');
    let name = parts.next().filter(|s| !s.is_empty()).ok_or_else(|| bad_header(text))?;
    let mut shape = None;
    let mut offset = None;
    let mut len = None;
    for p in parts {
        let (k, v) = p.split_once('=').ok_or_else(|| bad_header(text))?;
        match k {
            "shape" => {
                shape = Some(
                    v.split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| bad_header(text))?,
                )
            }
            "offset" => offset = Some(v.parse().map_err(|_| bad_header(text))?),
            "len" => len = Some(v.parse().map_err(|_| bad_header(text))?),
            _ => return Err(bad_header(text)),
        }
    }
    match (shape, offset, len) {
        (Some(shape), Some(offset), Some(len)) => Ok(DirectoryEntry {
            name: name.to_string(),
            shape,
            offset,
            len,
        }),
        _ => Err(bad_header(text)),
    }
}

/// Reads magic, version and header without touching the payload.
pub fn read_header(bytes: &[u8]) -> Result<(String, usize), TrainError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(TrainError::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(TrainError::TruncatedPayload {
            expected: 16,
            found: bytes.len(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(TrainError::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let end = 16usize.checked_add(hlen).ok_or_else(|| bad_header("header length"))?;
    if bytes.len() < end {
        return Err(TrainError::TruncatedPayload {
            expected: end,
            found: bytes.len(),
        });
    }
    let text = std::str::from_utf8(&bytes[16..end]).map_err(|_| bad_header("not UTF-8"))?;
    Ok((text.to_string(), end))
}

/// The tensor directory of a serialized checkpoint.
pub fn read_directory(bytes: &[u8]) -> Result<Vec<DirectoryEntry>, TrainError> {
    let (text, _) = read_header(bytes)?;
    let pairs = parse_pairs(&text).map_err(|e| bad_header(e.to_string()))?;
    pairs
        .iter()
        .filter(|(k, _)| k.starts_with("tensor."))
        .map(|(_, v)| parse_entry(v))
        .collect()
}

pub fn load_checkpoint<R: Read>(mut source: R) -> Result<Checkpoint, TrainError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let (text, payload_start) = read_header(&bytes)?;
    let payload = &bytes[payload_start..];
    let pairs = parse_pairs(&text).map_err(|e| bad_header(e.to_string()))?;

    let mut model_config = ModelConfig::default();
    let mut train_config = TrainConfig::default();
    let mut epoch = None;
    let mut metrics = Vec::new();
    let mut step_count: Option<Option<u64>> = None;
    let mut dir = Vec::new();
    for (k, v) in &pairs {
        if let Some(key) = k.strip_prefix("model.") {
            if !model_config.set(key, v).map_err(|e| bad_header(e.to_string()))? {
                return Err(bad_header(format!("unknown key {k}")));
            }
        } else if let Some(key) = k.strip_prefix("train.") {
            if !train_config.set(key, v).map_err(|e| bad_header(e.to_string()))? {
                return Err(bad_header(format!("unknown key {k}")));
            }
        } else if let Some(e) = k.strip_prefix("metrics.") {
            let e: usize = e.parse().map_err(|_| bad_header(k.clone()))?;
            let (t, val) = v.split_once(',').ok_or_else(|| bad_header(v.clone()))?;
            metrics.push(EpochMetrics {
                epoch: e,
                train_mse: t.parse().map_err(|_| bad_header(v.clone()))?,
                val_mse: if val.is_empty() {
                    None
                } else {
                    Some(val.parse().map_err(|_| bad_header(v.clone()))?)
                },
            });
        } else if k.starts_with("tensor.") {
            dir.push(parse_entry(v)?);
        } else {
            match k.as_str() {
                "format_version" => {}
                "epoch" => epoch = Some(v.parse().map_err(|_| bad_header(v.clone()))?),
                "adam.step_count" => {
                    step_count = Some(if v == "none" {
                        None
                    } else {
                        Some(v.parse().map_err(|_| bad_header(v.clone()))?)
                    })
                }
                _ => return Err(bad_header(format!("unknown key {k}"))),
            }
        }
    }
    let epoch = epoch.ok_or_else(|| bad_header("missing epoch"))?;
    let step_count = step_count.ok_or_else(|| bad_header("missing adam.step_count"))?;

    let mut expected_offset = 0;
    let mut values = Vec::with_capacity(dir.len());
    for e in &dir {
        let numel: usize = e.shape.iter().product();
        if numel * 8 != e.len || e.offset != expected_offset {
            return Err(TrainError::ShapeDirectoryMismatch(format!(
                "{} shape {:?} offset {} len {}",
                e.name, e.shape, e.offset, e.len
            )));
        }
        expected_offset += e.len;
        if payload.len() < e.offset + e.len {
            return Err(TrainError::TruncatedPayload {
                expected: payload_start + e.offset + e.len,
                found: bytes.len(),
            });
        }
        let data: Vec<f64> = payload[e.offset..e.offset + e.len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        values.push(data);
    }
    if payload.len() != expected_offset {
        return Err(TrainError::ShapeDirectoryMismatch(format!(
            "payload has {} bytes, directory covers {expected_offset}",
            payload.len()
        )));
    }

    let n_params = match step_count {
        Some(_) => dir.len() / 3,
        None => dir.len(),
    };
    if step_count.is_some() && dir.len() % 3 != 0 {
        return Err(TrainError::ShapeDirectoryMismatch(
            "optimizer state does not cover every parameter".into(),
        ));
    }
    let mut values = values.into_iter();
    let mut names = Vec::with_capacity(n_params);
    let mut tensors = Vec::with_capacity(n_params);
    for e in &dir[..n_params] {
        names.push(e.name.clone());
        tensors.push(Tensor::new(e.shape.clone(), values.next().unwrap())?);
    }
    let adam = match step_count {
        Some(step_count) => {
            for (i, e) in dir[n_params..].iter().enumerate() {
                let (prefix, p) = if i < n_params {
                    ("adam.m.", &dir[i])
                } else {
                    ("adam.v.", &dir[i - n_params])
                };
                if e.name != format!("{prefix}{}", p.name) || e.shape != p.shape {
                    return Err(TrainError::ShapeDirectoryMismatch(format!(
                        "optimizer entry {} does not match parameter {}",
                        e.name, p.name
                    )));
                }
            }
            let m: Vec<Vec<f64>> = values.by_ref().take(n_params).collect();
            let v: Vec<Vec<f64>> = values.collect();
            Some(AdamState { step_count, m, v })
        }
        None => None,
    };
    let params = ParamSet::new(names, tensors)?;
    Model::from_params(model_config.clone(), params.clone())
        .map_err(|e| TrainError::ShapeDirectoryMismatch(e.to_string()))?;
    Ok(Checkpoint {
        format_version: FORMAT_VERSION,
        model_config,
        train_config,
        params,
        adam,
        epoch,
        metrics,
    })
}
