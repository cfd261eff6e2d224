//! Checkpoint file layout (all integers little-endian `u32`):
//!
//! ```text
//! magic        8 bytes  "STGCNCKP"
//! version      u32      currently 1
//! header_len   u32
//! header       UTF-8 `key=value` lines: the model config, `seed`, `epoch`,
//!              then any extra entries (loss weights, ...)
//! blob_count   u32
//! blob*        name_len u32, name (UTF-8), ndim u32, dims u32 * ndim,
//!              values f32 little-endian * prod(dims)
//! ```
//!
//! Blobs are written in parameter order followed by the buffers
//! `norm.mean`, `norm.std` and `layer{l}.bn.running_mean` /
//! `layer{l}.bn.running_var`.

use std::io::{Read, Write};
use std::path::Path;

use super::{InputNorm, Param, RefinerConfig, RefinerModel};
use crate::error::{Error, Result};
use crate::skeleton::SkeletonTopology;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STGCNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub extra: Vec<(String, String)>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_blob(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len());
    for &d in shape {
        put_u32(out, d);
    }
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Serialize `model` and `meta` to bytes.
pub fn write_checkpoint(model: &RefinerModel, meta: &CheckpointMeta) -> Vec<u8> {
    let mut header = String::new();
    for (k, v) in model.config().to_pairs() {
        header.push_str(&format!("{k}={v}\n"));
    }
    header.push_str(&format!("seed={}\nepoch={}\n", model.seed(), meta.epoch));
    for (k, v) in &meta.extra {
        header.push_str(&format!("{k}={v}\n"));
    }

    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION as usize);
    put_u32(&mut out, header.len());
    out.extend_from_slice(header.as_bytes());
    put_u32(&mut out, model.params().len() + 2 + 2 * model.batch_norm_stats().len());
    for p in model.params() {
        put_blob(&mut out, &p.name, &p.shape, &p.data);
    }
    put_blob(&mut out, "norm.mean", &[3], &model.input_norm().mean);
    put_blob(&mut out, "norm.std", &[3], &model.input_norm().std);
    for (l, s) in model.batch_norm_stats().iter().enumerate() {
        put_blob(&mut out, &format!("layer{l}.bn.running_mean"), &[s.mean.len()], &s.mean);
        put_blob(&mut out, &format!("layer{l}.bn.running_var"), &[s.var.len()], &s.var);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::FileShape {
                path: self.path.to_path_buf(),
                detail: format!("truncated at byte {} (need {n} more)", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

/// Parse checkpoint bytes into a model plus its metadata. `path` only
/// labels errors.
pub fn read_checkpoint(bytes: &[u8], topology: &SkeletonTopology, path: &Path) -> Result<(RefinerModel, CheckpointMeta)> {
    let mut cur = Cursor { bytes, pos: 0, path };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let hlen = cur.u32()?;
    let header = std::str::from_utf8(cur.take(hlen)?).map_err(|_| Error::format(path, "header is not UTF-8"))?;

    let mut config = RefinerConfig::default();
    let mut seed = None;
    let mut meta = CheckpointMeta::default();
    for line in header.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("bad header line {line:?}")))?;
        if config.set(k, v)? {
            continue;
        }
        match k {
            "seed" => seed = Some(v.parse().map_err(|_| Error::format(path, "bad seed"))?),
            "epoch" => meta.epoch = v.parse().map_err(|_| Error::format(path, "bad epoch"))?,
            _ => meta.extra.push((k.to_string(), v.to_string())),
        }
    }
    let seed = seed.ok_or_else(|| Error::format(path, "header lacks seed"))?;
    let mut model = RefinerModel::init(config, topology, seed)?;

    let count = cur.u32()?;
    let mut params = Vec::new();
    let mut norm = InputNorm::default();
    let mut bn = model.batch_norm_stats().to_vec();
    for _ in 0..count {
        let nlen = cur.u32()?;
        let name = std::str::from_utf8(cur.take(nlen)?)
            .map_err(|_| Error::format(path, "blob name is not UTF-8"))?
            .to_string();
        let ndim = cur.u32()?;
        let shape = (0..ndim).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = cur.take(4 * n)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let expect3 = |d: &[f64]| -> Result<[f64; 3]> {
            d.try_into().map_err(|_| Error::FileShape {
                path: path.to_path_buf(),
                detail: format!("{name} must have 3 values"),
            })
        };
        if name == "norm.mean" {
            norm.mean = expect3(&data)?;
        } else if name == "norm.std" {
            norm.std = expect3(&data)?;
        } else if let Some((l, field)) = parse_bn_name(&name) {
            let s = bn
                .get_mut(l)
                .ok_or_else(|| Error::format(path, format!("{name}: no such layer")))?;
            let slot = if field == "running_mean" { &mut s.mean } else { &mut s.var };
            if slot.len() != data.len() {
                return Err(Error::FileShape {
                    path: path.to_path_buf(),
                    detail: format!("{name}: {} values, expected {}", data.len(), slot.len()),
                });
            }
            *slot = data;
        } else {
            params.push(Param { name, shape, data });
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::FileShape {
            path: path.to_path_buf(),
            detail: format!("{} trailing bytes", bytes.len() - cur.pos),
        });
    }
    if params.len() != model.params().len() {
        return Err(Error::FileShape {
            path: path.to_path_buf(),
            detail: format!("{} parameter blobs, model has {}", params.len(), model.params().len()),
        });
    }
    model.load_params(params)?;
    model.set_input_norm(norm);
    model.batch_norm_stats_mut().clone_from_slice(&bn);
    Ok((model, meta))
}

fn parse_bn_name(name: &str) -> Option<(usize, &str)> {
    let rest = name.strip_prefix("layer")?;
    let (l, field) = rest.split_once(".bn.")?;
    let l = l.parse().ok()?;
    matches!(field, "running_mean" | "running_var").then_some((l, field))
}

pub fn save_checkpoint(model: &RefinerModel, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = write_checkpoint(model, meta);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, topology: &SkeletonTopology) -> Result<(RefinerModel, CheckpointMeta)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes, topology, path)
}
