//! `.chimcache` binary layout (all integers little-endian u32 unless noted):
//!
//! ```text
//! magic      8 bytes  "CHIMCACH"
//! version    u32      = 1
//! n_shapes   u32
//!   record   u32 byte length, then: stage u8, block u32, ndim u32, dims u32 * ndim
//! n_images   u32
//!   record   u32 byte length, then: utf-8 image id
//! n_entries  u32
//!   key      image index u32, stage u8, block u32, t u32
//! payload    for each key in (stage, block, t, image) order: f32 LE values
//! ```
//!
//! The file size is therefore the header size plus four bytes per stored
//! element.

use std::fs;
use std::path::Path;

use ndarray::Array3;

use super::{FeatureCache, FeatureShape, Stage, StageId};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CHIMCACH";
pub const VERSION: u32 = 1;

pub fn save_cache(cache: &FeatureCache, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_bytes(cache))?;
    Ok(())
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<FeatureCache> {
    decode_bytes(&fs::read(path)?)
}

fn push_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_bytes(cache: &FeatureCache) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u32(&mut buf, VERSION as usize);

    push_u32(&mut buf, cache.shapes.len());
    for (stage, shape) in &cache.shapes {
        let mut rec = vec![stage.stage.code()];
        push_u32(&mut rec, stage.block);
        push_u32(&mut rec, shape.len());
        for &d in shape {
            push_u32(&mut rec, d);
        }
        push_u32(&mut buf, rec.len());
        buf.extend_from_slice(&rec);
    }

    let ids = cache.image_ids();
    push_u32(&mut buf, ids.len());
    for id in &ids {
        push_u32(&mut buf, id.len());
        buf.extend_from_slice(id.as_bytes());
    }

    push_u32(&mut buf, cache.entries.len());
    for key in cache.entries.keys() {
        let idx = ids.binary_search(&key.image_id).expect("id collected above");
        push_u32(&mut buf, idx);
        buf.push(key.stage.stage.code());
        push_u32(&mut buf, key.stage.block);
        push_u32(&mut buf, key.t);
    }

    for value in cache.entries.values() {
        for x in value.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Corruption(format!(
                "unexpected end of file at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn stage(&mut self) -> Result<Stage> {
        let c = self.u8()?;
        Stage::from_code(c).ok_or_else(|| Error::Corruption(format!("unknown stage code {c}")))
    }
}

pub fn decode_bytes(data: &[u8]) -> Result<FeatureCache> {
    let mut r = Reader { data, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("bad magic, not a .chimcache file".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported version {version}")));
    }

    let mut cache = FeatureCache::new();
    let n_shapes = r.u32()?;
    for _ in 0..n_shapes {
        let len = r.u32()?;
        let mut rec = Reader {
            data: r.take(len)?,
            pos: 0,
        };
        let stage = StageId::new(rec.stage()?, rec.u32()?);
        let ndim = rec.u32()?;
        if ndim != 3 {
            return Err(Error::Format(format!("{stage}: expected 3 dims, got {ndim}")));
        }
        let shape: FeatureShape = [rec.u32()?, rec.u32()?, rec.u32()?];
        if rec.pos != rec.data.len() {
            return Err(Error::Corruption(format!(
                "shape record for {stage} has trailing bytes"
            )));
        }
        cache.shapes.insert(stage, shape);
    }

    let n_images = r.u32()?;
    let mut ids = Vec::with_capacity(n_images.min(1024));
    for _ in 0..n_images {
        let len = r.u32()?;
        let id = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Corruption("image id is not utf-8".into()))?;
        ids.push(id.to_owned());
    }

    let n_entries = r.u32()?;
    let mut keys = Vec::with_capacity(n_entries.min(1 << 16));
    for _ in 0..n_entries {
        let idx = r.u32()?;
        let stage = StageId::new(r.stage()?, r.u32()?);
        let t = r.u32()?;
        let id = ids
            .get(idx)
            .ok_or_else(|| Error::Corruption(format!("image index {idx} out of range")))?;
        keys.push((id.clone(), stage, t));
    }

    for (id, stage, t) in keys {
        let shape = *cache
            .shapes
            .get(&stage)
            .ok_or_else(|| Error::Corruption(format!("no shape recorded for {stage}")))?;
        let n = shape.iter().product::<usize>();
        let raw = r.take(4 * n)?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let arr = Array3::from_shape_vec((shape[0], shape[1], shape[2]), values)
            .map_err(|e| Error::Corruption(e.to_string()))?;
        cache
            .put(&id, stage, t, arr)
            .map_err(|e| Error::Corruption(e.to_string()))?;
    }
    if r.pos != data.len() {
        return Err(Error::Corruption(format!(
            "{} trailing bytes after payload",
            data.len() - r.pos
        )));
    }
    Ok(cache)
}
