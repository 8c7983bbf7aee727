//! Multi-scale feature cache recorded during inversion, and slerp blending
//! of two caches for a given morph weight.
//!
//! Entries are keyed per block within a stage; residual injection happens
//! per block, so aggregating to whole stages would lose the shapes.

mod file;

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::slerp_vec;

pub use file::{decode_bytes, encode_bytes, load_cache, save_cache, MAGIC, VERSION};

/// U-Net stage. Ordering is forward order: down, mid, up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    D,
    M,
    U,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::D, Stage::M, Stage::U];

    pub(crate) fn code(self) -> u8 {
        match self {
            Stage::D => 0,
            Stage::M => 1,
            Stage::U => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Stage> {
        match c {
            0 => Some(Stage::D),
            1 => Some(Stage::M),
            2 => Some(Stage::U),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StageId {
    pub stage: Stage,
    pub block: usize,
}

impl StageId {
    pub const fn new(stage: Stage, block: usize) -> Self {
        Self { stage, block }
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.stage, self.block)
    }
}

/// (channels, height, width)
pub type FeatureShape = [usize; 3];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct EntryKey {
    pub stage: StageId,
    pub t: usize,
    pub image_id: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureCache {
    shapes: BTreeMap<StageId, FeatureShape>,
    entries: BTreeMap<EntryKey, Array3<f32>>,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cache with a shape table fixed up front (usually from a backend
    /// descriptor).
    pub fn with_shapes(shapes: impl IntoIterator<Item = (StageId, FeatureShape)>) -> Self {
        Self {
            shapes: shapes.into_iter().collect(),
            entries: BTreeMap::new(),
        }
    }

    pub fn shapes(&self) -> &BTreeMap<StageId, FeatureShape> {
        &self.shapes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn put(&mut self, image_id: &str, stage: StageId, t: usize, feature: Array3<f32>) -> Result<()> {
        let dim = feature.dim();
        let shape = [dim.0, dim.1, dim.2];
        match self.shapes.get(&stage) {
            Some(expected) if *expected != shape => {
                return Err(Error::shape(format!("{stage}: expected {expected:?}, got {shape:?}")))
            }
            Some(_) => {}
            None => {
                self.shapes.insert(stage, shape);
            }
        }
        let key = EntryKey {
            stage,
            t,
            image_id: image_id.to_owned(),
        };
        if self.entries.contains_key(&key) {
            return Err(Error::Conflict(format!(
                "entry ({image_id}, {stage}, t={t}) already present"
            )));
        }
        self.entries.insert(key, feature);
        Ok(())
    }

    pub fn get(&self, image_id: &str, stage: StageId, t: usize) -> Option<&Array3<f32>> {
        self.entries.get(&EntryKey {
            stage,
            t,
            image_id: image_id.to_owned(),
        })
    }

    fn require(&self, image_id: &str, stage: StageId, t: usize) -> Result<&Array3<f32>> {
        self.get(image_id, stage, t)
            .ok_or_else(|| Error::NotFound(format!("({image_id}, {stage}, t={t})")))
    }

    /// Iterates entries in (stage, block, t, image) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, StageId, usize, &Array3<f32>)> {
        self.entries.iter().map(|(k, v)| (k.image_id.as_str(), k.stage, k.t, v))
    }

    pub fn image_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.entries.keys().map(|k| k.image_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn timesteps(&self) -> Vec<usize> {
        let mut ts: Vec<usize> = self.entries.keys().map(|k| k.t).collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }

    /// Verifies that every (stage, t) pair is present for `image_id`.
    pub fn check_complete(&self, image_id: &str, timesteps: &[usize]) -> Result<()> {
        if self.shapes.is_empty() {
            return Err(Error::NotFound(format!("cache for {image_id} is empty")));
        }
        for stage in self.shapes.keys() {
            for &t in timesteps {
                self.require(image_id, *stage, t)?;
            }
        }
        Ok(())
    }
}

/// Blended cache values for one morph index at one inversion timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendedCache {
    pub alpha: f64,
    pub t: usize,
    pub values: BTreeMap<StageId, Array3<f64>>,
}

/// Slerps `H_S(A, t)` and `H_S(B, t)` over their flattened features for
/// every stage in the shape table. A side that is identically zero has no
/// direction, so that stage falls back to linear interpolation.
pub fn blend_cache(
    cache_a: &FeatureCache,
    id_a: &str,
    cache_b: &FeatureCache,
    id_b: &str,
    alpha: f64,
    t: usize,
) -> Result<BlendedCache> {
    if cache_a.shapes != cache_b.shapes {
        return Err(Error::shape("caches have different shape tables"));
    }
    let mut values = BTreeMap::new();
    for (&stage, shape) in &cache_a.shapes {
        let fa = cache_a.require(id_a, stage, t)?;
        let fb = cache_b.require(id_b, stage, t)?;
        let va: Vec<f64> = fa.iter().map(|&x| f64::from(x)).collect();
        let vb: Vec<f64> = fb.iter().map(|&x| f64::from(x)).collect();
        let zero = |v: &[f64]| v.iter().all(|&x| x == 0.0);
        let out = if zero(&va) || zero(&vb) {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
            }
            va.iter().zip(&vb).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect()
        } else {
            slerp_vec(&va, &vb, alpha)?
        };
        let arr =
            Array3::from_shape_vec((shape[0], shape[1], shape[2]), out).map_err(|e| Error::shape(e.to_string()))?;
        values.insert(stage, arr);
    }
    Ok(BlendedCache { alpha, t, values })
}
