//! Backend contract for noise predictors plus the image/latent types that
//! cross it.

mod adapter;
mod toy;

use std::collections::BTreeMap;

use ndarray::{Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::cache::{FeatureShape, Stage, StageId};
use crate::error::{Error, Result};
use crate::prompting::{combine_branches, sap_attention, AttentionInputs, BranchCombine};

pub use adapter::latent_diffusion_768_descriptor;
pub use toy::{ToyBackend, ToyConfig};

/// Latent tensor, (channels, height, width).
pub type Latent = Array3<f64>;

/// Planar image with values in [0, 1], (channels, height, width).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array3<f64>,
}

impl Image {
    pub fn new(pixels: Array3<f64>) -> Result<Self> {
        if pixels.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("image contains non-finite pixels"));
        }
        Ok(Self { pixels })
    }

    pub fn filled(shape: [usize; 3], value: f64) -> Self {
        Self {
            pixels: Array3::from_elem((shape[0], shape[1], shape[2]), value),
        }
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn shape(&self) -> [usize; 3] {
        let (c, h, w) = self.pixels.dim();
        [c, h, w]
    }

    pub fn as_vec(&self) -> Vec<f64> {
        self.pixels.iter().copied().collect()
    }

    /// Rounds every pixel to the nearest 8-bit level.
    pub fn to_u8(&self) -> Array3<u8> {
        self.pixels.mapv(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8)
    }

    pub fn from_u8(px: &Array3<u8>) -> Self {
        Self {
            pixels: px.mapv(|x| f64::from(x) / 255.0),
        }
    }

    /// The image as it will read back after an 8-bit round trip.
    pub fn quantized(&self) -> Self {
        Self::from_u8(&self.to_u8())
    }
}

/// Where SAP is applied among the declared cross-attention sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SapScope {
    #[default]
    AllSites,
    EarlySites,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnSite {
    pub stage: StageId,
    /// Counted as an "early layer" for [`SapScope::EarlySites`].
    pub early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub latent_shape: [usize; 3],
    pub image_shape: [usize; 3],
    pub stage_blocks: BTreeMap<Stage, usize>,
    pub feature_shapes: BTreeMap<StageId, FeatureShape>,
    pub attn_dim: usize,
    pub text_dim: usize,
    pub cross_attn_sites: Vec<AttnSite>,
    pub t_max: usize,
    /// The engine must not call `predict_noise` concurrently when set.
    pub serial: bool,
}

impl BackendDescriptor {
    /// Stage ids in forward order: D ascending, M, U ascending.
    pub fn stage_ids(&self) -> Vec<StageId> {
        let mut ids = Vec::new();
        for stage in Stage::ALL {
            for b in 0..self.stage_blocks.get(&stage).copied().unwrap_or(0) {
                ids.push(StageId::new(stage, b));
            }
        }
        ids
    }

    pub fn validate(&self) -> Result<()> {
        for stage in Stage::ALL {
            if self.stage_blocks.get(&stage).copied().unwrap_or(0) == 0 {
                return Err(Error::invalid(format!("descriptor declares no {stage:?} blocks")));
            }
        }
        for id in self.stage_ids() {
            let shape = self
                .feature_shapes
                .get(&id)
                .ok_or_else(|| Error::invalid(format!("no feature shape for {id}")))?;
            if shape.contains(&0) {
                return Err(Error::invalid(format!("{id} has an empty dimension")));
            }
        }
        if self.attn_dim == 0 || self.text_dim == 0 || self.t_max == 0 {
            return Err(Error::invalid("descriptor dimensions must be positive"));
        }
        Ok(())
    }
}

/// Text conditioning for one call: the two endpoint branches and the
/// frame's weight between them. A single prompt uses the same matrix twice.
#[derive(Debug, Clone, Copy)]
pub struct TextConditioning<'a> {
    pub branch_a: &'a Array2<f64>,
    pub branch_b: &'a Array2<f64>,
    pub alpha: f64,
    pub combine: BranchCombine,
}

impl<'a> TextConditioning<'a> {
    pub fn single(e: &'a Array2<f64>) -> Self {
        Self {
            branch_a: e,
            branch_b: e,
            alpha: 0.0,
            combine: BranchCombine::Linear,
        }
    }
}

/// Anchor rows appended to both branches at cross-attention sites.
#[derive(Debug, Clone, Copy)]
pub struct AnchorOverride<'a> {
    pub anchor: &'a Array2<f64>,
    pub scope: SapScope,
}

pub type FeatureTap<'a> = dyn FnMut(StageId, &Array3<f64>) + 'a;

#[derive(Default)]
pub struct DenoiseHooks<'a> {
    /// Receives every block output (before any residual) in forward order.
    pub feature_tap: Option<&'a mut FeatureTap<'a>>,
    /// Added to the matching block output before it feeds the next block.
    pub residuals: Option<&'a BTreeMap<StageId, Array3<f64>>>,
    pub attn_override: Option<AnchorOverride<'a>>,
}

impl<'a> DenoiseHooks<'a> {
    /// Runs the tap and residual for one block output, in that order.
    pub fn apply(&mut self, stage: StageId, feature: &mut Array3<f64>) -> Result<()> {
        if let Some(tap) = self.feature_tap.as_mut() {
            tap(stage, feature);
        }
        if let Some(r) = self.residuals.and_then(|m| m.get(&stage)) {
            if r.dim() != feature.dim() {
                return Err(Error::shape(format!(
                    "residual for {stage} is {:?}, feature is {:?}",
                    r.dim(),
                    feature.dim()
                )));
            }
            *feature += r;
        }
        Ok(())
    }

    /// Anchor rows to use at `site`, if SAP applies there.
    pub fn anchor_for(&self, site: &AttnSite) -> Option<&'a Array2<f64>> {
        let ov = self.attn_override?;
        if ov.anchor.nrows() == 0 {
            return None;
        }
        match ov.scope {
            SapScope::AllSites => Some(ov.anchor),
            SapScope::EarlySites if site.early => Some(ov.anchor),
            SapScope::EarlySites => None,
        }
    }
}

/// Cross-attention at one site. Each branch attends over its own text rows,
/// plus anchor rows when present; branch outputs are then combined.
pub fn branch_cross_attention(
    q: ArrayView2<'_, f64>,
    w_k: &Array2<f64>,
    w_v: &Array2<f64>,
    text: &TextConditioning<'_>,
    anchor: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    let d = w_k.ncols();
    let (k_anc, v_anc) = match anchor {
        Some(e) => (e.dot(w_k), e.dot(w_v)),
        None => (Array2::zeros((0, d)), Array2::zeros((0, d))),
    };
    let branch = |e: &Array2<f64>| {
        let (k, v) = (e.dot(w_k), e.dot(w_v));
        sap_attention(&AttentionInputs {
            q: q.view(),
            k_x: k.view(),
            v_x: v.view(),
            k_anc: k_anc.view(),
            v_anc: v_anc.view(),
        })
    };
    let a = branch(text.branch_a)?;
    if std::ptr::eq(text.branch_a, text.branch_b) {
        return Ok(a);
    }
    let b = branch(text.branch_b)?;
    combine_branches(&a, &b, text.alpha, text.combine)
}

pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn predict_noise(
        &self,
        latent: &Latent,
        t: usize,
        text: &TextConditioning<'_>,
        hooks: &mut DenoiseHooks<'_>,
    ) -> Result<Latent>;

    fn encode(&self, image: &Image) -> Result<Latent>;

    fn decode(&self, latent: &Latent) -> Result<Image>;
}
