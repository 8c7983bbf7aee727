//! Anchor-prompt acquisition (VLM protocol and parser), text embeddings,
//! and the anchor-augmented cross-attention math.

mod attention;
mod embed;
mod vlm;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use attention::{combine_branches, plain_attention, sap_attention, sap_weights, AttentionInputs, BranchCombine};
pub use embed::{anchor_similarity, HashTextEncoder, TextEncoder};
pub use vlm::{
    build_vlm_request, build_vlm_request_from_paths, parse_vlm_response, response_text, VlmClient, VlmRequest,
    ANCHOR_TEMPLATE, LABEL_ANCHOR, LABEL_CAPTION_A, LABEL_CAPTION_B,
};

/// The three texts returned by the VLM. This is also the on-disk triplet
/// JSON written by the `caption` command.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTexts {
    pub anchor: String,
    pub caption_a: String,
    pub caption_b: String,
}

impl PromptTexts {
    pub fn new(anchor: &str, caption_a: &str, caption_b: &str) -> Self {
        Self {
            anchor: anchor.to_owned(),
            caption_a: caption_a.to_owned(),
            caption_b: caption_b.to_owned(),
        }
    }

    /// Same anchor, captions exchanged (for morphing B -> A).
    pub fn mirrored(&self) -> Self {
        Self {
            anchor: self.anchor.clone(),
            caption_a: self.caption_b.clone(),
            caption_b: self.caption_a.clone(),
        }
    }

    pub fn without_anchor(&self) -> Self {
        Self {
            anchor: String::new(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTriplet {
    pub texts: PromptTexts,
    /// Zero rows when the anchor is empty.
    pub e_anc: Array2<f64>,
    pub e_a: Array2<f64>,
    pub e_b: Array2<f64>,
}

impl PromptTriplet {
    pub fn embed(texts: PromptTexts, encoder: &dyn TextEncoder) -> Result<Self> {
        let e_anc = if texts.anchor.trim().is_empty() {
            Array2::zeros((0, encoder.dim()))
        } else {
            encoder.encode(&texts.anchor)?
        };
        Ok(Self {
            e_a: encoder.encode(&texts.caption_a)?,
            e_b: encoder.encode(&texts.caption_b)?,
            e_anc,
            texts,
        })
    }

    pub fn has_anchor(&self) -> bool {
        self.e_anc.nrows() > 0
    }
}
